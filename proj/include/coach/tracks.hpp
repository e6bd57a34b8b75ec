#pragma once

#include "coach/geom.hpp"

namespace coach {

/// Open straight along +x from (0,0), sampled every `spacing` meters.
TrackModel make_straight_track(double length, double half_width, double spacing = 2.0);

/// Closed CCW circle of radius R centered at the origin, n distinct points.
TrackModel make_circle_track(double radius, double half_width, std::size_t n);

/// Open track: straight, 90-degree left corner of radius R, straight.
TrackModel make_corner_track(double straight, double radius, double half_width, double spacing = 2.0);

/// Closed CCW rounded rectangle of size width x height with a separate
/// corner radius per corner (bottom-right, top-right, top-left, bottom-left).
TrackModel make_rounded_rectangle(double width, double height, const double (&radii)[4], double half_width,
                                  double spacing = 2.0);

/// The built-in circuit used by the track dataset and the demos: long
/// straights, three corners tighter than 100 m and one fast sweeper.
TrackModel make_demo_circuit();

}  // namespace coach
