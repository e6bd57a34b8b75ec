#pragma once

#include "coach/geom.hpp"

#include <vector>

namespace coach {

struct RacelineSolverConfig {
    double margin = 1.0;    ///< meters kept clear of each edge
    int max_iters = 20000;
    double step = 0.05;     ///< initial step for every backtracking search
    double tol = 1e-9;      ///< relative objective decrease that ends the solve
};

struct RacelineResult {
    std::vector<Vec2> points;
    std::vector<double> lateral;            ///< signed offset from the centerline per point
    std::vector<double> objective_trace;    ///< objective after each accepted iterate (entry 0: initial)
    double max_bound_excess = 0.0;          ///< worst |lateral| - (w - margin) seen on any iterate
    int iterations = 0;
};

/// Sum of squared second differences of the points c_i + lateral_i * n_i.
double raceline_objective(const TrackModel& track, const std::vector<Vec2>& normals,
                          const std::vector<double>& lateral);

/// Minimum-curvature ("elastic band") racing line by projected gradient
/// descent with backtracking, with the lateral offset kept inside
/// [-(w_i - margin), w_i - margin].
RacelineResult compute_racing_line(const TrackModel& track, const RacelineSolverConfig& cfg);

/// Three-pass speed limit: lateral-acceleration cap from Menger curvature,
/// then backward (braking) and forward (acceleration) passes. Closed lines
/// repeat the passes until nothing changes.
std::vector<double> speed_profile(const std::vector<Vec2>& line, double a_lat_max, double a_lon_max, double v_max,
                                  bool closed);

/// Resamples the centerline (and widths) to roughly `spacing` meters.
TrackModel resample_track(const TrackModel& track, double spacing);

}  // namespace coach

namespace coach {

struct SpeedLimits {
    double a_lat = 8.0;   ///< m/s^2
    double a_lon = 4.0;   ///< m/s^2
    double v_max = 30.0;  ///< m/s
};

/// Returns `track` with its raceline and race speeds filled in.
TrackModel attach_raceline(TrackModel track, const RacelineSolverConfig& solver = {}, const SpeedLimits& limits = {});

}  // namespace coach
