#include "coach/tracks.hpp"

#include <cmath>

namespace coach {

namespace {

void append_segment(std::vector<Vec2>& pts, Vec2 a, Vec2 b, double spacing) {
    const auto n = static_cast<int>(std::max(1.0, std::ceil(dist(a, b) / spacing)));
    for (int k = pts.empty() ? 0 : 1; k <= n; ++k) pts.push_back(a + (static_cast<double>(k) / n) * (b - a));
}

void append_arc(std::vector<Vec2>& pts, Vec2 c, double r, double a0, double a1, double spacing) {
    const auto n = static_cast<int>(std::max(2.0, std::ceil(std::abs(a1 - a0) * r / spacing)));
    for (int k = pts.empty() ? 0 : 1; k <= n; ++k) {
        const double a = a0 + (a1 - a0) * static_cast<double>(k) / n;
        pts.push_back({c.x + r * std::cos(a), c.y + r * std::sin(a)});
    }
}

}  // namespace

TrackModel make_straight_track(double length, double half_width, double spacing) {
    TrackModel t;
    t.name = "straight";
    t.closed = false;
    append_segment(t.centerline, {0.0, 0.0}, {length, 0.0}, spacing);
    t.half_width.assign(t.centerline.size(), half_width);
    return t;
}

TrackModel make_circle_track(double radius, double half_width, std::size_t n) {
    TrackModel t;
    t.name = "circle";
    t.closed = true;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = 2.0 * kPi * static_cast<double>(i) / static_cast<double>(n);
        t.centerline.push_back({radius * std::cos(a), radius * std::sin(a)});
    }
    t.centerline.push_back(t.centerline.front());
    t.half_width.assign(t.centerline.size(), half_width);
    return t;
}

TrackModel make_corner_track(double straight, double radius, double half_width, double spacing) {
    TrackModel t;
    t.name = "corner";
    t.closed = false;
    append_segment(t.centerline, {0.0, 0.0}, {straight, 0.0}, spacing);
    append_arc(t.centerline, {straight, radius}, radius, -kPi / 2, 0.0, spacing);
    append_segment(t.centerline, {straight + radius, radius}, {straight + radius, radius + straight}, spacing);
    t.half_width.assign(t.centerline.size(), half_width);
    return t;
}

TrackModel make_rounded_rectangle(double width, double height, const double (&radii)[4], double half_width,
                                  double spacing) {
    const double hx = width / 2;
    const double hy = height / 2;
    const double rbr = radii[0], rtr = radii[1], rtl = radii[2], rbl = radii[3];
    TrackModel t;
    t.name = "rounded-rectangle";
    t.closed = true;
    auto& p = t.centerline;
    append_segment(p, {0.0, -hy}, {hx - rbr, -hy}, spacing);
    append_arc(p, {hx - rbr, -hy + rbr}, rbr, -kPi / 2, 0.0, spacing);
    append_segment(p, p.back(), {hx, hy - rtr}, spacing);
    append_arc(p, {hx - rtr, hy - rtr}, rtr, 0.0, kPi / 2, spacing);
    append_segment(p, p.back(), {-hx + rtl, hy}, spacing);
    append_arc(p, {-hx + rtl, hy - rtl}, rtl, kPi / 2, kPi, spacing);
    append_segment(p, p.back(), {-hx, -hy + rbl}, spacing);
    append_arc(p, {-hx + rbl, -hy + rbl}, rbl, kPi, 3 * kPi / 2, spacing);
    append_segment(p, p.back(), {0.0, -hy}, spacing);
    p.back() = p.front();
    t.half_width.assign(p.size(), half_width);
    return t;
}

TrackModel make_demo_circuit() {
    const double radii[4] = {35.0, 50.0, 40.0, 120.0};
    TrackModel t = make_rounded_rectangle(1600.0, 500.0, radii, 6.0, 2.0);
    t.name = "demo-circuit";
    return t;
}

}  // namespace coach
