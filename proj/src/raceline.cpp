#include "coach/raceline.hpp"

#include "coach/errors.hpp"

#include <algorithm>
#include <cmath>

namespace coach {

namespace {

// Number of free points: a closed track repeats its first point at the end.
std::size_t free_count(const TrackModel& track) {
    return track.closed ? track.centerline.size() - 1 : track.centerline.size();
}

std::vector<Vec2> place(const TrackModel& track, const std::vector<Vec2>& normals, const std::vector<double>& lateral) {
    const std::size_t m = free_count(track);
    std::vector<Vec2> p(m);
    for (std::size_t i = 0; i < m; ++i) p[i] = track.centerline[i] + lateral[i] * normals[i];
    return p;
}

// Second difference at i; zero at the ends of an open line.
Vec2 second_diff(const std::vector<Vec2>& p, std::size_t i, bool closed) {
    const std::size_t m = p.size();
    if (closed) return p[(i + m - 1) % m] - 2.0 * p[i] + p[(i + 1) % m];
    if (i == 0 || i + 1 == m) return {};
    return p[i - 1] - 2.0 * p[i] + p[i + 1];
}

double objective_of(const std::vector<Vec2>& p, bool closed) {
    double f = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const Vec2 e = second_diff(p, i, closed);
        f += dot(e, e);
    }
    return f;
}

}  // namespace

double raceline_objective(const TrackModel& track, const std::vector<Vec2>& normals,
                          const std::vector<double>& lateral) {
    return objective_of(place(track, normals, lateral), track.closed);
}

RacelineResult compute_racing_line(const TrackModel& track, const RacelineSolverConfig& cfg) {
    track.validate();
    if (!(cfg.step > 0.0)) throw ConfigError("raceline step must be positive");
    if (!(cfg.margin > 0.0)) throw ConfigError("raceline margin must be positive");
    const double min_w = *std::min_element(track.half_width.begin(), track.half_width.end());
    if (cfg.margin >= min_w) throw ConfigError("raceline margin must be smaller than the narrowest half width");

    const bool closed = track.closed;
    const std::size_t m = free_count(track);
    const auto normals = track.normals();
    std::vector<double> bound(m);
    for (std::size_t i = 0; i < m; ++i) bound[i] = track.half_width[i] - cfg.margin;

    RacelineResult res;
    std::vector<double> lateral(m, 0.0);
    auto pts = place(track, normals, lateral);
    double f = objective_of(pts, closed);
    res.objective_trace.push_back(f);

    std::vector<double> grad(m);
    std::vector<double> trial(m);
    std::vector<Vec2> e(m);
    for (int it = 0; it < cfg.max_iters; ++it) {
        for (std::size_t i = 0; i < m; ++i) e[i] = second_diff(pts, i, closed);
        for (std::size_t j = 0; j < m; ++j) {
            // d/dp_j of sum |e_i|^2 = 2 e_{j-1} - 4 e_j + 2 e_{j+1}
            Vec2 g = -4.0 * e[j];
            if (closed || j > 0) g = g + 2.0 * e[(j + m - 1) % m];
            if (closed || j + 1 < m) g = g + 2.0 * e[(j + 1) % m];
            grad[j] = dot(g, normals[j]);
        }
        double step = cfg.step;
        bool accepted = false;
        double f_new = f;
        for (int halvings = 0; halvings <= 20; ++halvings) {
            for (std::size_t i = 0; i < m; ++i) {
                trial[i] = std::clamp(lateral[i] - step * grad[i], -bound[i], bound[i]);
                res.max_bound_excess = std::max(res.max_bound_excess, std::abs(trial[i]) - bound[i]);
            }
            f_new = objective_of(place(track, normals, trial), closed);
            if (f_new < f) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
        lateral.swap(trial);
        pts = place(track, normals, lateral);
        const double rel = (f - f_new) / std::max(f, 1e-300);
        f = f_new;
        res.objective_trace.push_back(f);
        res.iterations = it + 1;
        if (rel < cfg.tol) break;
    }

    res.lateral = lateral;
    res.points = pts;
    if (closed) {
        res.lateral.push_back(lateral.front());
        res.points.push_back(pts.front());
    }
    return res;
}

std::vector<double> speed_profile(const std::vector<Vec2>& line, double a_lat_max, double a_lon_max, double v_max,
                                  bool closed) {
    if (!(a_lat_max > 0.0 && a_lon_max > 0.0 && v_max > 0.0))
        throw ConfigError("speed_profile: limits must be positive");
    const std::size_t n = line.size();
    const auto kappa = menger_curvature(line, closed);
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double k = std::abs(kappa[i]);
        v[i] = k > 0.0 ? std::min(v_max, std::sqrt(a_lat_max / k)) : v_max;
    }
    if (n < 2) return v;

    auto cap = [&](std::size_t from, std::size_t to, double ds) {
        const double lim = std::sqrt(v[from] * v[from] + 2.0 * a_lon_max * ds);
        if (v[to] > lim) {
            v[to] = lim;
            return true;
        }
        return false;
    };

    if (!closed) {
        for (std::size_t i = n - 1; i-- > 0;) cap(i + 1, i, dist(line[i], line[i + 1]));
        for (std::size_t i = 0; i + 1 < n; ++i) cap(i, i + 1, dist(line[i], line[i + 1]));
        return v;
    }

    // closed: the last point duplicates the first
    const std::size_t m = n - 1;
    v[0] = std::min(v[0], v[m]);
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t k = 0; k < m; ++k) {
            const std::size_t i = m - 1 - k;
            changed |= cap((i + 1) % m, i, dist(line[i], line[i + 1]));
        }
        for (std::size_t i = 0; i < m; ++i) changed |= cap(i, (i + 1) % m, dist(line[i], line[i + 1]));
    }
    v[m] = v[0];
    return v;
}

TrackModel resample_track(const TrackModel& track, double spacing) {
    track.validate();
    const auto cum = cumulative_arc_length(track.centerline);
    const double total = cum.back();
    const auto n = static_cast<std::size_t>(std::max(3.0, std::round(total / spacing) + 1));
    TrackModel out = track;
    out.centerline = resample_polyline(track.centerline, n);
    out.half_width.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double s = total * static_cast<double>(k) / static_cast<double>(n - 1);
        auto it = std::upper_bound(cum.begin(), cum.end(), s);
        std::size_t i1 = std::clamp<std::size_t>(static_cast<std::size_t>(it - cum.begin()), 1, cum.size() - 1);
        const std::size_t i0 = i1 - 1;
        const double seg = cum[i1] - cum[i0];
        const double t = seg > 0 ? std::clamp((s - cum[i0]) / seg, 0.0, 1.0) : 0.0;
        out.half_width[k] = track.half_width[i0] + t * (track.half_width[i1] - track.half_width[i0]);
    }
    if (out.closed) out.centerline.back() = out.centerline.front();
    out.raceline.clear();
    out.race_speeds.clear();
    return out;
}

}  // namespace coach

namespace coach {

TrackModel attach_raceline(TrackModel track, const RacelineSolverConfig& solver, const SpeedLimits& limits) {
    track.validate();
    const RacelineResult r = compute_racing_line(track, solver);
    track.raceline = r.points;
    track.race_speeds = speed_profile(track.raceline, limits.a_lat, limits.a_lon, limits.v_max, track.closed);
    return track;
}

}  // namespace coach
