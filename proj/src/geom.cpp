#include "coach/geom.hpp"

#include "coach/errors.hpp"
#include "coach/io.hpp"

#include <algorithm>
#include <limits>

#include "json.hpp"

namespace coach {

using nlohmann::json;

double wrap_angle(double a) {
    a = std::fmod(a + kPi, 2.0 * kPi);
    if (a <= 0.0) a += 2.0 * kPi;
    return a - kPi;
}

void Trajectory::validate() const {
    if (states.size() < 2) throw DataError("trajectory needs at least 2 states");
    for (std::size_t i = 0; i < states.size(); ++i) {
        const State& s = states[i];
        if (!(s.v >= 0.0)) throw DataError("negative speed at state " + std::to_string(i));
        if (std::abs(s.accel) > 1.0) throw DataError("accel command outside [-1,1] at state " + std::to_string(i));
        if (std::abs(s.steer) > kPi / 2) throw DataError("steer outside [-pi/2,pi/2] at state " + std::to_string(i));
        if (i > 0) {
            const double step = s.t - states[i - 1].t;
            if (std::abs(step - kDt) > 1e-9) throw DataError("non-uniform dt at state " + std::to_string(i));
        }
    }
}

const char* to_string(PolylineRole r) {
    switch (r) {
        case PolylineRole::kLeftEdge: return "left-edge";
        case PolylineRole::kCenter: return "center";
        case PolylineRole::kRightEdge: return "right-edge";
        case PolylineRole::kRaceline: return "raceline";
    }
    return "center";
}

PolylineRole polyline_role_from_string(const std::string& s) {
    if (s == "left-edge") return PolylineRole::kLeftEdge;
    if (s == "center") return PolylineRole::kCenter;
    if (s == "right-edge") return PolylineRole::kRightEdge;
    if (s == "raceline") return PolylineRole::kRaceline;
    throw DataError("unknown polyline role '" + s + "'");
}

const char* to_string(Behavior b) {
    switch (b) {
        case Behavior::kAggressive: return "aggressive";
        case Behavior::kConservative: return "conservative";
        case Behavior::kNeither: return "neither";
    }
    return "neither";
}

Behavior behavior_from_string(const std::string& s) {
    if (s == "aggressive") return Behavior::kAggressive;
    if (s == "conservative") return Behavior::kConservative;
    if (s == "neither") return Behavior::kNeither;
    throw DataError("unknown behavior label '" + s + "'");
}

// ------------------------------------------------------------------ track

void TrackModel::validate() const {
    if (centerline.size() < 3) throw DataError("track centerline needs at least 3 points");
    if (half_width.size() != centerline.size())
        throw DataError("half_width has " + std::to_string(half_width.size()) + " entries, centerline has " +
                        std::to_string(centerline.size()));
    for (double w : half_width)
        if (!(w > 0.0)) throw DataError("half_width must be positive everywhere");
    if (closed && dist(centerline.front(), centerline.back()) > 1e-6)
        throw DataError("closed track must end at its first point");
    if (!race_speeds.empty() && race_speeds.size() != raceline.size())
        throw DataError("race_speeds and raceline lengths differ");
}

std::vector<Vec2> TrackModel::normals() const {
    const std::size_t n = centerline.size();
    std::vector<Vec2> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        Vec2 prev, next;
        if (closed) {
            // the last point duplicates the first
            prev = centerline[i == 0 ? n - 2 : i - 1];
            next = centerline[i == n - 1 ? 1 : i + 1];
        } else {
            prev = centerline[i == 0 ? 0 : i - 1];
            next = centerline[i == n - 1 ? n - 1 : i + 1];
        }
        const Vec2 tangent = next - prev;
        const double len = norm(tangent);
        out[i] = len > 0 ? Vec2{-tangent.y / len, tangent.x / len} : Vec2{0.0, 1.0};
    }
    return out;
}

std::vector<Vec2> TrackModel::left_edge() const {
    const auto n = normals();
    std::vector<Vec2> out(centerline.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = centerline[i] + half_width[i] * n[i];
    return out;
}

std::vector<Vec2> TrackModel::right_edge() const {
    const auto n = normals();
    std::vector<Vec2> out(centerline.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = centerline[i] - half_width[i] * n[i];
    return out;
}

namespace {

json points_to_json(const std::vector<Vec2>& pts) {
    json arr = json::array();
    for (const auto& p : pts) arr.push_back({p.x, p.y});
    return arr;
}

std::vector<Vec2> points_from_json(const json& arr) {
    std::vector<Vec2> out;
    out.reserve(arr.size());
    for (const auto& p : arr) {
        if (!p.is_array() || p.size() != 2) throw DataError("expected [x, y] point");
        out.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    return out;
}

}  // namespace

std::string track_to_json(const TrackModel& track) {
    json j;
    j["name"] = track.name;
    j["closed"] = track.closed;
    j["centerline"] = points_to_json(track.centerline);
    j["half_width"] = track.half_width;
    if (track.has_raceline()) j["raceline"] = points_to_json(track.raceline);
    if (!track.race_speeds.empty()) j["race_speeds"] = track.race_speeds;
    return j.dump();
}

TrackModel track_from_json(const std::string& text) {
    TrackModel t;
    try {
        const json j = json::parse(text);
        t.name = j.value("name", std::string{});
        t.closed = j.value("closed", false);
        t.centerline = points_from_json(j.at("centerline"));
        t.half_width = j.at("half_width").get<std::vector<double>>();
        if (j.contains("raceline")) t.raceline = points_from_json(j["raceline"]);
        if (j.contains("race_speeds")) t.race_speeds = j["race_speeds"].get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw DataError(std::string("track json: ") + e.what());
    }
    t.validate();
    return t;
}

TrackModel load_track(const std::string& path) { return track_from_json(read_file(path)); }

void save_track(const TrackModel& track, const std::string& path) {
    write_file_atomic(path, track_to_json(track) + "\n");
}

// ----------------------------------------------------------------- frames

Vec2 to_ego(Vec2 p, const State& ref) {
    const double c = std::cos(ref.yaw);
    const double s = std::sin(ref.yaw);
    const double dx = p.x - ref.x;
    const double dy = p.y - ref.y;
    return {c * dx + s * dy, -s * dx + c * dy};
}

Vec2 from_ego(Vec2 p, const State& ref) {
    const double c = std::cos(ref.yaw);
    const double s = std::sin(ref.yaw);
    return {ref.x + c * p.x - s * p.y, ref.y + s * p.x + c * p.y};
}

Trajectory to_ego_frame(const Trajectory& traj, const State& ref) {
    if (traj.states.empty()) throw DataError("to_ego_frame: empty trajectory");
    Trajectory out;
    out.frame = Frame::kEgo;
    out.states.reserve(traj.states.size());
    for (const State& s : traj.states) {
        State e = s;
        const Vec2 p = to_ego(s.pos(), ref);
        e.x = p.x;
        e.y = p.y;
        e.yaw = wrap_angle(s.yaw - ref.yaw);
        out.states.push_back(e);
    }
    return out;
}

namespace {

// Parameter interval of segment a->b inside the disk |x - c| <= r.
bool segment_in_disk(Vec2 a, Vec2 b, Vec2 c, double r, double& t0, double& t1) {
    const Vec2 d = b - a;
    const Vec2 f = a - c;
    const double A = dot(d, d);
    const double B = 2.0 * dot(f, d);
    const double C = dot(f, f) - r * r;
    if (A == 0.0) {
        if (C > 0.0) return false;
        t0 = 0.0;
        t1 = 1.0;
        return true;
    }
    const double disc = B * B - 4.0 * A * C;
    if (disc < 0.0) return false;
    const double sq = std::sqrt(disc);
    double lo = (-B - sq) / (2.0 * A);
    double hi = (-B + sq) / (2.0 * A);
    // endpoints that are inside stay exact
    if (C <= 0.0) lo = std::min(lo, 0.0);
    if (dot(b - c, b - c) <= r * r) hi = std::max(hi, 1.0);
    t0 = std::max(lo, 0.0);
    t1 = std::min(hi, 1.0);
    return t0 <= t1;
}

Vec2 lerp(Vec2 a, Vec2 b, double t) {
    if (t == 0.0) return a;
    if (t == 1.0) return b;
    return a + t * (b - a);
}

void push_distinct(std::vector<Vec2>& run, Vec2 p) {
    if (run.empty() || !(run.back() == p)) run.push_back(p);
}

std::vector<std::vector<Vec2>> clip_to_disk(std::vector<Vec2> pts, Vec2 c, double r, bool closed) {
    std::vector<std::vector<Vec2>> pieces;
    if (pts.size() < 2) return pieces;
    if (closed) {
        if (pts.front() == pts.back()) pts.pop_back();
        const auto outside = std::find_if(pts.begin(), pts.end(), [&](Vec2 p) { return dist(p, c) > r; });
        if (outside == pts.end()) {
            pts.push_back(pts.front());
            pieces.push_back(std::move(pts));
            return pieces;
        }
        std::rotate(pts.begin(), outside, pts.end());
        pts.push_back(pts.front());
    }
    std::vector<Vec2> run;
    auto flush = [&] {
        if (run.size() >= 2) pieces.push_back(run);
        run.clear();
    };
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        double t0 = 0, t1 = 0;
        if (!segment_in_disk(pts[i], pts[i + 1], c, r, t0, t1)) {
            flush();
            continue;
        }
        if (t0 > 0.0) flush();
        push_distinct(run, lerp(pts[i], pts[i + 1], t0));
        push_distinct(run, lerp(pts[i], pts[i + 1], t1));
        if (t1 < 1.0) flush();
    }
    flush();
    return pieces;
}

}  // namespace

LocalMap extract_local_map(std::span<const Polyline> lines, const State& pose, double radius, bool closed) {
    if (!(radius > 0.0)) throw ConfigError("extract_local_map: radius must be positive");
    LocalMap out;
    out.origin = pose;
    out.scale = radius;
    const Vec2 c = pose.pos();
    for (const Polyline& line : lines) {
        for (auto& piece : clip_to_disk(line.pts, c, radius, closed)) {
            Polyline pl;
            pl.role = line.role;
            pl.lane_id = line.lane_id;
            pl.pts.reserve(piece.size());
            for (Vec2 p : piece) {
                const Vec2 e = to_ego(p, pose);
                pl.pts.push_back({e.x / radius, e.y / radius});
            }
            // normalization can collapse nearly coincident points
            pl.pts.erase(std::unique(pl.pts.begin(), pl.pts.end()), pl.pts.end());
            if (pl.pts.size() >= 2) out.polylines.push_back(std::move(pl));
        }
    }
    return out;
}

LocalMap extract_local_map(const TrackModel& track, const State& pose, double radius) {
    std::vector<Polyline> lines;
    lines.push_back({PolylineRole::kLeftEdge, 0, track.left_edge()});
    lines.push_back({PolylineRole::kCenter, 0, track.centerline});
    lines.push_back({PolylineRole::kRightEdge, 0, track.right_edge()});
    if (track.has_raceline()) lines.push_back({PolylineRole::kRaceline, 0, track.raceline});
    return extract_local_map(lines, pose, radius, track.closed);
}

// -------------------------------------------------------------- polylines

std::vector<double> cumulative_arc_length(std::span<const Vec2> line) {
    std::vector<double> cum(line.size(), 0.0);
    for (std::size_t i = 1; i < line.size(); ++i) cum[i] = cum[i - 1] + dist(line[i - 1], line[i]);
    return cum;
}

double polyline_length(std::span<const Vec2> line) {
    double len = 0.0;
    for (std::size_t i = 1; i < line.size(); ++i) len += dist(line[i - 1], line[i]);
    return len;
}

namespace {

struct SegmentHit {
    double dist2;
    double t;
    Vec2 q;
};

SegmentHit closest_on_segment(Vec2 a, Vec2 b, Vec2 p) {
    const Vec2 ab = b - a;
    const double len2 = dot(ab, ab);
    double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const Vec2 q = a + t * ab;
    const Vec2 e = p - q;
    return {dot(e, e), t, q};
}

Projection finish_projection(std::span<const Vec2> line, std::span<const double> cum, Vec2 p, std::size_t seg,
                             const SegmentHit& hit, bool closed) {
    Projection out;
    out.segment = seg;
    const Vec2 a = line[seg];
    const Vec2 b = line[seg + 1];
    out.s = cum[seg] + hit.t * (cum[seg + 1] - cum[seg]);
    const double dd = std::sqrt(hit.dist2);
    const double side = cross(b - a, p - hit.q);
    out.d = side > 0 ? dd : (side < 0 ? -dd : 0.0);
    if (closed) {
        const double total = cum.back();
        if (total > 0.0) {
            out.s = std::fmod(out.s, total);
            if (out.s < 0.0) out.s += total;
        }
    }
    return out;
}

}  // namespace

Projection arc_length_project(std::span<const Vec2> line, Vec2 p, bool closed) {
    if (line.size() < 2) throw ContractViolation("arc_length_project: line needs at least 2 points");
    const auto cum = cumulative_arc_length(line);
    std::size_t best = 0;
    SegmentHit best_hit{std::numeric_limits<double>::infinity(), 0.0, {}};
    for (std::size_t i = 0; i + 1 < line.size(); ++i) {
        const SegmentHit h = closest_on_segment(line[i], line[i + 1], p);
        if (h.dist2 < best_hit.dist2) {
            best_hit = h;
            best = i;
        }
    }
    return finish_projection(line, cum, p, best, best_hit, closed);
}

Projection arc_length_project_near(std::span<const Vec2> line, std::span<const double> cum, Vec2 p,
                                   std::size_t hint, std::size_t window, bool closed) {
    const std::size_t nseg = line.size() - 1;
    if (2 * window + 1 >= nseg) {
        std::size_t best = 0;
        SegmentHit best_hit{std::numeric_limits<double>::infinity(), 0.0, {}};
        for (std::size_t i = 0; i < nseg; ++i) {
            const SegmentHit h = closest_on_segment(line[i], line[i + 1], p);
            if (h.dist2 < best_hit.dist2) {
                best_hit = h;
                best = i;
            }
        }
        return finish_projection(line, cum, p, best, best_hit, closed);
    }
    std::size_t best = hint % nseg;
    SegmentHit best_hit{std::numeric_limits<double>::infinity(), 0.0, {}};
    const auto h0 = static_cast<std::ptrdiff_t>(hint % nseg);
    for (std::ptrdiff_t k = -static_cast<std::ptrdiff_t>(window); k <= static_cast<std::ptrdiff_t>(window); ++k) {
        std::ptrdiff_t i = h0 + k;
        if (closed) {
            i %= static_cast<std::ptrdiff_t>(nseg);
            if (i < 0) i += static_cast<std::ptrdiff_t>(nseg);
        } else if (i < 0 || i >= static_cast<std::ptrdiff_t>(nseg)) {
            continue;
        }
        const auto iu = static_cast<std::size_t>(i);
        const SegmentHit h = closest_on_segment(line[iu], line[iu + 1], p);
        if (h.dist2 < best_hit.dist2) {
            best_hit = h;
            best = iu;
        }
    }
    return finish_projection(line, cum, p, best, best_hit, closed);
}

Vec2 point_at(std::span<const Vec2> line, std::span<const double> cum, double s, bool closed) {
    const double total = cum.back();
    if (closed && total > 0.0) {
        s = std::fmod(s, total);
        if (s < 0.0) s += total;
    } else {
        s = std::clamp(s, 0.0, total);
    }
    auto it = std::upper_bound(cum.begin(), cum.end(), s);
    std::size_t i1 = std::clamp<std::size_t>(static_cast<std::size_t>(it - cum.begin()), 1, line.size() - 1);
    const std::size_t i0 = i1 - 1;
    const double seg = cum[i1] - cum[i0];
    const double t = seg > 0.0 ? (s - cum[i0]) / seg : 0.0;
    return lerp(line[i0], line[i1], std::clamp(t, 0.0, 1.0));
}

std::vector<Vec2> resample_polyline(std::span<const Vec2> line, std::size_t n) {
    if (n < 2) throw ContractViolation("resample_polyline: n must be >= 2");
    if (line.size() < 2) throw DataError("resample_polyline: need at least 2 points");
    const auto cum = cumulative_arc_length(line);
    const double total = cum.back();
    if (!(total > 0.0)) throw DataError("resample_polyline: zero-length polyline");
    std::vector<Vec2> out(n);
    out.front() = line.front();
    out.back() = line.back();
    for (std::size_t k = 1; k + 1 < n; ++k)
        out[k] = point_at(line, cum, total * static_cast<double>(k) / static_cast<double>(n - 1), false);
    return out;
}

namespace {

double menger(Vec2 a, Vec2 b, Vec2 c) {
    const double ab = dist(a, b);
    const double bc = dist(b, c);
    const double ca = dist(c, a);
    const double denom = ab * bc * ca;
    if (denom <= 0.0) return 0.0;
    return 2.0 * cross(b - a, c - b) / denom;
}

}  // namespace

std::vector<double> menger_curvature(std::span<const Vec2> line, bool closed) {
    const std::size_t n = line.size();
    std::vector<double> k(n, 0.0);
    if (n < 3) return k;
    for (std::size_t i = 1; i + 1 < n; ++i) k[i] = menger(line[i - 1], line[i], line[i + 1]);
    if (closed) {
        k[0] = menger(line[n - 2], line[0], line[1]);
        k[n - 1] = k[0];
    } else {
        k[0] = k[1];
        k[n - 1] = k[n - 2];
    }
    return k;
}

}  // namespace coach
