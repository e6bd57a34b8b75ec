#pragma once
/**
 * @file  geom.hpp
 * @brief Kinematic state, trajectory, map and track types plus the frame
 *        operations every other module builds on.
 *
 * Conventions:
 * - World frame: meters, yaw CCW from +x.
 * - Ego frame: origin at the reference pose, +x along its heading.
 * - Lateral offsets are positive to the LEFT of the direction of travel.
 * - All trajectories are sampled at kDt = 0.1 s.
 */

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace coach {

inline constexpr double kDt = 0.1;
inline constexpr double kPi = 3.14159265358979323846;

struct Vec2 {
    double x{};
    double y{};

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double k, Vec2 a) { return {k * a.x, k * a.y}; }
    friend Vec2 operator*(Vec2 a, double k) { return {k * a.x, k * a.y}; }
    friend bool operator==(Vec2 a, Vec2 b) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double dist(Vec2 a, Vec2 b) { return norm(a - b); }

/// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

struct State {
    double t{};
    double x{};
    double y{};
    double yaw{};
    double v{};
    double steer{};
    double accel{};  ///< combined throttle/brake command in [-1, 1]

    [[nodiscard]] Vec2 pos() const { return {x, y}; }
    friend bool operator==(const State&, const State&) = default;
};

enum class Frame { kWorld, kEgo };

struct Trajectory {
    std::vector<State> states;
    Frame frame = Frame::kWorld;

    /// Throws DataError when dt is non-uniform, timestamps are not increasing
    /// or any state is outside its physical range.
    void validate() const;
};

enum class PolylineRole { kLeftEdge, kCenter, kRightEdge, kRaceline };

const char* to_string(PolylineRole r);
PolylineRole polyline_role_from_string(const std::string& s);

struct Polyline {
    PolylineRole role = PolylineRole::kCenter;
    int lane_id = 0;
    std::vector<Vec2> pts;
    friend bool operator==(const Polyline&, const Polyline&) = default;
};

/// Polylines around the ego pose, in ego frame, divided by `scale`.
struct LocalMap {
    std::vector<Polyline> polylines;
    State origin;
    double scale = 50.0;
};

enum class Behavior { kAggressive, kConservative, kNeither };

const char* to_string(Behavior b);
Behavior behavior_from_string(const std::string& s);

/// The other car in a merge maneuver plus the ego's future speeds, all in
/// the scenario's ego frame; needed to re-classify a maneuver after the fact.
struct ManeuverTrack {
    std::vector<Vec2> other_xy;       ///< N + M positions
    std::vector<double> other_v;      ///< N + M speeds
    std::vector<double> ego_future_v; ///< M speeds
};

struct Scenario {
    Trajectory past;  ///< ego frame, last state at the origin
    LocalMap local_map;
    std::optional<std::vector<Vec2>> future_gt;
    std::optional<Behavior> behavior_label;
    std::optional<ManeuverTrack> maneuver;
};

struct TrackModel {
    std::string name;
    bool closed = true;
    std::vector<Vec2> centerline;
    std::vector<double> half_width;
    std::vector<Vec2> raceline;
    std::vector<double> race_speeds;

    [[nodiscard]] bool has_raceline() const { return !raceline.empty(); }
    /// Throws DataError if sizes disagree, widths are non-positive or a
    /// closed track does not end where it starts.
    void validate() const;
    /// Unit left normals of the centerline (central differences).
    [[nodiscard]] std::vector<Vec2> normals() const;
    [[nodiscard]] std::vector<Vec2> left_edge() const;
    [[nodiscard]] std::vector<Vec2> right_edge() const;
};

TrackModel load_track(const std::string& path);
void save_track(const TrackModel& track, const std::string& path);
std::string track_to_json(const TrackModel& track);
TrackModel track_from_json(const std::string& text);

// ---------------------------------------------------------------- frames

/// Expresses `p` in the frame of `ref`.
Vec2 to_ego(Vec2 p, const State& ref);
/// Inverse of to_ego.
Vec2 from_ego(Vec2 p, const State& ref);

/// Rigid transform into the frame of `ref`. Speeds and controls are unchanged.
Trajectory to_ego_frame(const Trajectory& traj, const State& ref);

/// Clips `lines` (world frame) to the disk of `radius` around `pose`,
/// transforms the survivors to the ego frame and divides by `radius`.
/// A polyline leaving and re-entering the disk yields several pieces.
/// `closed` lines wrap around their end.
LocalMap extract_local_map(std::span<const Polyline> lines, const State& pose, double radius,
                           bool closed = false);
/// Track edges, centerline and (if present) raceline around `pose`.
LocalMap extract_local_map(const TrackModel& track, const State& pose, double radius);

// ------------------------------------------------------------ polylines

std::vector<double> cumulative_arc_length(std::span<const Vec2> line);
double polyline_length(std::span<const Vec2> line);

struct Projection {
    double s = 0.0;  ///< arc length of the closest point
    double d = 0.0;  ///< signed lateral offset, left positive
    std::size_t segment = 0;
};

/// Closest point on a piecewise-linear curve. For `closed` lines (first
/// point repeated at the end) s is reported modulo the loop length.
Projection arc_length_project(std::span<const Vec2> line, Vec2 p, bool closed = false);

/// Same as arc_length_project but only scans `window` segments on either side
/// of `hint` (wrapping when closed). Used by simulators that move slowly.
Projection arc_length_project_near(std::span<const Vec2> line, std::span<const double> cum, Vec2 p,
                                   std::size_t hint, std::size_t window, bool closed);

/// Point at arc length s (clamped, or wrapped when closed).
Vec2 point_at(std::span<const Vec2> line, std::span<const double> cum, double s, bool closed);

/// n points at uniform arc-length spacing, endpoints preserved.
std::vector<Vec2> resample_polyline(std::span<const Vec2> line, std::size_t n);

/// Discrete Menger curvature at each point (signed, left turns positive).
/// Endpoints copy their neighbors unless `closed`.
std::vector<double> menger_curvature(std::span<const Vec2> line, bool closed);

}  // namespace coach
