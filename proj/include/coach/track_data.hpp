#pragma once
/**
 * @file  track_data.hpp
 * @brief Scripted students on a race track, the rule-based instructor that
 *        labels their next 4 s, and windowed dataset generation.
 */

#include "coach/dataset.hpp"
#include "coach/geom.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace coach {

struct StudentParams {
    double line_bias = 0.0;    ///< m, left positive
    double line_noise = 0.0;   ///< m, stationary std of the lateral wander
    double speed_scale = 1.0;  ///< fraction of race speed targeted
    double brake_delay = 0.0;  ///< s
    double steer_noise = 0.0;  ///< rad
    void validate() const;
};

nlohmann::json student_to_json(const StudentParams& p);
StudentParams student_from_json(const nlohmann::json& j);

struct OracleParams {
    double brake_over = 0.10;    ///< fraction above target speed
    double accel_under = 0.15;   ///< fraction below target speed
    double lateral_band = 0.8;   ///< m
    double corner_kappa = 0.01;  ///< 1/m
    double max_offtrack = 30.0;  ///< m from the raceline before a window is discarded
};

/// Raceline with precomputed arc length, curvature, speed and corner entries.
class RacelineRef {
  public:
    explicit RacelineRef(const TrackModel& track, double corner_kappa = 0.01);

    [[nodiscard]] Projection project(Vec2 p) const;
    [[nodiscard]] Projection project_near(Vec2 p, std::size_t hint) const;
    [[nodiscard]] double length() const { return cum_.back(); }
    [[nodiscard]] bool closed() const { return closed_; }
    /// Race speed at arc length s (linear between points).
    [[nodiscard]] double speed_at(double s) const;
    /// True where the race speed decreases along the segment containing s.
    [[nodiscard]] bool decelerating_at(double s) const;
    [[nodiscard]] double curvature_at(double s) const;
    /// Point and unit left normal at s.
    [[nodiscard]] Vec2 point(double s) const;
    [[nodiscard]] Vec2 normal(double s) const;
    /// Arc lengths where |curvature| rises above the corner threshold.
    [[nodiscard]] const std::vector<double>& corner_entries() const { return entries_; }
    [[nodiscard]] std::span<const Vec2> points() const { return pts_; }

  private:
    [[nodiscard]] std::size_t segment(double s) const;
    [[nodiscard]] double wrap(double s) const;

    std::vector<Vec2> pts_;
    std::vector<double> cum_;
    std::vector<double> speeds_;
    std::vector<double> kappa_;
    std::vector<double> entries_;
    bool closed_ = true;
};

/// World-frame drive of `laps` laps (or to the end of an open track).
Trajectory simulate_student(const TrackModel& track, const StudentParams& sp, double laps, std::uint64_t seed);

/// Labels over [brake, accelerate, stay_left, stay_right, turn] for the
/// future states of a window; nullopt when the car is too far off track.
std::optional<std::vector<std::uint8_t>> oracle_instructions(std::span<const State> future, const RacelineRef& ref,
                                                             const OracleParams& op = {});

struct TrackSkillVector {
    double steer_smoothness = 0.0;  ///< mean squared steering rate, rad^2/s^2
    double raceline_dist = 0.0;     ///< mean |offset from the raceline|, m
};

/// Over world-frame states (at least two).
TrackSkillVector compute_skill_metrics(std::span<const State> past, const RacelineRef& ref);
/// Same, from a stored scenario: the ego-frame past is mapped back to the
/// world through the map origin.
TrackSkillVector compute_skill_metrics(const Scenario& sc, const RacelineRef& ref);

struct TrackGenConfig {
    std::vector<StudentParams> roster;
    double laps = 3.0;
    double labeled_fraction = 1.0;
    std::uint64_t seed = 0;
    std::size_t N = 40;
    std::size_t M = 40;
    std::size_t stride = 10;  ///< steps between window starts
    double map_radius = 50.0;
    OracleParams oracle;
};

/// Varied students: random lateral bias, wander and late braking; speed
/// scales cycle through a fixed set of paces.
std::vector<StudentParams> default_roster(std::size_t n, std::uint64_t seed);

/// Ego-frame scenario for a world-frame window of past states: the last
/// state is the origin, the map holds what lies within `map_radius`. Values
/// are quantized exactly as in stored datasets, so serving sees the same
/// inputs as training.
Scenario make_track_scenario(std::span<const State> past, const TrackModel& track, double map_radius = 50.0);

Dataset gen_track_dataset(const TrackModel& track, const TrackGenConfig& cfg);

}  // namespace coach
