#pragma once
/**
 * @file  urban.hpp
 * @brief Merge-maneuver scenarios, skill-controlled sequences and teacher
 *        actions for the urban teaching dataset.
 *
 * Template: the ego drives an on-ramp (lane 1, y = -3.5 m) that ends at
 * x = 0 and must merge into the main lane (lane 0, y = 0) shared with one
 * other car. The ego's gap acceptance and cruise speed come from
 * category-specific ranges; each generated maneuver is re-classified by the
 * time-gap / deceleration filters and resampled until it matches.
 */

#include "coach/dataset.hpp"
#include "coach/geom.hpp"

#include <cstdint>
#include <string>

namespace coach {

struct SkillVector2 {
    double alpha = 0.0;  ///< probability of a conservative slot
    double beta = 0.0;   ///< probability of an aggressive slot
    void validate() const;
};

struct ManeuverFilterParams {
    double t_gap_aggressive = 1.0;    ///< s
    double t_gap_conservative = 2.5;  ///< s
    double decel_aggressive = 3.5;    ///< m/s^2
    void validate() const;
};

struct UrbanConfig {
    ManeuverFilterParams filter;
    std::size_t N = 40;
    std::size_t M = 30;
    double map_radius = 50.0;
    int max_attempts = 100;
    double tendency_deadband = 0.1;
};

inline constexpr double kCarLength = 4.5;
/// Beyond this lateral separation the two cars are not in the same lane.
inline constexpr double kLaneOverlap = 2.6;
inline constexpr double kSensingRange = 80.0;

/// Smallest time gap between the cars over past + future (+inf if never
/// in the same lane within sensing range). Throws DataError without
/// other-agent metadata.
double min_time_gap(const Scenario& sc);
/// Largest ego deceleration (m/s^2, positive) over past + future speeds.
double peak_decel(const Scenario& sc);

Behavior classify_maneuver(const Scenario& sc, const ManeuverFilterParams& filter = {});

/// Throws GenerationError after cfg.max_attempts mismatching maneuvers.
Scenario gen_scenario(Behavior category, std::uint64_t seed, const UrbanConfig& cfg = {});

/// Draws P categories from `sv` and generates their scenarios. The result
/// has no teacher action; skill_gt = (n_c, n_a).
SequenceSample sample_sequence(const SkillVector2& sv, std::size_t P, std::uint64_t seed,
                               const UrbanConfig& cfg = {});

/// Index into kUrbanActions implied by a scenario label alone.
std::size_t label_action(Behavior b);

/// Action implied by the label and the skill tendency (before mixing).
std::size_t skill_action(Behavior last_label, const SkillVector2& sv, double deadband = 0.1);

/// Bernoulli(gamma) mixture of the skill rule and the label rule, using the
/// P-th scenario's label. Returns an index into kUrbanActions.
std::size_t assign_teacher_action(const SequenceSample& seq, const SkillVector2& sv, double gamma,
                                  std::uint64_t seed, double deadband = 0.1);

struct UrbanDatasetConfig {
    std::size_t K = 1500;
    double gamma = 0.0;
    std::size_t labeled = 1500;
    std::size_t P = 5;
    std::uint64_t seed = 0;
    UrbanConfig scenario;
};

Dataset gen_urban_dataset(const UrbanDatasetConfig& cfg);

}  // namespace coach
