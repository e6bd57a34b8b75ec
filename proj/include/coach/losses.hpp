#pragma once
/**
 * @file  losses.hpp
 * @brief Teacher / trajectory / skill losses on plain values, the total loss
 *        with per-sample target masks, and task-combination switches.
 *
 * The training graph uses the same formulas (see model.hpp); these versions
 * are the reference used for reports and tests.
 */

#include "coach/geom.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace coach {

inline constexpr double kProbClamp = 1e-7;
inline constexpr double kMaxClassWeight = 1e4;

/// A: teacher only; AT: + trajectory; AS: + skill; AST: all three.
enum class TaskSet { kA, kAT, kAS, kAST };

const char* to_string(TaskSet t);
TaskSet task_set_from_string(const std::string& s);
inline bool uses_trajectory(TaskSet t) { return t == TaskSet::kAT || t == TaskSet::kAST; }
inline bool uses_skill(TaskSet t) { return t == TaskSet::kAS || t == TaskSet::kAST; }

struct LossCoefficients {
    double a1 = 1.0;  ///< teacher
    double a2 = 1.0;  ///< trajectory
    double a3 = 1.0;  ///< skill

    /// Zeroes the coefficients of tasks not in `t`.
    [[nodiscard]] LossCoefficients masked(TaskSet t) const;
};

/// Per-category negatives/positives over `labels`. Categories without
/// positives get kMaxClassWeight; their indices go to `zero_positive`.
std::vector<double> class_weights(std::span<const std::vector<std::uint8_t>> labels, std::size_t dim,
                                  std::vector<std::size_t>* zero_positive = nullptr);

/// Weighted binary cross entropy, averaged over categories.
double wbce(std::span<const double> probs, std::span<const std::uint8_t> labels, std::span<const double> weights);

/// Cumulative sum of per-step displacements.
std::vector<Vec2> predict_pose(std::span<const Vec2> deltas);

/// Mean pointwise distance between two equally long pose sequences.
double ade(std::span<const Vec2> poses, std::span<const Vec2> gt);

/// Minimum ADE over modes; each mode holds M per-step deltas.
double mon_ade(std::span<const std::vector<Vec2>> mode_deltas, std::span<const Vec2> gt);

double skill_mse(std::span<const double> pred, std::span<const double> gt);

struct ModelOutput {
    std::vector<double> teacher_probs;
    std::vector<std::vector<Vec2>> traj_modes;  ///< Q modes x M deltas
    std::vector<double> skill_pred;
};

/// Targets of one sample; absent members are masked out of their term.
struct Targets {
    std::optional<std::vector<std::uint8_t>> teacher;
    std::optional<std::vector<Vec2>> future;  ///< M positions of the last scenario
    std::optional<std::vector<double>> skill; ///< already normalized
};

struct LossReport {
    double total = 0.0;
    double teacher = 0.0;
    double trajectory = 0.0;
    double skill = 0.0;
    std::size_t n_teacher = 0;
    std::size_t n_trajectory = 0;
    std::size_t n_skill = 0;
};

/// Each term is averaged over the samples that carry its target; a term with
/// no targets contributes 0. Throws ContractViolation when the batch carries
/// no target at all.
LossReport total_loss(std::span<const ModelOutput> outputs, std::span<const Targets> targets,
                      const LossCoefficients& coeffs, std::span<const double> class_w);

}  // namespace coach
