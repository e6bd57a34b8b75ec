#pragma once
/**
 * @file  dataset.hpp
 * @brief Sequence samples and their JSONL / sidecar-metadata storage.
 *
 * One SequenceSample per line. Urban samples carry a single teacher action
 * over {no_op, slow_down, speed_up}; track samples carry a 5-way multilabel
 * indicator vector over {brake, accelerate, stay_left, stay_right, turn}.
 * Internally both are an indicator vector (`teacher`), one-hot for urban.
 */

#include "coach/geom.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace coach {

enum class TaskKind { kUrban, kTrack };

const char* to_string(TaskKind k);
TaskKind task_kind_from_string(const std::string& s);

inline constexpr std::array<std::string_view, 3> kUrbanActions{"no_op", "slow_down", "speed_up"};
inline constexpr std::array<std::string_view, 5> kTrackActions{"brake", "accelerate", "stay_left", "stay_right",
                                                               "turn"};

std::vector<std::string> action_set(TaskKind k);
std::size_t action_dim(TaskKind k);

struct SequenceSample {
    std::string id;
    TaskKind kind = TaskKind::kUrban;
    double gamma = 0.0;
    std::uint64_t seed = 0;
    std::vector<Scenario> scenarios;
    std::vector<double> skill_gt;                  ///< urban: (n_c, n_a); track: (steer_smoothness, raceline_dist)
    std::optional<std::vector<std::uint8_t>> teacher;  ///< indicator per action category; absent when unlabeled
    std::optional<std::array<double, 2>> skill_vector;  ///< urban generator's (alpha, beta)

    [[nodiscard]] bool labeled() const { return teacher.has_value(); }
    /// Urban only: index of the one-hot teacher action.
    [[nodiscard]] std::optional<std::size_t> teacher_action() const;
};

nlohmann::json scenario_to_json(const Scenario& sc);
Scenario scenario_from_json(const nlohmann::json& j);

nlohmann::json sample_to_json(const SequenceSample& s);
SequenceSample sample_from_json(const nlohmann::json& j);

/// Per-dataset summary written next to the JSONL file as `<path>.meta.json`.
struct DatasetMeta {
    TaskKind kind = TaskKind::kUrban;
    std::size_t count = 0;
    std::size_t labeled = 0;
    std::size_t P = 0;
    std::size_t N = 0;
    std::size_t M = 0;
    std::vector<double> class_counts;   ///< positives per category (labeled split)
    std::vector<double> class_weights;  ///< negatives / positives per category
    std::vector<double> skill_mean;
    std::vector<double> skill_std;
    nlohmann::json config;              ///< generator parameters
    nlohmann::json extra;               ///< generator-specific statistics
};

struct Dataset {
    DatasetMeta meta;
    std::vector<SequenceSample> samples;
};

nlohmann::json meta_to_json(const DatasetMeta& m);
DatasetMeta meta_from_json(const nlohmann::json& j);

/// Fills counts, class weights and skill statistics from `samples`.
DatasetMeta summarize(TaskKind kind, const std::vector<SequenceSample>& samples, nlohmann::json config = {},
                      nlohmann::json extra = {});

std::string meta_path(const std::string& dataset_path);

/// Writes the JSONL file and its sidecar atomically (temp file + rename).
void save_dataset(const Dataset& ds, const std::string& path);

/// Reads and schema-checks a JSONL file. The sidecar is read when present,
/// otherwise recomputed.
Dataset load_dataset(const std::string& path);

/// Rounds to a multiple of `q` (default 1e-4) so stored values are short and exact.
inline double quantize(double x, double q = 1e-4) { return std::round(x / q) * q; }

}  // namespace coach
