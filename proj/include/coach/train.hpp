#pragma once
/**
 * @file  train.hpp
 * @brief Multi-task training with labeled/unlabeled batch mixing, early
 *        stopping, checkpoints, evaluation and the task/size ablation grid.
 */

#include "coach/dataset.hpp"
#include "coach/losses.hpp"
#include "coach/model.hpp"
#include "coach/nn/params.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace coach {

struct TrainConfig {
    TaskSet tasks = TaskSet::kA;
    double lr = 1e-3;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 100;
    std::size_t patience = 10;
    std::uint64_t seed = 0;
    LossCoefficients coeffs;
    std::string labeled_path;
    std::string unlabeled_path;  ///< empty: none
    double val_fraction = 0.15;
    std::string precision = "f32";  ///< only f32 training is implemented
    /// "val": early stopping on validation weighted F1; "train": on weighted
    /// F1 over the training split (overfitting checks).
    std::string monitor = "val";
    /// Stop as soon as the monitored F1 reaches this value.
    std::optional<double> target_f1;
    /// Keys overriding the dataset-derived model shape (d_model, ...).
    nlohmann::json model = nlohmann::json::object();
    std::string log_path;  ///< JSONL, one record per epoch; empty: no file

    void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys are a ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Model shape for a dataset: the kind defaults, P/N/M from the data, then
/// `overrides`.
ModelConfig model_config_for(const DatasetMeta& meta, const nlohmann::json& overrides);

struct SkillStats {
    std::vector<double> mean;
    std::vector<double> std;
    [[nodiscard]] std::vector<double> normalize(const std::vector<double>& v) const;
};

struct Checkpoint {
    ModelConfig model;
    nn::ParamStore<float> params;
    TaskKind kind = TaskKind::kUrban;
    TaskSet tasks = TaskSet::kA;
    std::uint64_t seed = 0;
    std::size_t epoch = 0;       ///< best epoch (1-based)
    std::size_t epochs_run = 0;
    double best_f1 = 0.0;        ///< monitored F1 at the best epoch
    std::string labeled_hash;
    std::string unlabeled_hash;  ///< empty when no unlabeled data was used
    SkillStats skill;
    /// Trajectory targets and outputs are in units of this many meters: the
    /// mean displacement of the training futures, so the trajectory term
    /// starts near 1 like the other two.
    double traj_scale = 1.0;
    std::vector<double> class_weights;
};

inline constexpr std::string_view kCheckpointMagic = "MTILCKPT1";

/// Magic, u64 LE JSON length, JSON metadata (with the ordered parameter
/// manifest and a config hash), then every parameter as LE float32.
std::string serialize_checkpoint(const Checkpoint& ck);
/// Throws DataError on a bad magic, truncated payload, manifest mismatch or
/// config hash mismatch.
Checkpoint parse_checkpoint(std::string_view bytes);
void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
/// Identity of the serialized checkpoint (FNV-1a of its bytes).
std::string model_hash(const Checkpoint& ck);

/// Hash of the samples' canonical JSON, independent of file layout.
std::string dataset_hash(const Dataset& ds);

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<nlohmann::json> log;  ///< one record per epoch
    std::vector<std::size_t> train_indices;  ///< labeled samples used for gradients
    std::vector<std::size_t> val_indices;
};

/// Called after every epoch with its log record.
using EpochCallback = std::function<void(const nlohmann::json&)>;

/// Trains on in-memory datasets. Labeled samples of `labeled` form the
/// train/validation split; its unlabeled samples join `unlabeled`.
TrainResult train(const TrainConfig& cfg, const Dataset& labeled, const Dataset* unlabeled,
                  const EpochCallback& on_epoch = {});
/// Loads the configured paths and trains; writes the epoch log when set.
TrainResult train(const TrainConfig& cfg);

/// Metrics report over `ds`. Teacher metrics use the labeled samples; loss
/// terms use every target present (unit coefficients, normalized skills).
nlohmann::json evaluate(const Checkpoint& ck, const Dataset& ds);

struct AblationConfig {
    TrainConfig base;
    std::vector<TaskSet> tasks{TaskSet::kA, TaskSet::kAST};
    std::vector<std::uint64_t> seeds{0};
    std::vector<std::size_t> labeled_sizes;    ///< empty: the whole labeled set
    std::vector<std::size_t> unlabeled_sizes;  ///< empty: the whole unlabeled set
};

struct AblationRow {
    double gamma = 0.0;
    std::size_t labeled_size = 0;
    std::size_t unlabeled_size = 0;
    TaskSet task = TaskSet::kA;
    double mean_f1 = 0.0;
    double std_f1 = 0.0;  ///< sample standard deviation; 0 for one seed
    std::size_t n_seeds = 0;
    std::vector<double> f1s;
};

nlohmann::json ablation_row_to_json(const AblationRow& r);

/// Trains every (labeled size, unlabeled size, task, seed) combination on
/// prefixes of the datasets and scores each on `test` (held out).
std::vector<AblationRow> ablation_grid(const AblationConfig& cfg, const Dataset& labeled, const Dataset* unlabeled,
                                       const Dataset& test);

}  // namespace coach
