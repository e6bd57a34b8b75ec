#pragma once

#include "coach/geom.hpp"
#include "coach/losses.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace coach {

using ProbRows = std::vector<std::vector<double>>;
using LabelRows = std::vector<std::vector<std::uint8_t>>;

/// Fraction of (sample, category) cells where (p >= threshold) != label.
double hamming_loss(const ProbRows& probs, const LabelRows& gt, double threshold = 0.5);

struct ClassStats {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct F1Result {
    double weighted_f1 = 0.0;  ///< percent
    std::vector<ClassStats> per_class;
};

/// Multiclass: prediction = argmax prob (lowest index on ties), truth =
/// index of the one-hot label. Per-class F1 weighted by true support.
F1Result weighted_f1_multiclass(const ProbRows& probs, const LabelRows& gt);

/// Multilabel: per-category binary F1 on thresholded predictions, weighted
/// by positive support. With no positives anywhere the score is 100 when
/// nothing was predicted positive, else 0.
F1Result weighted_f1_multilabel(const ProbRows& probs, const LabelRows& gt, double threshold = 0.5);

struct LapMetrics {
    std::vector<double> lap_times;   ///< one per pair of consecutive forward start-line crossings
    std::optional<double> lap_time;  ///< first complete lap
    double pct_out_of_bounds = 0.0;
};

/// Lateral offset from the centerline and local half width at the closest point.
struct BoundsCheck {
    double s = 0.0;
    double d = 0.0;
    double half_width = 0.0;
    [[nodiscard]] bool out() const { return std::abs(d) > half_width; }
};
BoundsCheck check_bounds(const TrackModel& track, Vec2 p);

/// Incremental lap / bounds accounting, shared by offline metrics and serving.
class LapTracker {
  public:
    explicit LapTracker(const TrackModel& track);

    /// Returns the completed lap time when this state closes a lap.
    std::optional<double> add(const State& s);

    [[nodiscard]] double pct_out_of_bounds() const;
    [[nodiscard]] std::size_t out_count() const { return out_; }
    [[nodiscard]] std::size_t count() const { return n_; }
    [[nodiscard]] const std::vector<double>& lap_times() const { return laps_; }

  private:
    const TrackModel* track_;
    double length_ = 0.0;
    std::size_t n_ = 0;
    std::size_t out_ = 0;
    std::optional<double> prev_s_;
    double prev_t_ = 0.0;
    std::optional<double> last_crossing_;
    std::vector<double> laps_;
};

LapMetrics lap_metrics(const Trajectory& traj, const TrackModel& track);

struct EvalInputs {
    bool multilabel = false;
    std::vector<std::string> action_set;
    ProbRows probs;   ///< labeled samples only
    LabelRows labels;
    std::optional<LossReport> losses;
};

/// {weighted_f1, hamming, per_class: {name: {precision, recall, f1, support}}, loss_terms}.
/// Teacher metrics are omitted when there are no labeled samples.
nlohmann::json metrics_report(const EvalInputs& in);

}  // namespace coach
