#include "coach/metrics.hpp"

#include "coach/errors.hpp"

#include <algorithm>
#include <cmath>

namespace coach {

namespace {

void check_rows(const ProbRows& probs, const LabelRows& gt) {
    if (probs.size() != gt.size()) throw ContractViolation("metrics: prediction/label count mismatch");
    for (std::size_t i = 0; i < probs.size(); ++i)
        if (probs[i].size() != gt[i].size() || gt[i].empty())
            throw ContractViolation("metrics: prediction/label width mismatch");
}

std::size_t argmax(const std::vector<double>& v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::size_t label_index(const std::vector<std::uint8_t>& row) {
    const auto it = std::find(row.begin(), row.end(), std::uint8_t{1});
    if (it == row.end()) throw ContractViolation("multiclass label row has no positive entry");
    return static_cast<std::size_t>(it - row.begin());
}

F1Result finish(const std::vector<double>& tp, const std::vector<double>& fp, const std::vector<double>& fn) {
    F1Result r;
    double total = 0.0, acc = 0.0, fp_total = 0.0;
    for (std::size_t c = 0; c < tp.size(); ++c) {
        ClassStats s;
        s.support = static_cast<std::size_t>(tp[c] + fn[c]);
        s.precision = tp[c] + fp[c] > 0 ? tp[c] / (tp[c] + fp[c]) : 0.0;
        s.recall = tp[c] + fn[c] > 0 ? tp[c] / (tp[c] + fn[c]) : 0.0;
        const double denom = 2 * tp[c] + fp[c] + fn[c];
        s.f1 = denom > 0 ? 2 * tp[c] / denom : 0.0;
        total += static_cast<double>(s.support);
        acc += static_cast<double>(s.support) * s.f1;
        fp_total += fp[c];
        r.per_class.push_back(s);
    }
    if (total > 0)
        r.weighted_f1 = 100.0 * acc / total;
    else
        r.weighted_f1 = fp_total == 0 ? 100.0 : 0.0;
    return r;
}

}  // namespace

double hamming_loss(const ProbRows& probs, const LabelRows& gt, double threshold) {
    check_rows(probs, gt);
    if (gt.empty()) throw ContractViolation("hamming_loss: empty input");
    std::size_t wrong = 0, cells = 0;
    for (std::size_t i = 0; i < gt.size(); ++i)
        for (std::size_t c = 0; c < gt[i].size(); ++c, ++cells)
            wrong += (probs[i][c] >= threshold) != (gt[i][c] != 0);
    return static_cast<double>(wrong) / static_cast<double>(cells);
}

F1Result weighted_f1_multiclass(const ProbRows& probs, const LabelRows& gt) {
    check_rows(probs, gt);
    const std::size_t k = gt.empty() ? 0 : gt[0].size();
    std::vector<double> tp(k), fp(k), fn(k);
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const std::size_t y = label_index(gt[i]);
        const std::size_t p = argmax(probs[i]);
        if (p == y) {
            tp[y] += 1;
        } else {
            fp[p] += 1;
            fn[y] += 1;
        }
    }
    return finish(tp, fp, fn);
}

F1Result weighted_f1_multilabel(const ProbRows& probs, const LabelRows& gt, double threshold) {
    check_rows(probs, gt);
    const std::size_t k = gt.empty() ? 0 : gt[0].size();
    std::vector<double> tp(k), fp(k), fn(k);
    for (std::size_t i = 0; i < gt.size(); ++i)
        for (std::size_t c = 0; c < k; ++c) {
            const bool p = probs[i][c] >= threshold;
            const bool y = gt[i][c] != 0;
            if (p && y) tp[c] += 1;
            if (p && !y) fp[c] += 1;
            if (!p && y) fn[c] += 1;
        }
    return finish(tp, fp, fn);
}

BoundsCheck check_bounds(const TrackModel& track, Vec2 p) {
    const auto& cl = track.centerline;
    const Projection pr = arc_length_project(cl, p, track.closed);
    const std::size_t i = pr.segment;
    const std::size_t j = std::min(i + 1, cl.size() - 1);
    const Vec2 a = cl[i], b = cl[j];
    const double len = dist(a, b);
    const double u = len > 0 ? std::clamp(dot(p - a, b - a) / (len * len), 0.0, 1.0) : 0.0;
    return {pr.s, pr.d, track.half_width[i] + u * (track.half_width[j] - track.half_width[i])};
}

LapTracker::LapTracker(const TrackModel& track) : track_(&track), length_(polyline_length(track.centerline)) {}

std::optional<double> LapTracker::add(const State& st) {
    const BoundsCheck b = check_bounds(*track_, st.pos());
    ++n_;
    if (b.out()) ++out_;
    std::optional<double> lap;
    if (track_->closed && prev_s_) {
        const double ps = *prev_s_;
        if (ps - b.s > 0.5 * length_) {
            // forward through the start line
            const double before = length_ - ps;
            const double frac = before + b.s > 0 ? before / (before + b.s) : 0.0;
            const double tc = prev_t_ + frac * (st.t - prev_t_);
            if (last_crossing_) {
                lap = tc - *last_crossing_;
                laps_.push_back(*lap);
            }
            last_crossing_ = tc;
        } else if (b.s - ps > 0.5 * length_) {
            last_crossing_.reset();  // went backwards over the line
        }
    }
    prev_s_ = b.s;
    prev_t_ = st.t;
    return lap;
}

double LapTracker::pct_out_of_bounds() const {
    return n_ == 0 ? 0.0 : 100.0 * static_cast<double>(out_) / static_cast<double>(n_);
}

LapMetrics lap_metrics(const Trajectory& traj, const TrackModel& track) {
    LapTracker tracker(track);
    for (const auto& s : traj.states) tracker.add(s);
    LapMetrics m;
    m.lap_times = tracker.lap_times();
    if (!m.lap_times.empty()) m.lap_time = m.lap_times.front();
    m.pct_out_of_bounds = tracker.pct_out_of_bounds();
    return m;
}

nlohmann::json metrics_report(const EvalInputs& in) {
    nlohmann::json j = nlohmann::json::object();
    j["n_labeled"] = in.labels.size();
    if (!in.labels.empty()) {
        const F1Result f1 = in.multilabel ? weighted_f1_multilabel(in.probs, in.labels)
                                          : weighted_f1_multiclass(in.probs, in.labels);
        j["weighted_f1"] = f1.weighted_f1;
        j["hamming"] = hamming_loss(in.probs, in.labels);
        nlohmann::json pc = nlohmann::json::object();
        for (std::size_t c = 0; c < f1.per_class.size(); ++c) {
            const auto& s = f1.per_class[c];
            const std::string name = c < in.action_set.size() ? in.action_set[c] : std::to_string(c);
            pc[name] = {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"support", s.support}};
        }
        j["per_class"] = pc;
    }
    if (in.losses) {
        const auto& l = *in.losses;
        nlohmann::json terms = {{"total", l.total}};
        if (l.n_teacher) terms["teacher"] = l.teacher;
        if (l.n_trajectory) terms["trajectory"] = l.trajectory;
        if (l.n_skill) terms["skill"] = l.skill;
        j["loss_terms"] = terms;
    }
    return j;
}

}  // namespace coach
