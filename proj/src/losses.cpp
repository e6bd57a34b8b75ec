#include "coach/losses.hpp"

#include "coach/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace coach {

const char* to_string(TaskSet t) {
    switch (t) {
        case TaskSet::kA: return "A";
        case TaskSet::kAT: return "AT";
        case TaskSet::kAS: return "AS";
        case TaskSet::kAST: return "AST";
    }
    return "?";
}

TaskSet task_set_from_string(const std::string& s) {
    if (s == "A") return TaskSet::kA;
    if (s == "AT") return TaskSet::kAT;
    if (s == "AS") return TaskSet::kAS;
    if (s == "AST") return TaskSet::kAST;
    throw ConfigError("unknown task set '" + s + "' (expected A, AT, AS or AST)");
}

LossCoefficients LossCoefficients::masked(TaskSet t) const {
    LossCoefficients c = *this;
    if (!uses_trajectory(t)) c.a2 = 0.0;
    if (!uses_skill(t)) c.a3 = 0.0;
    return c;
}

std::vector<double> class_weights(std::span<const std::vector<std::uint8_t>> labels, std::size_t dim,
                                  std::vector<std::size_t>* zero_positive) {
    std::vector<double> pos(dim, 0.0), neg(dim, 0.0);
    for (const auto& row : labels) {
        if (row.size() != dim) throw ContractViolation("label row has wrong dimension");
        for (std::size_t c = 0; c < dim; ++c) (row[c] ? pos[c] : neg[c]) += 1.0;
    }
    std::vector<double> w(dim);
    for (std::size_t c = 0; c < dim; ++c) {
        if (pos[c] == 0.0) {
            w[c] = kMaxClassWeight;
            if (zero_positive) zero_positive->push_back(c);
        } else {
            w[c] = std::min(kMaxClassWeight, neg[c] / pos[c]);
        }
    }
    return w;
}

double wbce(std::span<const double> probs, std::span<const std::uint8_t> labels, std::span<const double> weights) {
    if (probs.size() != labels.size() || probs.size() != weights.size() || probs.empty())
        throw ContractViolation("wbce: dimension mismatch");
    double acc = 0.0;
    for (std::size_t c = 0; c < probs.size(); ++c) {
        const double p = std::clamp(probs[c], kProbClamp, 1.0 - kProbClamp);
        acc += labels[c] ? weights[c] * std::log(p) : std::log(1.0 - p);
    }
    return -acc / static_cast<double>(probs.size());
}

std::vector<Vec2> predict_pose(std::span<const Vec2> deltas) {
    std::vector<Vec2> out(deltas.size());
    Vec2 acc;
    for (std::size_t t = 0; t < deltas.size(); ++t) {
        acc = acc + deltas[t];
        out[t] = acc;
    }
    return out;
}

double ade(std::span<const Vec2> poses, std::span<const Vec2> gt) {
    if (poses.size() != gt.size() || gt.empty()) throw ContractViolation("ade: length mismatch");
    double acc = 0.0;
    for (std::size_t t = 0; t < gt.size(); ++t) acc += dist(poses[t], gt[t]);
    return acc / static_cast<double>(gt.size());
}

double mon_ade(std::span<const std::vector<Vec2>> mode_deltas, std::span<const Vec2> gt) {
    if (mode_deltas.empty()) throw ContractViolation("mon_ade: no modes");
    double best = std::numeric_limits<double>::infinity();
    for (const auto& m : mode_deltas) best = std::min(best, ade(predict_pose(m), gt));
    return best;
}

double skill_mse(std::span<const double> pred, std::span<const double> gt) {
    if (pred.size() != gt.size() || gt.empty()) throw ContractViolation("skill_mse: dimension mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < gt.size(); ++i) acc += (gt[i] - pred[i]) * (gt[i] - pred[i]);
    return acc / static_cast<double>(gt.size());
}

LossReport total_loss(std::span<const ModelOutput> outputs, std::span<const Targets> targets,
                      const LossCoefficients& coeffs, std::span<const double> class_w) {
    if (outputs.size() != targets.size()) throw ContractViolation("total_loss: outputs/targets size mismatch");
    LossReport r;
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        const auto& o = outputs[i];
        const auto& t = targets[i];
        if (t.teacher) {
            r.teacher += wbce(o.teacher_probs, *t.teacher, class_w);
            ++r.n_teacher;
        }
        if (t.future) {
            r.trajectory += mon_ade(o.traj_modes, *t.future);
            ++r.n_trajectory;
        }
        if (t.skill) {
            r.skill += skill_mse(o.skill_pred, *t.skill);
            ++r.n_skill;
        }
    }
    if (r.n_teacher + r.n_trajectory + r.n_skill == 0) throw ContractViolation("total_loss: batch has no targets");
    if (r.n_teacher) r.teacher /= static_cast<double>(r.n_teacher);
    if (r.n_trajectory) r.trajectory /= static_cast<double>(r.n_trajectory);
    if (r.n_skill) r.skill /= static_cast<double>(r.n_skill);
    r.total = coeffs.a1 * r.teacher + coeffs.a2 * r.trajectory + coeffs.a3 * r.skill;
    return r;
}

}  // namespace coach
