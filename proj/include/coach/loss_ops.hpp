#pragma once
/**
 * @file  loss_ops.hpp
 * @brief The teacher, trajectory and skill losses as differentiable graph
 *        nodes, plus the per-sample masked combination used in training.
 */

#include "coach/losses.hpp"
#include "coach/model.hpp"
#include "coach/nn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace coach {

/// wBCE of a [1 x C] row of logits. Same value as wbce() on the sigmoid
/// probabilities (the probability clamp becomes a logit clamp), but
/// log(sigmoid) is evaluated as -softplus so saturated outputs keep full
/// precision.
template <typename T>
nn::Var wbce_node(nn::Graph<T>& g, nn::Var logits, const std::vector<std::uint8_t>& y, const std::vector<double>& w) {
    const auto& x = g.value(logits);
    const std::size_t C = x.size();
    if (y.size() != C || w.size() != C)
        throw ContractViolation("wbce: " + std::to_string(C) + " logits, " + std::to_string(y.size()) +
                                " labels, " + std::to_string(w.size()) + " weights");
    const T lim = static_cast<T>(std::log((1.0 - kProbClamp) / kProbClamp));
    auto softplus = [](T v) { return std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v))); };
    T acc = 0;
    for (std::size_t c = 0; c < C; ++c) {
        const T xc = std::clamp(x.data[c], -lim, lim);
        if (g.tracking_pattern()) g.mix_pattern(x.data[c] < -lim ? 1 : x.data[c] > lim ? 2 : 0);
        acc += y[c] ? static_cast<T>(w[c]) * softplus(-xc) : softplus(xc);
    }
    const T inv_c = T(1) / static_cast<T>(C);
    return g.custom(nn::Tensor<T>({1}, {acc * inv_c}), {logits}, [&g, logits, y, w, lim, inv_c](int self) {
        const T go = g.grad_of(nn::Var{self}).data[0];
        const auto& xv = g.value(logits).data;
        auto& gx = g.grad_of(logits).data;
        for (std::size_t c = 0; c < xv.size(); ++c) {
            const T xc = xv[c];
            if (xc < -lim || xc > lim) continue;  // clamped: flat
            const T sig = T(1) / (T(1) + std::exp(-xc));
            const T d = y[c] ? -static_cast<T>(w[c]) * (T(1) - sig) : sig;
            gx[c] += go * inv_c * d;
        }
    });
}

/// Minimum over modes of the mean displacement between cumulative-sum poses
/// and `gt`. `traj` is Q x (M * 2) deltas.
template <typename T>
nn::Var mon_ade_node(nn::Graph<T>& g, nn::Var traj, const std::vector<Vec2>& gt) {
    const auto& D = g.value(traj);
    const std::size_t Q = D.rows(), M = gt.size();
    if (D.cols() != 2 * M)
        throw ContractViolation("mon_ade: predictions " + nn::shape_str(D.shape) + " vs " + std::to_string(M) +
                                " ground-truth steps");
    T best = std::numeric_limits<T>::infinity();
    std::size_t arg = 0;
    for (std::size_t q = 0; q < Q; ++q) {
        T x = 0, y = 0, acc = 0;
        for (std::size_t t = 0; t < M; ++t) {
            x += D(q, 2 * t);
            y += D(q, 2 * t + 1);
            acc += std::hypot(x - static_cast<T>(gt[t].x), y - static_cast<T>(gt[t].y));
        }
        acc /= static_cast<T>(M);
        if (acc < best) best = acc, arg = q;
    }
    if (g.tracking_pattern()) g.mix_pattern(arg);
    return g.custom(nn::Tensor<T>({1}, {best}), {traj}, [&g, traj, gt, arg](int self) {
        const T go = g.grad_of(nn::Var{self}).data[0];
        const auto& Dv = g.value(traj);
        auto& G = g.grad_of(traj);
        const std::size_t Mm = gt.size();
        std::vector<T> gx(Mm), gy(Mm);
        T x = 0, y = 0;
        for (std::size_t t = 0; t < Mm; ++t) {
            x += Dv(arg, 2 * t);
            y += Dv(arg, 2 * t + 1);
            const T ex = x - static_cast<T>(gt[t].x), ey = y - static_cast<T>(gt[t].y);
            const T n = std::hypot(ex, ey);
            if (n > T(0)) {
                gx[t] = ex / (n * static_cast<T>(Mm));
                gy[t] = ey / (n * static_cast<T>(Mm));
            }
        }
        // pose_t depends on every delta_i with i <= t
        T sx = 0, sy = 0;
        for (std::size_t i = Mm; i-- > 0;) {
            sx += gx[i];
            sy += gy[i];
            G(arg, 2 * i) += go * sx;
            G(arg, 2 * i + 1) += go * sy;
        }
    });
}

/// Mean squared error of a [1 x S] prediction.
template <typename T>
nn::Var skill_mse_node(nn::Graph<T>& g, nn::Var pred, const std::vector<double>& gt) {
    const auto& p = g.value(pred);
    if (p.size() != gt.size())
        throw ContractViolation("skill_mse: prediction " + nn::shape_str(p.shape) + " vs " +
                                std::to_string(gt.size()) + " targets");
    T acc = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const T e = p.data[i] - static_cast<T>(gt[i]);
        acc += e * e;
    }
    const T inv = T(1) / static_cast<T>(gt.size());
    return g.custom(nn::Tensor<T>({1}, {acc * inv}), {pred}, [&g, pred, gt, inv](int self) {
        const T go = g.grad_of(nn::Var{self}).data[0];
        const auto& pv = g.value(pred).data;
        auto& gp = g.grad_of(pred).data;
        for (std::size_t i = 0; i < gt.size(); ++i) gp[i] += go * T(2) * inv * (pv[i] - static_cast<T>(gt[i]));
    });
}

/// Per-term multipliers for one sample: the coefficient divided by the
/// number of samples in the batch carrying that term's target.
struct TermScales {
    double teacher = 0.0;
    double trajectory = 0.0;
    double skill = 0.0;
};

TermScales term_scales(std::span<const Targets> batch, const LossCoefficients& coeffs);

/// This sample's contribution to the batch total loss; nullopt when the
/// sample carries no target with a non-zero scale.
template <typename T>
std::optional<nn::Var> sample_loss(nn::Graph<T>& g, const HeadVars& h, const Targets& t, const TermScales& s,
                                   const std::vector<double>& class_w) {
    std::optional<nn::Var> total;
    auto add = [&](nn::Var term, double k) {
        const nn::Var scaled = g.scale(term, static_cast<T>(k));
        total = total ? g.add(*total, scaled) : scaled;
    };
    if (t.teacher && s.teacher != 0.0) add(wbce_node(g, h.teacher_logits, *t.teacher, class_w), s.teacher);
    if (t.future && s.trajectory != 0.0) add(mon_ade_node(g, h.traj, *t.future), s.trajectory);
    if (t.skill && s.skill != 0.0) add(skill_mse_node(g, h.skill, *t.skill), s.skill);
    return total;
}

}  // namespace coach
