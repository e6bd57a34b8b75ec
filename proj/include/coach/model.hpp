#pragma once
/**
 * @file  model.hpp
 * @brief Scenario encoder, sequence-level latent and the teacher /
 *        trajectory / skill heads.
 *
 * Per scenario: step features -> MLP + learned time embedding -> self-attention
 * blocks; map polylines -> point MLP + max-pool (+ role embedding) ->
 * self-attention without positions; trajectory tokens cross-attend to map
 * tokens. Per sequence: all P x N tokens (+ scenario-index embedding) and
 * Q anchor tokens go through one self-attention block. The latent is a
 * linear projection of [per-scenario max over time | per-time max over
 * scenarios], both flattened.
 */

#include "coach/dataset.hpp"
#include "coach/losses.hpp"
#include "coach/nn/layers.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace coach {

struct ModelConfig {
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t enc_layers = 2;
    std::size_t P_max = 5;
    std::size_t N_steps = 40;
    std::size_t M_steps = 30;
    std::size_t Q_modes = 5;
    std::size_t n_map_tokens = 16;
    std::size_t map_pts_per_polyline = 10;
    std::size_t action_dim = 3;
    std::size_t skill_dim = 2;
    std::size_t head_hidden = 64;
    bool multilabel = false;  ///< argmax (urban) vs thresholded (track) predictions

    void validate() const;
    [[nodiscard]] std::size_t ff_dim() const { return 2 * d_model; }
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::json model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Shape defaults for a dataset kind (P, M, action_dim, multilabel).
ModelConfig default_model_config(TaskKind kind);

std::vector<nn::ParamSpec> model_param_specs(const ModelConfig& c);
std::size_t param_count(const ModelConfig& c);

inline constexpr std::size_t kStepFeatures = 7;
inline constexpr std::size_t kRoleCount = 4;
/// Map coordinates enter the model in units of this many meters.
inline constexpr double kMapScale = 20.0;

/// Model-ready inputs of one scenario.
struct ScenarioFeatures {
    std::vector<float> steps;     ///< N x 7: dx, dy, sin yaw, cos yaw, v/30, steer, accel
    std::vector<float> map_pts;   ///< K x (pts * 2), ego-frame coordinates / kMapScale
    std::vector<std::size_t> roles;  ///< K role indices
};

struct SampleInput {
    std::vector<ScenarioFeatures> scenarios;
};

/// Map polylines kept for the model: the n_map_tokens nearest to the origin
/// (ties broken by content), in their original relative order.
std::vector<std::size_t> select_map_polylines(const LocalMap& map, std::size_t limit);

ScenarioFeatures featurize_scenario(const Scenario& sc, const ModelConfig& c);
SampleInput featurize(const SequenceSample& s, const ModelConfig& c);

// ----------------------------------------------------------------- graph

template <typename T>
nn::Tensor<T> to_tensor(const std::vector<float>& v, nn::Shape shape) {
    nn::Tensor<T> t(std::move(shape));
    for (std::size_t i = 0; i < v.size(); ++i) t.data[i] = static_cast<T>(v[i]);
    return t;
}

struct HeadVars {
    nn::Var teacher_logits;  ///< 1 x action_dim
    nn::Var teacher_probs;   ///< sigmoid of the logits
    nn::Var traj;           ///< Q x (M * 2) per-step deltas, (dx, dy) interleaved
    nn::Var skill;          ///< 1 x skill_dim
};

/// N x d trajectory tokens before map fusion.
template <typename T, typename Store>
nn::Var encode_trajectory(nn::Binder<T, Store>& b, const ScenarioFeatures& f, const ModelConfig& c) {
    auto& g = b.g();
    const std::size_t N = c.N_steps;
    if (f.steps.size() != N * kStepFeatures)
        throw ContractViolation("scenario has " + std::to_string(f.steps.size() / kStepFeatures) +
                                " steps, model expects " + std::to_string(N));
    nn::Var x = b.mlp2("traj.in", g.constant(to_tensor<T>(f.steps, {N, kStepFeatures})));
    x = g.add(x, b.p("traj.pos"));
    for (std::size_t l = 0; l < c.enc_layers; ++l) x = b.self_block("traj.enc" + std::to_string(l), x, c.n_heads);
    return x;
}

/// N x d fused trajectory tokens of one scenario; without map tokens the
/// fusion step is skipped.
template <typename T, typename Store>
nn::Var encode_scenario(nn::Binder<T, Store>& b, const ScenarioFeatures& f, const ModelConfig& c) {
    auto& g = b.g();
    const nn::Var x = encode_trajectory(b, f, c);
    const std::size_t K = f.roles.size();
    if (K == 0) return x;
    const std::size_t pts = c.map_pts_per_polyline;
    nn::Var nodes = b.mlp2("map.node", g.constant(to_tensor<T>(f.map_pts, {K * pts, 2})));
    nn::Var tokens = g.max_pool_rows(nodes, pts);  // K x d
    tokens = g.add(tokens, g.embedding_lookup(b.p("map.role"), f.roles));
    tokens = b.self_block("map.enc", tokens, c.n_heads);
    return b.cross_block("fuse", x, tokens, c.n_heads);
}

template <typename T, typename Store>
HeadVars forward_graph(nn::Binder<T, Store>& b, const SampleInput& in, const ModelConfig& c) {
    auto& g = b.g();
    const std::size_t P = in.scenarios.size(), N = c.N_steps, d = c.d_model, Q = c.Q_modes;
    if (P == 0 || P > c.P_max)
        throw ContractViolation("sequence has " + std::to_string(P) + " scenarios, model allows 1.." +
                                std::to_string(c.P_max));

    std::vector<nn::Var> enc;
    enc.reserve(P + 1);
    for (std::size_t p = 0; p < P; ++p) {
        const nn::Var e = encode_scenario(b, in.scenarios[p], c);
        std::vector<std::size_t> idx(N, p);
        enc.push_back(g.add(e, g.embedding_lookup(b.p("seq.scen"), std::move(idx))));
    }
    enc.push_back(b.p("seq.anchor"));
    nn::Var all = b.self_block("seq.enc", g.concat_rows(enc), c.n_heads);
    const nn::Var steps = g.slice_rows(all, 0, P * N);
    const nn::Var anchors = g.slice_rows(all, P * N, Q);

    std::vector<nn::Var> pooled;
    pooled.push_back(g.reshape(g.max_pool_rows(steps, N), {1, P * d}));
    if (P < c.P_max) pooled.push_back(g.constant(nn::Tensor<T>({1, (c.P_max - P) * d})));
    pooled.push_back(g.reshape(g.max_pool_strided(steps, N), {1, N * d}));
    const nn::Var z = b.linear("latent", g.concat_cols(pooled));

    HeadVars out;
    out.teacher_logits = b.mlp2("head.teacher", z);
    out.teacher_probs = g.sigmoid(out.teacher_logits);
    out.skill = b.mlp2("head.skill", z);
    const nn::Var zq = g.matmul(g.constant(nn::Tensor<T>({Q, 1}, T(1))), z);  // z repeated per mode
    const nn::Var both[] = {zq, anchors};
    out.traj = b.mlp2("head.traj", g.concat_cols(both));
    return out;
}

/// Inference on an immutable store (thread-safe).
ModelOutput run_model(const nn::ParamStore<float>& params, const ModelConfig& c, const SampleInput& in);

/// Each sample is evaluated on its own graph, so outputs do not depend on
/// batch composition. Throws ContractViolation when P differs within the batch.
std::vector<ModelOutput> run_batch(const nn::ParamStore<float>& params, const ModelConfig& c,
                                   std::span<const SampleInput> batch);

/// Converts head values into a ModelOutput.
template <typename T>
ModelOutput read_outputs(const nn::Graph<T>& g, const HeadVars& h, const ModelConfig& c) {
    ModelOutput o;
    for (T v : g.value(h.teacher_probs).data) o.teacher_probs.push_back(static_cast<double>(v));
    for (T v : g.value(h.skill).data) o.skill_pred.push_back(static_cast<double>(v));
    const auto& tr = g.value(h.traj);
    for (std::size_t q = 0; q < c.Q_modes; ++q) {
        std::vector<Vec2> mode(c.M_steps);
        for (std::size_t t = 0; t < c.M_steps; ++t)
            mode[t] = {static_cast<double>(tr(q, 2 * t)), static_cast<double>(tr(q, 2 * t + 1))};
        o.traj_modes.push_back(std::move(mode));
    }
    return o;
}

}  // namespace coach
