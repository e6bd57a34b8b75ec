#include "coach/model.hpp"

#include "coach/errors.hpp"
#include "coach/loss_ops.hpp"

#include <algorithm>
#include <numeric>
#include <tuple>

namespace coach {

void ModelConfig::validate() const {
    auto need = [](bool ok, const char* what) {
        if (!ok) throw ConfigError(std::string("model config: ") + what);
    };
    need(d_model > 0 && n_heads > 0 && d_model % n_heads == 0, "d_model must be a positive multiple of n_heads");
    need(P_max >= 1 && N_steps >= 1 && M_steps >= 1, "P_max, N_steps and M_steps must be positive");
    need(Q_modes >= 1, "Q_modes must be at least 1");
    need(n_map_tokens >= 1 && map_pts_per_polyline >= 2, "map token settings out of range");
    need(action_dim >= 1 && skill_dim >= 1 && head_hidden >= 1, "head sizes must be positive");
}

nlohmann::json model_config_to_json(const ModelConfig& c) {
    return {{"d_model", c.d_model},
            {"n_heads", c.n_heads},
            {"enc_layers", c.enc_layers},
            {"P_max", c.P_max},
            {"N_steps", c.N_steps},
            {"M_steps", c.M_steps},
            {"Q_modes", c.Q_modes},
            {"n_map_tokens", c.n_map_tokens},
            {"map_pts_per_polyline", c.map_pts_per_polyline},
            {"action_dim", c.action_dim},
            {"skill_dim", c.skill_dim},
            {"head_hidden", c.head_hidden},
            {"multilabel", c.multilabel}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    auto get = [&](const char* k, std::size_t& dst) {
        if (j.contains(k)) dst = j.at(k).get<std::size_t>();
    };
    try {
        get("d_model", c.d_model);
        get("n_heads", c.n_heads);
        get("enc_layers", c.enc_layers);
        get("P_max", c.P_max);
        get("N_steps", c.N_steps);
        get("M_steps", c.M_steps);
        get("Q_modes", c.Q_modes);
        get("n_map_tokens", c.n_map_tokens);
        get("map_pts_per_polyline", c.map_pts_per_polyline);
        get("action_dim", c.action_dim);
        get("skill_dim", c.skill_dim);
        get("head_hidden", c.head_hidden);
        if (j.contains("multilabel")) c.multilabel = j.at("multilabel").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

ModelConfig default_model_config(TaskKind kind) {
    ModelConfig c;
    if (kind == TaskKind::kTrack) {
        c.P_max = 1;
        c.M_steps = 40;
        c.action_dim = kTrackActions.size();
        c.multilabel = true;
    }
    return c;
}

std::vector<nn::ParamSpec> model_param_specs(const ModelConfig& c) {
    c.validate();
    const std::size_t d = c.d_model, ff = c.ff_dim(), h = c.head_hidden;
    nn::SpecBuilder sb;
    sb.linear("traj.in.l1", kStepFeatures, d);
    sb.linear("traj.in.l2", d, d);
    sb.add("traj.pos", {c.N_steps, d}, nn::InitKind::kNormal02);
    for (std::size_t l = 0; l < c.enc_layers; ++l) sb.block("traj.enc" + std::to_string(l), d, ff);
    sb.linear("map.node.l1", 2, d);
    sb.linear("map.node.l2", d, d);
    sb.add("map.role", {kRoleCount, d}, nn::InitKind::kNormal02);
    sb.block("map.enc", d, ff);
    sb.block("fuse", d, ff, /*cross=*/true);
    sb.add("seq.scen", {c.P_max, d}, nn::InitKind::kNormal02);
    sb.add("seq.anchor", {c.Q_modes, d}, nn::InitKind::kNormal02);
    sb.block("seq.enc", d, ff);
    sb.linear("latent", (c.P_max + c.N_steps) * d, d);
    sb.linear("head.teacher.l1", d, h);
    sb.linear("head.teacher.l2", h, c.action_dim);
    sb.linear("head.skill.l1", d, h);
    sb.linear("head.skill.l2", h, c.skill_dim);
    sb.linear("head.traj.l1", 2 * d, h);
    sb.linear("head.traj.l2", h, 2 * c.M_steps);
    return sb.specs();
}

std::size_t param_count(const ModelConfig& c) {
    std::size_t n = 0;
    for (const auto& s : model_param_specs(c)) n += nn::shape_numel(s.shape);
    return n;
}

// ---------------------------------------------------------------- features

std::vector<std::size_t> select_map_polylines(const LocalMap& map, std::size_t limit) {
    const auto& pl = map.polylines;
    std::vector<std::size_t> idx(pl.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (pl.size() <= limit) return idx;
    auto key = [&](std::size_t i) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& p : pl[i].pts) best = std::min(best, norm(p));
        return best;
    };
    std::vector<double> dist(pl.size());
    for (std::size_t i = 0; i < pl.size(); ++i) dist[i] = key(i);
    auto content_less = [&](std::size_t a, std::size_t b) {
        const auto& A = pl[a];
        const auto& B = pl[b];
        if (A.role != B.role) return A.role < B.role;
        if (A.lane_id != B.lane_id) return A.lane_id < B.lane_id;
        return std::lexicographical_compare(A.pts.begin(), A.pts.end(), B.pts.begin(), B.pts.end(),
                                            [](Vec2 u, Vec2 v) { return std::tie(u.x, u.y) < std::tie(v.x, v.y); });
    };
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (dist[a] != dist[b]) return dist[a] < dist[b];
        return content_less(a, b);
    });
    idx.resize(limit);
    std::sort(idx.begin(), idx.end());
    return idx;
}

ScenarioFeatures featurize_scenario(const Scenario& sc, const ModelConfig& c) {
    const auto& st = sc.past.states;
    if (st.size() != c.N_steps)
        throw DataError("scenario past has " + std::to_string(st.size()) + " steps, model expects " +
                        std::to_string(c.N_steps));
    ScenarioFeatures f;
    f.steps.reserve(c.N_steps * kStepFeatures);
    for (std::size_t k = 0; k < st.size(); ++k) {
        const Vec2 d = k == 0 ? Vec2{} : st[k].pos() - st[k - 1].pos();
        const double row[kStepFeatures] = {d.x, d.y, std::sin(st[k].yaw), std::cos(st[k].yaw), st[k].v / 30.0,
                                           st[k].steer, st[k].accel};
        for (double x : row) f.steps.push_back(static_cast<float>(x));
    }
    const std::size_t pts = c.map_pts_per_polyline;
    for (std::size_t i : select_map_polylines(sc.local_map, c.n_map_tokens)) {
        const Polyline& pl = sc.local_map.polylines[i];
        if (pl.pts.empty()) continue;
        std::vector<Vec2> r;
        if (pl.pts.size() < 2 || polyline_length(pl.pts) <= 0.0)
            r.assign(pts, pl.pts.front());
        else
            r = resample_polyline(pl.pts, pts);
        for (const auto& p : r) {
            f.map_pts.push_back(static_cast<float>(p.x / kMapScale));
            f.map_pts.push_back(static_cast<float>(p.y / kMapScale));
        }
        f.roles.push_back(static_cast<std::size_t>(pl.role));
    }
    return f;
}

SampleInput featurize(const SequenceSample& s, const ModelConfig& c) {
    if (s.scenarios.size() > c.P_max)
        throw DataError("sample '" + s.id + "' has " + std::to_string(s.scenarios.size()) +
                        " scenarios, model allows " + std::to_string(c.P_max));
    SampleInput in;
    for (const auto& sc : s.scenarios) in.scenarios.push_back(featurize_scenario(sc, c));
    return in;
}

ModelOutput run_model(const nn::ParamStore<float>& params, const ModelConfig& c, const SampleInput& in) {
    nn::Graph<float> g(false);
    nn::Binder<float, const nn::ParamStore<float>> b(g, params);
    const HeadVars h = forward_graph(b, in, c);
    return read_outputs(g, h, c);
}

std::vector<ModelOutput> run_batch(const nn::ParamStore<float>& params, const ModelConfig& c,
                                   std::span<const SampleInput> batch) {
    std::vector<ModelOutput> out;
    out.reserve(batch.size());
    for (const auto& in : batch) {
        if (in.scenarios.size() != batch.front().scenarios.size())
            throw ContractViolation("batch mixes sequences of " + std::to_string(batch.front().scenarios.size()) +
                                    " and " + std::to_string(in.scenarios.size()) + " scenarios");
        out.push_back(run_model(params, c, in));
    }
    return out;
}

TermScales term_scales(std::span<const Targets> batch, const LossCoefficients& coeffs) {
    std::size_t nt = 0, nb = 0, ns = 0;
    for (const auto& t : batch) {
        nt += t.teacher.has_value();
        nb += t.future.has_value();
        ns += t.skill.has_value();
    }
    if (nt + nb + ns == 0) throw ContractViolation("batch has no targets");
    TermScales s;
    if (nt) s.teacher = coeffs.a1 / static_cast<double>(nt);
    if (nb) s.trajectory = coeffs.a2 / static_cast<double>(nb);
    if (ns) s.skill = coeffs.a3 / static_cast<double>(ns);
    return s;
}

}  // namespace coach
