#include "coach/train.hpp"

#include "coach/errors.hpp"
#include "coach/io.hpp"
#include "coach/loss_ops.hpp"
#include "coach/metrics.hpp"
#include "coach/rng.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace coach {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

// ------------------------------------------------------------------ config

void TrainConfig::validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (max_epochs == 0) throw ConfigError("max_epochs must be >= 1");
    if (patience == 0) throw ConfigError("patience must be >= 1");
    if (!(val_fraction > 0.0 && val_fraction <= 0.5)) throw ConfigError("val_fraction must be in (0, 0.5]");
    if (precision != "f32") throw ConfigError("precision '" + precision + "' not supported (f32 only)");
    if (monitor != "val" && monitor != "train") throw ConfigError("monitor must be 'val' or 'train'");
    for (double a : {coeffs.a1, coeffs.a2, coeffs.a3})
        if (!(a >= 0.0) || !std::isfinite(a)) throw ConfigError("loss coefficients must be finite and >= 0");
    if (!model.is_object()) throw ConfigError("model overrides must be an object");
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
    nlohmann::json j{{"tasks", to_string(c.tasks)},
                     {"lr", c.lr},
                     {"batch_size", c.batch_size},
                     {"max_epochs", c.max_epochs},
                     {"patience", c.patience},
                     {"seed", c.seed},
                     {"coeffs", {c.coeffs.a1, c.coeffs.a2, c.coeffs.a3}},
                     {"labeled_path", c.labeled_path},
                     {"unlabeled_path", c.unlabeled_path},
                     {"val_fraction", c.val_fraction},
                     {"precision", c.precision},
                     {"monitor", c.monitor},
                     {"model", c.model},
                     {"log_path", c.log_path}};
    j["target_f1"] = c.target_f1 ? nlohmann::json(*c.target_f1) : nlohmann::json(nullptr);
    return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    static const std::set<std::string> known{"tasks",        "lr",        "batch_size",     "max_epochs",
                                             "patience",     "seed",      "coeffs",         "labeled_path",
                                             "unlabeled_path", "val_fraction", "precision", "monitor",
                                             "target_f1",    "model",     "log_path"};
    if (!j.is_object()) throw ConfigError("train config must be a JSON object");
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) throw ConfigError("unknown train config key '" + k + "'");
    TrainConfig c;
    try {
        if (j.contains("tasks")) c.tasks = task_set_from_string(j.at("tasks").get<std::string>());
        if (j.contains("lr")) c.lr = j.at("lr").get<double>();
        if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<std::size_t>();
        if (j.contains("max_epochs")) c.max_epochs = j.at("max_epochs").get<std::size_t>();
        if (j.contains("patience")) c.patience = j.at("patience").get<std::size_t>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("coeffs")) {
            const auto a = j.at("coeffs").get<std::vector<double>>();
            if (a.size() != 3) throw ConfigError("coeffs needs three values");
            c.coeffs = {a[0], a[1], a[2]};
        }
        if (j.contains("labeled_path")) c.labeled_path = j.at("labeled_path").get<std::string>();
        if (j.contains("unlabeled_path")) c.unlabeled_path = j.at("unlabeled_path").get<std::string>();
        if (j.contains("val_fraction")) c.val_fraction = j.at("val_fraction").get<double>();
        if (j.contains("precision")) c.precision = j.at("precision").get<std::string>();
        if (j.contains("monitor")) c.monitor = j.at("monitor").get<std::string>();
        if (j.contains("target_f1") && !j.at("target_f1").is_null()) c.target_f1 = j.at("target_f1").get<double>();
        if (j.contains("model")) c.model = j.at("model");
        if (j.contains("log_path")) c.log_path = j.at("log_path").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

ModelConfig model_config_for(const DatasetMeta& meta, const nlohmann::json& overrides) {
    nlohmann::json j = model_config_to_json(default_model_config(meta.kind));
    if (meta.P) j["P_max"] = meta.P;
    if (meta.N) j["N_steps"] = meta.N;
    if (meta.M) j["M_steps"] = meta.M;
    for (const auto& [k, v] : overrides.items()) {
        if (!j.contains(k)) throw ConfigError("unknown model key '" + k + "'");
        j[k] = v;
    }
    return model_config_from_json(j);
}

std::vector<double> SkillStats::normalize(const std::vector<double>& v) const {
    if (v.size() != mean.size())
        throw DataError("skill vector has " + std::to_string(v.size()) + " components, expected " +
                        std::to_string(mean.size()));
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean[i]) / std[i];
    return out;
}

// -------------------------------------------------------------- checkpoint

namespace {

nlohmann::json shape_json(const nn::Shape& s) { return nlohmann::json(std::vector<std::size_t>(s.begin(), s.end())); }

std::string config_hash(const ModelConfig& c) { return fnv1a_hex(model_config_to_json(c).dump()); }

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(std::string_view b) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ck) {
    nlohmann::json manifest = nlohmann::json::array();
    for (std::size_t i = 0; i < ck.params.size(); ++i)
        manifest.push_back({{"name", ck.params.name(i)}, {"shape", shape_json(ck.params.value(i).shape)}});
    const nlohmann::json meta{{"format", 1},
                              {"model", model_config_to_json(ck.model)},
                              {"config_hash", config_hash(ck.model)},
                              {"kind", to_string(ck.kind)},
                              {"action_set", action_set(ck.kind)},
                              {"tasks", to_string(ck.tasks)},
                              {"seed", ck.seed},
                              {"epoch", ck.epoch},
                              {"epochs_run", ck.epochs_run},
                              {"best_f1", ck.best_f1},
                              {"dataset_hashes", {{"labeled", ck.labeled_hash}, {"unlabeled", ck.unlabeled_hash}}},
                              {"skill_mean", ck.skill.mean},
                              {"skill_std", ck.skill.std},
                              {"traj_scale", ck.traj_scale},
                              {"class_weights", ck.class_weights},
                              {"manifest", manifest}};
    const std::string js = meta.dump();
    std::string out(kCheckpointMagic);
    put_u64(out, js.size());
    out += js;
    const std::size_t head = out.size();
    out.resize(head + 4 * ck.params.numel());
    char* dst = out.data() + head;
    for (std::size_t i = 0; i < ck.params.size(); ++i) {
        const auto& d = ck.params.value(i).data;
        std::memcpy(dst, d.data(), 4 * d.size());
        dst += 4 * d.size();
    }
    return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
    const std::size_t m = kCheckpointMagic.size();
    if (bytes.size() < m + 8 || bytes.substr(0, m) != kCheckpointMagic) throw DataError("not a checkpoint (bad magic)");
    const std::uint64_t len = get_u64(bytes.substr(m, 8));
    if (bytes.size() < m + 8 + len) throw DataError("checkpoint truncated in metadata");
    Checkpoint ck;
    std::size_t expect_floats = 0;
    try {
        const auto meta = nlohmann::json::parse(bytes.substr(m + 8, len));
        if (meta.at("format").get<int>() != 1) throw DataError("unsupported checkpoint format");
        ck.model = model_config_from_json(meta.at("model"));
        if (meta.at("config_hash").get<std::string>() != config_hash(ck.model))
            throw DataError("checkpoint config hash mismatch");
        ck.kind = task_kind_from_string(meta.at("kind").get<std::string>());
        ck.tasks = task_set_from_string(meta.at("tasks").get<std::string>());
        ck.seed = meta.at("seed").get<std::uint64_t>();
        ck.epoch = meta.at("epoch").get<std::size_t>();
        ck.epochs_run = meta.at("epochs_run").get<std::size_t>();
        ck.best_f1 = meta.at("best_f1").get<double>();
        ck.labeled_hash = meta.at("dataset_hashes").at("labeled").get<std::string>();
        ck.unlabeled_hash = meta.at("dataset_hashes").at("unlabeled").get<std::string>();
        ck.skill.mean = meta.at("skill_mean").get<std::vector<double>>();
        ck.skill.std = meta.at("skill_std").get<std::vector<double>>();
        ck.traj_scale = meta.at("traj_scale").get<double>();
        ck.class_weights = meta.at("class_weights").get<std::vector<double>>();

        const auto specs = model_param_specs(ck.model);
        const auto& manifest = meta.at("manifest");
        if (manifest.size() != specs.size())
            throw DataError("checkpoint manifest lists " + std::to_string(manifest.size()) + " parameters, config needs " +
                            std::to_string(specs.size()));
        for (std::size_t i = 0; i < specs.size(); ++i) {
            const auto name = manifest[i].at("name").get<std::string>();
            const auto shape = manifest[i].at("shape").get<std::vector<std::size_t>>();
            if (name != specs[i].name || nn::Shape(shape.begin(), shape.end()) != specs[i].shape)
                throw DataError("checkpoint manifest entry " + std::to_string(i) + " (" + name +
                                ") does not match the model config");
            ck.params.add(name, specs[i].shape);
            expect_floats += ck.params.value(i).size();
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint metadata: ") + e.what());
    } catch (const ConfigError& e) {
        throw DataError(std::string("checkpoint metadata: ") + e.what());
    }
    const std::size_t head = m + 8 + len;
    if (bytes.size() != head + 4 * expect_floats)
        throw DataError("checkpoint payload has " + std::to_string(bytes.size() - head) + " bytes, expected " +
                        std::to_string(4 * expect_floats));
    const char* src = bytes.data() + head;
    for (std::size_t i = 0; i < ck.params.size(); ++i) {
        auto& d = ck.params.value(i).data;
        std::memcpy(d.data(), src, 4 * d.size());
        src += 4 * d.size();
    }
    return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) { write_file_atomic(path, serialize_checkpoint(ck)); }

Checkpoint load_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path)); }

std::string model_hash(const Checkpoint& ck) { return fnv1a_hex(serialize_checkpoint(ck)); }

std::string dataset_hash(const Dataset& ds) {
    std::string all;
    for (const auto& s : ds.samples) {
        all += sample_to_json(s).dump();
        all.push_back('\n');
    }
    return fnv1a_hex(all);
}

// ---------------------------------------------------------------- training

namespace {

double teacher_f1(const ProbRows& probs, const LabelRows& labels, bool multilabel) {
    if (probs.empty()) return 0.0;
    return multilabel ? weighted_f1_multilabel(probs, labels).weighted_f1
                      : weighted_f1_multiclass(probs, labels).weighted_f1;
}

struct Prepared {
    SampleInput input;
    Targets targets;
};

class AdamW {
  public:
    AdamW(const nn::ParamStore<float>& p, double lr) : lr_(lr) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            m_.emplace_back(p.value(i).size(), 0.0f);
            v_.emplace_back(p.value(i).size(), 0.0f);
        }
    }

    void step(nn::ParamStore<float>& p) {
        ++t_;
        const double bc1 = 1.0 - std::pow(kB1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(kB2, static_cast<double>(t_));
        const float lr = static_cast<float>(lr_), wd = static_cast<float>(lr_ * kDecay);
        const float b1 = static_cast<float>(kB1), b2 = static_cast<float>(kB2);
        const float c1 = static_cast<float>(1.0 / bc1), c2 = static_cast<float>(1.0 / bc2);
        for (std::size_t i = 0; i < p.size(); ++i) {
            auto& w = p.value(i).data;
            const auto& g = p.grad(i).data;
            auto& m = m_[i];
            auto& v = v_[i];
            for (std::size_t k = 0; k < w.size(); ++k) {
                m[k] = b1 * m[k] + (1.0f - b1) * g[k];
                v[k] = b2 * v[k] + (1.0f - b2) * g[k] * g[k];
                w[k] -= lr * (m[k] * c1) / (std::sqrt(v[k] * c2) + kEps) + wd * w[k];
            }
        }
    }

  private:
    static constexpr double kB1 = 0.9, kB2 = 0.999, kDecay = 0.01;
    static constexpr float kEps = 1e-8f;
    double lr_;
    std::size_t t_ = 0;
    std::vector<std::vector<float>> m_, v_;
};

/// Validation indices: a seeded shuffle of the labeled samples, first
/// round(val_fraction * n) of them (at least one, leaving at least one).
void split(std::vector<std::size_t> labeled, double val_fraction, std::uint64_t seed, std::vector<std::size_t>& train,
           std::vector<std::size_t>& val) {
    const std::size_t n = labeled.size();
    if (n < 2) throw DataError("need at least 2 labeled samples for a train/validation split, got " + std::to_string(n));
    std::mt19937_64 rng(derive_seed(seed, 0x5711));
    std::shuffle(labeled.begin(), labeled.end(), rng);
    std::size_t nv = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
    nv = std::clamp<std::size_t>(nv, 1, n - 1);
    val.assign(labeled.begin(), labeled.begin() + static_cast<std::ptrdiff_t>(nv));
    train.assign(labeled.begin() + static_cast<std::ptrdiff_t>(nv), labeled.end());
    std::sort(val.begin(), val.end());
    std::sort(train.begin(), train.end());
}

SkillStats skill_stats(const std::vector<const SequenceSample*>& pool, std::size_t dim) {
    SkillStats st{std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)};
    std::size_t n = 0;
    for (const auto* s : pool)
        if (s->skill_gt.size() == dim) {
            for (std::size_t i = 0; i < dim; ++i) st.mean[i] += s->skill_gt[i];
            ++n;
        }
    if (n == 0) return st;
    for (auto& m : st.mean) m /= static_cast<double>(n);
    std::vector<double> var(dim, 0.0);
    for (const auto* s : pool)
        if (s->skill_gt.size() == dim)
            for (std::size_t i = 0; i < dim; ++i) var[i] += (s->skill_gt[i] - st.mean[i]) * (s->skill_gt[i] - st.mean[i]);
    for (std::size_t i = 0; i < dim; ++i) {
        const double sd = std::sqrt(var[i] / static_cast<double>(n));
        st.std[i] = sd > 1e-12 ? sd : 1.0;
    }
    return st;
}

/// Mean |position| over the future steps of `pool`; 1 when there are none.
double trajectory_scale(const std::vector<const SequenceSample*>& pool) {
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto* s : pool)
        if (const auto& f = s->scenarios.back().future_gt)
            for (const auto& p : *f) {
                acc += norm(p);
                ++n;
            }
    return n && acc > 1e-9 ? acc / static_cast<double>(n) : 1.0;
}

Targets make_targets(const SequenceSample& s, TaskSet tasks, const SkillStats& st, double traj_scale,
                     bool with_teacher) {
    Targets t;
    if (with_teacher && s.teacher) t.teacher = s.teacher;
    if (uses_trajectory(tasks) && s.scenarios.back().future_gt) {
        t.future = *s.scenarios.back().future_gt;
        for (auto& p : *t.future) p = {p.x / traj_scale, p.y / traj_scale};
    }
    if (uses_skill(tasks) && s.skill_gt.size() == st.mean.size()) t.skill = st.normalize(s.skill_gt);
    return t;
}

/// Checks that every sample fits the model's fixed shapes.
void check_schema(const Dataset& ds, const ModelConfig& c, TaskKind kind) {
    for (const auto& s : ds.samples) {
        const std::string where = "sample '" + s.id + "': ";
        if (s.kind != kind)
            throw DataError(where + "kind " + to_string(s.kind) + " but the model is for " + to_string(kind));
        if (s.teacher && s.teacher->size() != c.action_dim)
            throw DataError(where + "teacher vector has " + std::to_string(s.teacher->size()) +
                            " categories, model has " + std::to_string(c.action_dim));
        if (s.scenarios.empty() || s.scenarios.size() > c.P_max)
            throw DataError(where + std::to_string(s.scenarios.size()) + " scenarios, model allows 1.." +
                            std::to_string(c.P_max));
        for (const auto& sc : s.scenarios) {
            if (sc.past.states.size() != c.N_steps)
                throw DataError(where + "past window of " + std::to_string(sc.past.states.size()) +
                                " steps, model expects " + std::to_string(c.N_steps));
        }
        const auto& fut = s.scenarios.back().future_gt;
        if (fut && fut->size() != c.M_steps)
            throw DataError(where + "future of " + std::to_string(fut->size()) + " steps, model predicts " +
                            std::to_string(c.M_steps));
    }
}

ProbRows teacher_probs(const nn::ParamStore<float>& params, const ModelConfig& c, const std::vector<Prepared>& data,
                       const std::vector<std::size_t>& idx) {
    ProbRows out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(run_model(params, c, data[i].input).teacher_probs);
    return out;
}

LabelRows teacher_labels(const std::vector<Prepared>& data, const std::vector<std::size_t>& idx) {
    LabelRows out;
    for (std::size_t i : idx) out.push_back(*data[i].targets.teacher);
    return out;
}

/// Evenly interleaves `nl` labeled and `nu` unlabeled batches; true marks a
/// labeled slot. Ties put the labeled batch first.
std::vector<bool> interleave(std::size_t nl, std::size_t nu) {
    std::vector<std::pair<double, int>> slots;
    for (std::size_t i = 0; i < nl; ++i) slots.push_back({(i + 0.5) / static_cast<double>(nl), 0});
    for (std::size_t j = 0; j < nu; ++j) slots.push_back({(j + 0.5) / static_cast<double>(nu), 1});
    std::stable_sort(slots.begin(), slots.end());
    std::vector<bool> out;
    for (const auto& s : slots) out.push_back(s.second == 0);
    return out;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const Dataset& labeled, const Dataset* unlabeled,
                  const EpochCallback& on_epoch) {
    cfg.validate();
    const TaskKind kind = labeled.meta.kind;
    const ModelConfig mc = model_config_for(labeled.meta, cfg.model);
    check_schema(labeled, mc, kind);
    if (unlabeled) check_schema(*unlabeled, mc, kind);

    const bool use_unlabeled = cfg.tasks != TaskSet::kA;
    if (!use_unlabeled && unlabeled && !unlabeled->samples.empty())
        log_warn("tasks=A: ignoring " + std::to_string(unlabeled->samples.size()) + " unlabeled samples");

    std::vector<std::size_t> lab_idx;
    std::vector<const SequenceSample*> pool_u;
    for (std::size_t i = 0; i < labeled.samples.size(); ++i) {
        if (labeled.samples[i].labeled())
            lab_idx.push_back(i);
        else if (use_unlabeled)
            pool_u.push_back(&labeled.samples[i]);
    }
    if (use_unlabeled && unlabeled)
        for (const auto& s : unlabeled->samples) pool_u.push_back(&s);

    TrainResult res;
    split(lab_idx, cfg.val_fraction, cfg.seed, res.train_indices, res.val_indices);

    // skill statistics over everything that trains
    std::vector<const SequenceSample*> train_pool;
    for (std::size_t i : res.train_indices) train_pool.push_back(&labeled.samples[i]);
    train_pool.insert(train_pool.end(), pool_u.begin(), pool_u.end());
    if (uses_skill(cfg.tasks)) {
        const bool any = std::any_of(train_pool.begin(), train_pool.end(),
                                     [&](const SequenceSample* s) { return s->skill_gt.size() == mc.skill_dim; });
        if (!any) throw ConfigError(std::string("tasks=") + to_string(cfg.tasks) + " but no sample carries skill labels");
    }
    if (uses_trajectory(cfg.tasks)) {
        const bool any = std::any_of(train_pool.begin(), train_pool.end(),
                                     [](const SequenceSample* s) { return s->scenarios.back().future_gt.has_value(); });
        if (!any) throw ConfigError(std::string("tasks=") + to_string(cfg.tasks) + " but no sample carries a future");
    }
    const SkillStats stats = skill_stats(train_pool, mc.skill_dim);
    const double traj_scale = trajectory_scale(train_pool);

    // featurize once: labeled samples by dataset index, then the unlabeled pool
    std::vector<Prepared> lab(labeled.samples.size());
    for (std::size_t i : lab_idx)
        lab[i] = {featurize(labeled.samples[i], mc), make_targets(labeled.samples[i], cfg.tasks, stats, traj_scale, true)};
    std::vector<Prepared> unl;
    unl.reserve(pool_u.size());
    for (const auto* s : pool_u) {
        Prepared p{featurize(*s, mc), make_targets(*s, cfg.tasks, stats, traj_scale, false)};
        if (p.targets.future || p.targets.skill) unl.push_back(std::move(p));
    }

    std::vector<std::vector<std::uint8_t>> train_labels;
    for (std::size_t i : res.train_indices) train_labels.push_back(*labeled.samples[i].teacher);
    std::vector<std::size_t> zero_pos;
    const std::vector<double> cw = class_weights(train_labels, mc.action_dim, &zero_pos);
    for (std::size_t c : zero_pos)
        log_warn("category '" + action_set(kind)[c] + "' has no positive training sample; weight capped");

    const LossCoefficients coeffs = cfg.coeffs.masked(cfg.tasks);
    auto params = nn::init_params<float>(model_param_specs(mc), derive_seed(cfg.seed, 0x1417));
    AdamW opt(params, cfg.lr);
    std::mt19937_64 rng(derive_seed(cfg.seed, 0xba7c));

    const std::size_t B = cfg.batch_size;
    const std::size_t n_lb = (res.train_indices.size() + B - 1) / B;
    const std::size_t n_ub =
        unl.empty() ? 0
                    : static_cast<std::size_t>(std::llround(static_cast<double>(n_lb) * static_cast<double>(unl.size()) /
                                                            static_cast<double>(res.train_indices.size())));
    const auto schedule = interleave(n_lb, n_ub);
    std::vector<std::size_t> u_order(unl.size());
    std::iota(u_order.begin(), u_order.end(), 0);
    std::shuffle(u_order.begin(), u_order.end(), rng);
    std::size_t u_cursor = 0;

    auto next_unlabeled = [&] {
        std::vector<std::size_t> b;
        while (b.size() < B && b.size() < unl.size()) {
            if (u_cursor == u_order.size()) {
                std::shuffle(u_order.begin(), u_order.end(), rng);
                u_cursor = 0;
            }
            b.push_back(u_order[u_cursor++]);
        }
        return b;
    };

    nn::ParamStore<float> best = params;
    double best_f1 = -1.0;
    std::size_t best_epoch = 0, since_best = 0, epochs_run = 0;
    const LabelRows val_labels = teacher_labels(lab, res.val_indices);
    const LabelRows tr_labels = teacher_labels(lab, res.train_indices);

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<std::size_t> order = res.train_indices;
        std::shuffle(order.begin(), order.end(), rng);
        LossReport sums;
        std::size_t lab_batch = 0, batch_id = 0;
        for (bool is_lab : schedule) {
            std::vector<const Prepared*> batch;
            if (is_lab) {
                const std::size_t lo = lab_batch * B, hi = std::min(order.size(), lo + B);
                for (std::size_t k = lo; k < hi; ++k) batch.push_back(&lab[order[k]]);
                ++lab_batch;
            } else {
                for (std::size_t k : next_unlabeled()) batch.push_back(&unl[k]);
            }
            std::vector<Targets> tg;
            for (const auto* p : batch) tg.push_back(p->targets);
            const TermScales sc = term_scales(tg, coeffs);
            params.zero_grad();
            double loss = 0.0;
            for (const auto* p : batch) {
                nn::Graph<float> g(true);
                nn::Binder<float, nn::ParamStore<float>> b(g, params);
                const HeadVars h = forward_graph(b, p->input, mc);
                const auto l = sample_loss(g, h, p->targets, sc, cw);
                if (!l) continue;
                loss += static_cast<double>(g.value(*l).data[0]);
                g.backward(*l);
            }
            if (!std::isfinite(loss))
                throw NumericError("non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_id) + (is_lab ? " (labeled)" : " (unlabeled)"));
            opt.step(params);
            sums.total += loss;
            ++batch_id;
        }

        const ProbRows vp = teacher_probs(params, mc, lab, res.val_indices);
        const double val_f1 = teacher_f1(vp, val_labels, mc.multilabel);
        std::optional<double> train_f1;
        if (cfg.monitor == "train") train_f1 = teacher_f1(teacher_probs(params, mc, lab, res.train_indices), tr_labels,
                                                          mc.multilabel);
        const double monitored = cfg.monitor == "train" ? *train_f1 : val_f1;
        epochs_run = epoch;
        if (monitored > best_f1) {
            best_f1 = monitored;
            best_epoch = epoch;
            best = params;
            since_best = 0;
        } else {
            ++since_best;
        }

        nlohmann::json rec{{"epoch", epoch},
                           {"mean_batch_loss", sums.total / static_cast<double>(std::max<std::size_t>(1, batch_id))},
                           {"labeled_batches", n_lb},
                           {"unlabeled_batches", n_ub},
                           {"val_weighted_f1", val_f1},
                           {"val_hamming", hamming_loss(vp, val_labels)},
                           {"best_epoch", best_epoch},
                           {"best_f1", best_f1},
                           {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
        if (train_f1) rec["train_weighted_f1"] = *train_f1;
        res.log.push_back(rec);
        if (on_epoch) on_epoch(rec);

        if (cfg.target_f1 && monitored >= *cfg.target_f1) break;
        if (since_best >= cfg.patience) break;
    }

    Checkpoint& ck = res.checkpoint;
    ck.model = mc;
    ck.params = std::move(best);
    ck.kind = kind;
    ck.tasks = cfg.tasks;
    ck.seed = cfg.seed;
    ck.epoch = best_epoch;
    ck.epochs_run = epochs_run;
    ck.best_f1 = best_f1;
    ck.labeled_hash = dataset_hash(labeled);
    ck.unlabeled_hash = use_unlabeled && unlabeled ? dataset_hash(*unlabeled) : std::string();
    ck.skill = stats;
    ck.traj_scale = traj_scale;
    ck.class_weights = cw;
    return res;
}

TrainResult train(const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.labeled_path.empty()) throw ConfigError("labeled_path is required");
    const Dataset lab = load_dataset(cfg.labeled_path);
    std::optional<Dataset> unl;
    if (!cfg.unlabeled_path.empty()) {
        if (cfg.tasks == TaskSet::kA)
            log_warn("tasks=A: unlabeled data '" + cfg.unlabeled_path + "' is ignored");
        else
            unl = load_dataset(cfg.unlabeled_path);
    }
    std::string log;
    auto res = train(cfg, lab, unl ? &*unl : nullptr, [&](const nlohmann::json& rec) {
        log += rec.dump() + "\n";
        if (!cfg.log_path.empty()) write_file_atomic(cfg.log_path, log);
    });
    return res;
}

// -------------------------------------------------------------- evaluation

nlohmann::json evaluate(const Checkpoint& ck, const Dataset& ds) {
    check_schema(ds, ck.model, ck.kind);
    EvalInputs in;
    in.multilabel = ck.model.multilabel;
    in.action_set = action_set(ck.kind);
    std::vector<ModelOutput> outs;
    std::vector<Targets> tg;
    for (const auto& s : ds.samples) {
        const ModelOutput o = run_model(ck.params, ck.model, featurize(s, ck.model));
        Targets t = make_targets(s, TaskSet::kAST, ck.skill, ck.traj_scale, true);
        if (s.teacher) {
            in.probs.push_back(o.teacher_probs);
            in.labels.push_back(*s.teacher);
        }
        if (t.teacher || t.future || t.skill) {
            outs.push_back(o);
            tg.push_back(std::move(t));
        }
    }
    if (!tg.empty()) in.losses = total_loss(outs, tg, LossCoefficients{}, ck.class_weights);
    return metrics_report(in);
}

// ---------------------------------------------------------------- ablation

nlohmann::json ablation_row_to_json(const AblationRow& r) {
    return {{"gamma", r.gamma},     {"labeled_size", r.labeled_size}, {"unlabeled_size", r.unlabeled_size},
            {"task", to_string(r.task)}, {"mean_f1", r.mean_f1},      {"std_f1", r.std_f1},
            {"n_seeds", r.n_seeds}, {"f1s", r.f1s}};
}

namespace {

Dataset prefix(const Dataset& ds, std::size_t n, bool labeled_only) {
    Dataset out;
    out.meta = ds.meta;
    for (const auto& s : ds.samples) {
        if (out.samples.size() == n) break;
        if (!labeled_only || s.labeled()) out.samples.push_back(s);
    }
    if (out.samples.size() < n)
        throw ConfigError("requested " + std::to_string(n) + " samples, dataset has " +
                          std::to_string(out.samples.size()));
    return out;
}

}  // namespace

std::vector<AblationRow> ablation_grid(const AblationConfig& cfg, const Dataset& labeled, const Dataset* unlabeled,
                                       const Dataset& test) {
    if (cfg.tasks.empty() || cfg.seeds.empty()) throw ConfigError("ablation needs at least one task and one seed");
    std::size_t n_lab_total = 0;
    for (const auto& s : labeled.samples) n_lab_total += s.labeled();
    const std::vector<std::size_t> lsizes = cfg.labeled_sizes.empty() ? std::vector<std::size_t>{n_lab_total}
                                                                       : cfg.labeled_sizes;
    const std::size_t n_unl_total = unlabeled ? unlabeled->samples.size() : 0;
    const std::vector<std::size_t> usizes = cfg.unlabeled_sizes.empty() ? std::vector<std::size_t>{n_unl_total}
                                                                         : cfg.unlabeled_sizes;
    const double gamma = labeled.samples.empty() ? 0.0 : labeled.samples.front().gamma;

    std::vector<AblationRow> rows;
    for (std::size_t nl : lsizes) {
        const Dataset lab = prefix(labeled, nl, true);
        for (std::size_t nu : usizes) {
            std::optional<Dataset> unl;
            if (nu > 0) {
                if (!unlabeled) throw ConfigError("unlabeled sizes given without an unlabeled dataset");
                unl = prefix(*unlabeled, nu, false);
            }
            for (TaskSet task : cfg.tasks) {
                // A ignores unlabeled data, so only its zero-size row is distinct
                AblationRow row;
                row.gamma = gamma;
                row.labeled_size = nl;
                row.unlabeled_size = task == TaskSet::kA ? 0 : nu;
                row.task = task;
                const bool dup = std::any_of(rows.begin(), rows.end(), [&](const AblationRow& r) {
                    return r.task == row.task && r.labeled_size == nl && r.unlabeled_size == row.unlabeled_size;
                });
                if (dup) continue;
                for (std::uint64_t seed : cfg.seeds) {
                    TrainConfig tc = cfg.base;
                    tc.tasks = task;
                    tc.seed = seed;
                    const auto res = train(tc, lab, task == TaskSet::kA || !unl ? nullptr : &*unl);
                    row.f1s.push_back(evaluate(res.checkpoint, test).value("weighted_f1", 0.0));
                }
                row.n_seeds = row.f1s.size();
                row.mean_f1 = std::accumulate(row.f1s.begin(), row.f1s.end(), 0.0) / static_cast<double>(row.n_seeds);
                double ss = 0.0;
                for (double f : row.f1s) ss += (f - row.mean_f1) * (f - row.mean_f1);
                row.std_f1 = row.n_seeds > 1 ? std::sqrt(ss / static_cast<double>(row.n_seeds - 1)) : 0.0;
                rows.push_back(std::move(row));
            }
        }
    }
    return rows;
}

}  // namespace coach
