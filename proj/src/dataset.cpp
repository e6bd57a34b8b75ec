#include "coach/dataset.hpp"

#include "coach/errors.hpp"
#include "coach/io.hpp"
#include "coach/losses.hpp"

#include <cmath>
#include <filesystem>
#include <sstream>

namespace coach {

using nlohmann::json;

const char* to_string(TaskKind k) { return k == TaskKind::kUrban ? "urban" : "track"; }

TaskKind task_kind_from_string(const std::string& s) {
    if (s == "urban") return TaskKind::kUrban;
    if (s == "track") return TaskKind::kTrack;
    throw DataError("unknown dataset kind '" + s + "'");
}

std::vector<std::string> action_set(TaskKind k) {
    std::vector<std::string> out;
    if (k == TaskKind::kUrban)
        for (auto a : kUrbanActions) out.emplace_back(a);
    else
        for (auto a : kTrackActions) out.emplace_back(a);
    return out;
}

std::size_t action_dim(TaskKind k) { return k == TaskKind::kUrban ? kUrbanActions.size() : kTrackActions.size(); }

std::optional<std::size_t> SequenceSample::teacher_action() const {
    if (!teacher) return std::nullopt;
    for (std::size_t i = 0; i < teacher->size(); ++i)
        if ((*teacher)[i]) return i;
    return std::nullopt;
}

namespace {

json state_to_json(const State& s) { return json::array({s.t, s.x, s.y, s.yaw, s.v, s.steer, s.accel}); }

State state_from_json(const json& a) {
    if (!a.is_array() || a.size() != 7) throw DataError("state must be an array of 7 numbers");
    State s;
    s.t = a[0].get<double>();
    s.x = a[1].get<double>();
    s.y = a[2].get<double>();
    s.yaw = a[3].get<double>();
    s.v = a[4].get<double>();
    s.steer = a[5].get<double>();
    s.accel = a[6].get<double>();
    return s;
}

json pts_to_json(const std::vector<Vec2>& pts) {
    json a = json::array();
    for (const auto& p : pts) a.push_back(json::array({p.x, p.y}));
    return a;
}

std::vector<Vec2> pts_from_json(const json& a) {
    if (!a.is_array()) throw DataError("point list must be an array");
    std::vector<Vec2> out;
    out.reserve(a.size());
    for (const auto& p : a) {
        if (!p.is_array() || p.size() != 2) throw DataError("point must be [x, y]");
        out.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    return out;
}

std::vector<double> doubles_from_json(const json& a) {
    if (!a.is_array()) throw DataError("expected a number array");
    return a.get<std::vector<double>>();
}

}  // namespace

json scenario_to_json(const Scenario& sc) {
    json j;
    json past = json::array();
    for (const auto& s : sc.past.states) past.push_back(state_to_json(s));
    j["past"] = std::move(past);
    j["future"] = sc.future_gt ? pts_to_json(*sc.future_gt) : json(nullptr);
    j["label"] = sc.behavior_label ? json(to_string(*sc.behavior_label)) : json(nullptr);
    json lines = json::array();
    for (const auto& pl : sc.local_map.polylines)
        lines.push_back({{"role", to_string(pl.role)}, {"lane_id", pl.lane_id}, {"pts", pts_to_json(pl.pts)}});
    j["map"] = {{"polylines", std::move(lines)},
                {"origin", state_to_json(sc.local_map.origin)},
                {"scale", sc.local_map.scale}};
    if (sc.maneuver) {
        j["agent"] = {{"other_xy", pts_to_json(sc.maneuver->other_xy)},
                      {"other_v", sc.maneuver->other_v},
                      {"ego_future_v", sc.maneuver->ego_future_v}};
    }
    return j;
}

Scenario scenario_from_json(const json& j) {
    if (!j.is_object()) throw DataError("scenario must be an object");
    Scenario sc;
    sc.past.frame = Frame::kEgo;
    for (const auto& s : j.at("past")) sc.past.states.push_back(state_from_json(s));
    if (sc.past.states.empty()) throw DataError("scenario has an empty past");
    sc.past.validate();
    if (j.contains("future") && !j["future"].is_null()) sc.future_gt = pts_from_json(j["future"]);
    if (j.contains("label") && !j["label"].is_null())
        sc.behavior_label = behavior_from_string(j["label"].get<std::string>());
    const json& m = j.at("map");
    for (const auto& pl : m.at("polylines")) {
        Polyline p;
        p.role = polyline_role_from_string(pl.at("role").get<std::string>());
        p.lane_id = pl.at("lane_id").get<int>();
        p.pts = pts_from_json(pl.at("pts"));
        sc.local_map.polylines.push_back(std::move(p));
    }
    if (m.contains("origin")) sc.local_map.origin = state_from_json(m["origin"]);
    if (m.contains("scale")) sc.local_map.scale = m["scale"].get<double>();
    if (j.contains("agent")) {
        const json& a = j["agent"];
        ManeuverTrack t;
        t.other_xy = pts_from_json(a.at("other_xy"));
        t.other_v = doubles_from_json(a.at("other_v"));
        t.ego_future_v = doubles_from_json(a.at("ego_future_v"));
        sc.maneuver = std::move(t);
    }
    return sc;
}

json sample_to_json(const SequenceSample& s) {
    json j;
    j["id"] = s.id;
    j["gamma"] = s.gamma;
    j["seed"] = s.seed;
    j["skill_gt"] = s.skill_gt;
    if (s.kind == TaskKind::kUrban) {
        const auto a = s.teacher_action();
        j["teacher_action"] = a ? json(std::string(kUrbanActions[*a])) : json(nullptr);
        if (s.skill_vector) j["skill_vector"] = {(*s.skill_vector)[0], (*s.skill_vector)[1]};
    } else {
        j["teacher_labels"] = s.teacher ? json(*s.teacher) : json(nullptr);
    }
    json scs = json::array();
    for (const auto& sc : s.scenarios) scs.push_back(scenario_to_json(sc));
    j["scenarios"] = std::move(scs);
    return j;
}

SequenceSample sample_from_json(const json& j) {
    if (!j.is_object()) throw DataError("sample must be an object");
    SequenceSample s;
    s.id = j.at("id").get<std::string>();
    s.gamma = j.at("gamma").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.skill_gt = doubles_from_json(j.at("skill_gt"));
    if (j.contains("teacher_labels")) {
        s.kind = TaskKind::kTrack;
        if (!j["teacher_labels"].is_null()) {
            auto v = j["teacher_labels"].get<std::vector<int>>();
            if (v.size() != kTrackActions.size()) throw DataError("teacher_labels must have 5 entries");
            std::vector<std::uint8_t> t;
            for (int x : v) {
                if (x != 0 && x != 1) throw DataError("teacher_labels entries must be 0 or 1");
                t.push_back(static_cast<std::uint8_t>(x));
            }
            s.teacher = std::move(t);
        }
    } else if (j.contains("teacher_action")) {
        s.kind = TaskKind::kUrban;
        if (!j["teacher_action"].is_null()) {
            const auto name = j["teacher_action"].get<std::string>();
            std::vector<std::uint8_t> t(kUrbanActions.size(), 0);
            bool found = false;
            for (std::size_t i = 0; i < kUrbanActions.size(); ++i)
                if (kUrbanActions[i] == name) t[i] = 1, found = true;
            if (!found) throw DataError("unknown teacher_action '" + name + "'");
            s.teacher = std::move(t);
        }
        if (j.contains("skill_vector")) {
            const auto v = doubles_from_json(j["skill_vector"]);
            if (v.size() != 2) throw DataError("skill_vector must have 2 entries");
            s.skill_vector = std::array<double, 2>{v[0], v[1]};
        }
    } else {
        throw DataError("sample has neither teacher_action nor teacher_labels");
    }
    for (const auto& sc : j.at("scenarios")) s.scenarios.push_back(scenario_from_json(sc));
    if (s.scenarios.empty()) throw DataError("sample '" + s.id + "' has no scenarios");
    if (s.skill_gt.size() != 2) throw DataError("skill_gt must have 2 entries");
    return s;
}

json meta_to_json(const DatasetMeta& m) {
    return {{"kind", to_string(m.kind)},
            {"count", m.count},
            {"labeled", m.labeled},
            {"P", m.P},
            {"N", m.N},
            {"M", m.M},
            {"action_set", action_set(m.kind)},
            {"class_counts", m.class_counts},
            {"class_weights", m.class_weights},
            {"skill_mean", m.skill_mean},
            {"skill_std", m.skill_std},
            {"config", m.config},
            {"extra", m.extra}};
}

DatasetMeta meta_from_json(const json& j) {
    DatasetMeta m;
    try {
        m.kind = task_kind_from_string(j.at("kind").get<std::string>());
        m.count = j.at("count").get<std::size_t>();
        m.labeled = j.at("labeled").get<std::size_t>();
        m.P = j.at("P").get<std::size_t>();
        m.N = j.at("N").get<std::size_t>();
        m.M = j.at("M").get<std::size_t>();
        m.class_counts = j.at("class_counts").get<std::vector<double>>();
        m.class_weights = j.at("class_weights").get<std::vector<double>>();
        m.skill_mean = j.at("skill_mean").get<std::vector<double>>();
        m.skill_std = j.at("skill_std").get<std::vector<double>>();
        m.config = j.value("config", json::object());
        m.extra = j.value("extra", json::object());
    } catch (const json::exception& e) {
        throw DataError(std::string("dataset metadata: ") + e.what());
    }
    return m;
}

DatasetMeta summarize(TaskKind kind, const std::vector<SequenceSample>& samples, json config, json extra) {
    DatasetMeta m;
    m.kind = kind;
    m.count = samples.size();
    m.config = config.is_null() ? json::object() : std::move(config);
    m.extra = extra.is_null() ? json::object() : std::move(extra);
    const std::size_t dim = action_dim(kind);
    std::vector<std::vector<std::uint8_t>> labels;
    for (const auto& s : samples) {
        if (s.kind != kind) throw DataError("sample '" + s.id + "' has the wrong task kind");
        if (s.teacher) labels.push_back(*s.teacher);
    }
    m.labeled = labels.size();
    if (!samples.empty()) {
        const auto& sc = samples.front().scenarios;
        m.P = sc.size();
        m.N = sc.front().past.states.size();
        m.M = sc.back().future_gt ? sc.back().future_gt->size() : 0;
    }
    m.class_counts.assign(dim, 0.0);
    for (const auto& row : labels)
        for (std::size_t c = 0; c < dim; ++c) m.class_counts[c] += row[c];
    if (!labels.empty()) {
        std::vector<std::size_t> zero;
        m.class_weights = class_weights(labels, dim, &zero);
        for (std::size_t c : zero)
            log_warn("category '" + action_set(kind)[c] + "' has no positive labels; weight capped");
    } else {
        m.class_weights.assign(dim, 1.0);
    }
    const std::size_t k = samples.empty() ? 2 : samples.front().skill_gt.size();
    m.skill_mean.assign(k, 0.0);
    m.skill_std.assign(k, 1.0);
    if (!samples.empty()) {
        const double n = static_cast<double>(samples.size());
        for (const auto& s : samples)
            for (std::size_t i = 0; i < k; ++i) m.skill_mean[i] += s.skill_gt[i] / n;
        std::vector<double> var(k, 0.0);
        for (const auto& s : samples)
            for (std::size_t i = 0; i < k; ++i) var[i] += (s.skill_gt[i] - m.skill_mean[i]) * (s.skill_gt[i] - m.skill_mean[i]) / n;
        for (std::size_t i = 0; i < k; ++i) m.skill_std[i] = var[i] > 1e-12 ? std::sqrt(var[i]) : 1.0;
    }
    return m;
}

std::string meta_path(const std::string& dataset_path) { return dataset_path + ".meta.json"; }

void save_dataset(const Dataset& ds, const std::string& path) {
    std::string body;
    for (const auto& s : ds.samples) {
        body += sample_to_json(s).dump();
        body += '\n';
    }
    write_file_atomic(path, body);
    write_file_atomic(meta_path(path), meta_to_json(ds.meta).dump(2) + "\n");
}

Dataset load_dataset(const std::string& path) {
    const std::string text = read_file(path);
    Dataset ds;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            ds.samples.push_back(sample_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (ds.samples.empty()) throw DataError("dataset '" + path + "' is empty");
    const TaskKind kind = ds.samples.front().kind;
    const std::size_t P = ds.samples.front().scenarios.size();
    for (const auto& s : ds.samples)
        if (s.scenarios.size() != P)
            throw DataError("dataset '" + path + "' mixes sequence lengths " + std::to_string(P) + " and " +
                            std::to_string(s.scenarios.size()));
    const std::string mp = meta_path(path);
    if (std::filesystem::exists(mp)) {
        try {
            ds.meta = meta_from_json(json::parse(read_file(mp)));
        } catch (const json::exception& e) {
            throw DataError(mp + ": " + e.what());
        }
        if (ds.meta.kind != kind || ds.meta.count != ds.samples.size())
            throw DataError("metadata '" + mp + "' does not describe '" + path + "'");
    } else {
        ds.meta = summarize(kind, ds.samples);
    }
    return ds;
}

}  // namespace coach
