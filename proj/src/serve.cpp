#include "coach/serve.hpp"

#include "coach/errors.hpp"
#include "coach/track_data.hpp"

#include <cmath>

namespace coach {

void CuePolicy::validate() const {
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must be in (0, 1)");
    if (!(cooldown >= 0.0) || !std::isfinite(cooldown)) throw ConfigError("cooldown must be >= 0");
    if (!(eval_rate > 0.0 && eval_rate <= 10.0)) throw ConfigError("eval_rate must be in (0, 10] Hz (state rate)");
}

std::optional<CueDecision> decide_cue(std::span<const double> probs, const CuePolicy& policy,
                                      std::optional<double> last_cue_time, double now) {
    if (last_cue_time && now - *last_cue_time < policy.cooldown) return std::nullopt;
    std::optional<CueDecision> best;
    for (std::size_t c = 0; c < probs.size(); ++c) {
        if (probs[c] < policy.tau) continue;
        if (!best || probs[c] > best->prob) best = CueDecision{c, "", probs[c], now, 0};
    }
    return best;
}

// ------------------------------------------------------------------ model

std::shared_ptr<const ServeModel> ServeModel::make(Checkpoint ck, TrackModel track) {
    if (ck.kind != TaskKind::kTrack) throw ConfigError("serving needs a track checkpoint");
    if (ck.model.P_max != 1) throw ConfigError("serving needs single-scenario sequences (P_max = 1)");
    auto m = std::make_shared<ServeModel>();
    m->hash = model_hash(ck);
    m->checkpoint = std::move(ck);
    m->track = std::move(track);
    return m;
}

nlohmann::json ServeModel::identity() const {
    return {{"model_hash", hash},
            {"action_set", action_set(checkpoint.kind)},
            {"n_params", checkpoint.params.numel()},
            {"track", track.name},
            {"proto", kProtocolVersion}};
}

// ---------------------------------------------------------------- session

Session::Session(std::shared_ptr<const ServeModel> model, CuePolicy policy)
    : model_(std::move(model)), policy_(policy), laps_(model_->track) {
    policy_.validate();
}

StepResult Session::step(const State& s) {
    StepResult r;
    if (last_t_ && !(s.t > *last_t_)) {
        ++dropped_;
        r.accepted = false;
        return r;
    }
    last_t_ = s.t;
    ++accepted_;
    r.lap_time = laps_.add(s);

    const ModelConfig& mc = model_->checkpoint.model;
    buffer_.push_back(s);
    if (buffer_.size() > mc.N_steps) buffer_.pop_front();
    if (buffer_.size() < mc.N_steps) return r;
    // cadence on the stream clock; the small slack absorbs 0.1 s steps that
    // are not exact in binary
    if (last_eval_ && s.t - *last_eval_ < 1.0 / policy_.eval_rate - 1e-6) return r;
    last_eval_ = s.t;

    const std::vector<State> window(buffer_.begin(), buffer_.end());
    SequenceSample sample;
    sample.kind = TaskKind::kTrack;
    sample.scenarios.push_back(make_track_scenario(window, model_->track, model_->map_radius));
    r.probs = run_model(model_->checkpoint.params, mc, featurize(sample, mc)).teacher_probs;
    r.evaluated = true;
    ++windows_;
    if (auto cue = decide_cue(r.probs, policy_, last_cue_, s.t)) {
        cue->action = action_set(model_->checkpoint.kind)[cue->index];
        cue->window_id = windows_;
        last_cue_ = cue->t_emit;
        cues_.push_back(*cue);
        r.cue = std::move(cue);
    }
    return r;
}

nlohmann::json Session::summary() const {
    nlohmann::json cues = nlohmann::json::array();
    for (const auto& c : cues_) cues.push_back(cue_to_json(c));
    return {{"type", "summary"},
            {"states", accepted_},
            {"dropped", dropped_},
            {"windows", windows_},
            {"cues", cues},
            {"lap_times", laps_.lap_times()},
            {"pct_out_of_bounds", laps_.pct_out_of_bounds()}};
}

nlohmann::json cue_to_json(const CueDecision& c) {
    return {{"type", "cue"}, {"action", c.action}, {"prob", c.prob}, {"t_emit", c.t_emit}};
}

// --------------------------------------------------------------- protocol

namespace {

std::string error_msg(const std::string& code, const std::string& detail) {
    return nlohmann::json{{"type", "error"}, {"code", code}, {"detail", detail}}.dump();
}

State parse_state(const nlohmann::json& j) {
    State s;
    auto num = [&](const char* k, bool required) {
        if (!j.contains(k)) {
            if (required) throw DataError(std::string("state is missing '") + k + "'");
            return 0.0;
        }
        if (!j.at(k).is_number()) throw DataError(std::string("state field '") + k + "' is not a number");
        const double v = j.at(k).get<double>();
        if (!std::isfinite(v)) throw DataError(std::string("state field '") + k + "' is not finite");
        return v;
    };
    s.t = num("t", true);
    s.x = num("x", true);
    s.y = num("y", true);
    s.yaw = num("yaw", true);
    s.v = num("v", true);
    s.steer = num("steer", false);
    s.accel = num("accel", false);
    return s;
}

}  // namespace

ProtocolSession::ProtocolSession(std::shared_ptr<const ServeModel> model, CuePolicy policy)
    : model_(std::move(model)), policy_(policy) {}

std::vector<std::string> ProtocolSession::on_message(const std::string& text) {
    if (closed_) return {};
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception&) {
        return {error_msg("bad_json", "message is not valid JSON")};
    }
    if (!j.is_object() || !j.contains("type") || !j["type"].is_string())
        return {error_msg("bad_message", "message needs a string 'type'")};
    const std::string type = j["type"];

    if (type == "hello") {
        if (session_) return {error_msg("bad_message", "session already started")};
        if (!j.contains("proto") || !j["proto"].is_number_integer() || j["proto"].get<int>() != kProtocolVersion) {
            closed_ = true;
            return {error_msg("version_mismatch", "server speaks protocol " + std::to_string(kProtocolVersion))};
        }
        if (j.contains("track") && (!j["track"].is_string() || j["track"].get<std::string>() != model_->track.name)) {
            closed_ = true;
            return {error_msg("unknown_track", "server is running track '" + model_->track.name + "'")};
        }
        session_.emplace(model_, policy_);
        return {nlohmann::json{{"type", "ready"}, {"action_set", action_set(model_->checkpoint.kind)}}.dump()};
    }
    if (type == "state") {
        if (!session_) return {error_msg("no_session", "send hello first")};
        State s;
        try {
            s = parse_state(j);
        } catch (const DataError& e) {
            return {error_msg("bad_state", e.what())};
        }
        const StepResult r = session_->step(s);
        std::vector<std::string> out;
        if (r.cue) out.push_back(cue_to_json(*r.cue).dump());
        if (r.lap_time)
            out.push_back(nlohmann::json{{"type", "lap"},
                                         {"lap_time", *r.lap_time},
                                         {"pct_out_of_bounds", session_->laps().pct_out_of_bounds()}}
                              .dump());
        return out;
    }
    if (type == "end") {
        closed_ = true;
        if (!session_) return {};
        return {session_->summary().dump()};
    }
    return {error_msg("bad_message", "unknown type '" + type + "'")};
}

std::vector<std::string> client_messages(const std::string& track_name, std::span<const State> states) {
    std::vector<std::string> out;
    out.push_back(nlohmann::json{{"type", "hello"}, {"proto", kProtocolVersion}, {"track", track_name}}.dump());
    for (const auto& s : states)
        out.push_back(nlohmann::json{{"type", "state"},
                                     {"t", s.t},
                                     {"x", s.x},
                                     {"y", s.y},
                                     {"yaw", s.yaw},
                                     {"v", s.v},
                                     {"steer", s.steer},
                                     {"accel", s.accel}}
                          .dump());
    out.push_back(R"({"type":"end"})");
    return out;
}

std::string replay_transcript(std::shared_ptr<const ServeModel> model, const CuePolicy& policy,
                              std::span<const State> states) {
    ProtocolSession ps(model, policy);
    std::string out;
    for (const auto& msg : client_messages(model->track.name, states))
        for (const auto& reply : ps.on_message(msg)) out += reply + "\n";
    return out;
}

}  // namespace coach
