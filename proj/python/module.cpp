// Python bindings: generators, training, evaluation, metrics, racing line and
// live sessions. Structured values cross the boundary as plain dicts/lists.

#include "coach/errors.hpp"
#include "coach/io.hpp"
#include "coach/losses.hpp"
#include "coach/metrics.hpp"
#include "coach/raceline.hpp"
#include "coach/serve.hpp"
#include "coach/track_data.hpp"
#include "coach/tracks.hpp"
#include "coach/train.hpp"
#include "coach/urban.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace coach;

namespace {

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_py(const py::object& o) {
    return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

TrackModel track_arg(const std::string& spec) {
    TrackModel t = spec == "demo" ? make_demo_circuit() : load_track(spec);
    return t.has_raceline() ? t : attach_raceline(std::move(t));
}

State state_arg(const py::dict& d) {
    auto get = [&](const char* k, bool required) {
        if (!d.contains(k)) {
            if (required) throw DataError(std::string("state is missing '") + k + "'");
            return 0.0;
        }
        return d[k].cast<double>();
    };
    return {get("t", true), get("x", true), get("y", true), get("yaw", true),
            get("v", true), get("steer", false), get("accel", false)};
}

py::dict state_dict(const State& s) {
    py::dict d;
    d["t"] = s.t;
    d["x"] = s.x;
    d["y"] = s.y;
    d["yaw"] = s.yaw;
    d["v"] = s.v;
    d["steer"] = s.steer;
    d["accel"] = s.accel;
    return d;
}

py::dict checkpoint_info(const Checkpoint& ck) {
    py::dict d;
    d["kind"] = to_string(ck.kind);
    d["tasks"] = to_string(ck.tasks);
    d["seed"] = ck.seed;
    d["epoch"] = ck.epoch;
    d["epochs_run"] = ck.epochs_run;
    d["best_f1"] = ck.best_f1;
    d["n_params"] = ck.params.numel();
    d["model"] = to_py(model_config_to_json(ck.model));
    d["action_set"] = action_set(ck.kind);
    return d;
}

class PySession {
  public:
    PySession(const Checkpoint& ck, const std::string& track, double tau, double cooldown, double eval_rate)
        : model_(ServeModel::make(ck, track_arg(track))), session_(model_, CuePolicy{tau, cooldown, eval_rate}) {}

    py::dict step(const py::dict& state) {
        const StepResult r = session_.step(state_arg(state));
        py::dict d;
        d["accepted"] = r.accepted;
        d["evaluated"] = r.evaluated;
        d["probs"] = r.probs;
        d["cue"] = r.cue ? to_py(cue_to_json(*r.cue)) : py::none();
        d["lap_time"] = r.lap_time ? py::cast(*r.lap_time) : py::none();
        return d;
    }
    py::object summary() const { return to_py(session_.summary()); }
    std::string model_hash() const { return model_->hash; }

  private:
    std::shared_ptr<const ServeModel> model_;
    Session session_;
};

}  // namespace

PYBIND11_MODULE(coach, m) {
    m.doc() = "Multi-task imitation-learned driving coach";
    m.attr("PROTOCOL_VERSION") = kProtocolVersion;

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<GenerationError>(m, "GenerationError", PyExc_RuntimeError);
    py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_RuntimeError);

    m.def(
        "set_quiet", [](bool quiet) { set_log_level(quiet ? LogLevel::kWarn : LogLevel::kInfo); },
        py::arg("quiet") = true);

    // ---------------------------------------------------------- generators
    m.def(
        "gen_urban",
        [](const std::string& path, std::size_t num, double gamma, std::optional<std::size_t> labeled, std::size_t P,
           std::uint64_t seed) {
            UrbanDatasetConfig c;
            c.K = num;
            c.gamma = gamma;
            c.labeled = labeled.value_or(num);
            c.P = P;
            c.seed = seed;
            const Dataset ds = gen_urban_dataset(c);
            save_dataset(ds, path);
            return to_py(meta_to_json(ds.meta));
        },
        py::arg("path"), py::arg("num") = 1500, py::arg("gamma") = 0.0, py::arg("labeled") = py::none(),
        py::arg("P") = 5, py::arg("seed") = 0, "Writes an urban dataset; returns its metadata.");

    m.def(
        "gen_track",
        [](const std::string& path, std::size_t students, double laps, double labeled_fraction, std::size_t stride,
           std::uint64_t seed, const std::string& track) {
            TrackGenConfig c;
            c.roster = default_roster(students, seed);
            c.laps = laps;
            c.labeled_fraction = labeled_fraction;
            c.stride = stride;
            c.seed = seed;
            const Dataset ds = gen_track_dataset(track_arg(track), c);
            save_dataset(ds, path);
            return to_py(meta_to_json(ds.meta));
        },
        py::arg("path"), py::arg("students") = 10, py::arg("laps") = 3.0, py::arg("labeled_fraction") = 1.0,
        py::arg("stride") = 10, py::arg("seed") = 0, py::arg("track") = "demo",
        "Writes a track dataset from scripted students; returns its metadata.");

    m.def(
        "simulate_student",
        [](const std::string& track, double line_bias, double line_noise, double speed_scale, double brake_delay,
           double laps, std::uint64_t seed) {
            StudentParams p;
            p.line_bias = line_bias;
            p.line_noise = line_noise;
            p.speed_scale = speed_scale;
            p.brake_delay = brake_delay;
            py::list out;
            for (const auto& s : simulate_student(track_arg(track), p, laps, seed).states) out.append(state_dict(s));
            return out;
        },
        py::arg("track") = "demo", py::arg("line_bias") = 0.0, py::arg("line_noise") = 0.0,
        py::arg("speed_scale") = 1.0, py::arg("brake_delay") = 0.0, py::arg("laps") = 1.0, py::arg("seed") = 0,
        "World-frame states (dicts) of a scripted drive.");

    // ------------------------------------------------------------ training
    py::class_<Checkpoint>(m, "Checkpoint")
        .def_property_readonly("info", &checkpoint_info)
        .def_property_readonly("hash", [](const Checkpoint& ck) { return model_hash(ck); })
        .def("save", [](const Checkpoint& ck, const std::string& path) { save_checkpoint(ck, path); });

    m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

    m.def(
        "train",
        [](const py::dict& config) {
            const TrainConfig c = train_config_from_json(from_py(config));
            TrainResult r;
            {
                py::gil_scoped_release release;
                r = train(c);
            }
            py::list log;
            for (const auto& rec : r.log) log.append(to_py(rec));
            return py::make_tuple(std::move(r.checkpoint), log);
        },
        py::arg("config"),
        "Trains from a config dict (same keys as the JSON train config). Returns (checkpoint, epoch log).");

    m.def(
        "evaluate", [](const Checkpoint& ck, const std::string& data) { return to_py(evaluate(ck, load_dataset(data))); },
        py::arg("checkpoint"), py::arg("data"), "Metrics report on a JSONL dataset.");

    // ------------------------------------------------------------- metrics
    m.def(
        "wbce",
        [](const std::vector<double>& p, const std::vector<std::uint8_t>& y, const std::vector<double>& w) {
            return wbce(p, y, w);
        },
        py::arg("probs"), py::arg("labels"), py::arg("weights"), "Weighted binary cross entropy of one sample.");
    m.def(
        "mon_ade",
        [](const std::vector<std::vector<std::pair<double, double>>>& modes,
           const std::vector<std::pair<double, double>>& gt) {
            std::vector<std::vector<Vec2>> md;
            for (const auto& q : modes) {
                md.emplace_back();
                for (auto [x, y] : q) md.back().push_back({x, y});
            }
            std::vector<Vec2> g;
            for (auto [x, y] : gt) g.push_back({x, y});
            return mon_ade(md, g);
        },
        py::arg("mode_deltas"), py::arg("gt"), "Best-of-modes average displacement; modes hold per-step deltas.");
    m.def("hamming_loss", &hamming_loss, py::arg("probs"), py::arg("labels"), py::arg("threshold") = 0.5);
    m.def(
        "weighted_f1",
        [](const ProbRows& probs, const LabelRows& labels, bool multilabel, double threshold) {
            return multilabel ? weighted_f1_multilabel(probs, labels, threshold).weighted_f1
                              : weighted_f1_multiclass(probs, labels).weighted_f1;
        },
        py::arg("probs"), py::arg("labels"), py::arg("multilabel") = false, py::arg("threshold") = 0.5,
        "Support-weighted F1 in percent.");

    // ---------------------------------------------------------- raceline
    m.def(
        "racing_line",
        [](const std::string& track, double margin, int max_iters) {
            RacelineSolverConfig c;
            c.margin = margin;
            c.max_iters = max_iters;
            const TrackModel t = track == "demo" ? make_demo_circuit() : load_track(track);
            const RacelineResult r = compute_racing_line(t, c);
            py::dict d;
            std::vector<std::pair<double, double>> pts;
            for (auto p : r.points) pts.emplace_back(p.x, p.y);
            d["points"] = pts;
            d["lateral"] = r.lateral;
            d["objective_trace"] = r.objective_trace;
            d["max_bound_excess"] = r.max_bound_excess;
            d["iterations"] = r.iterations;
            return d;
        },
        py::arg("track") = "demo", py::arg("margin") = 1.0, py::arg("max_iters") = 20000);

    m.def(
        "demo_track_json", [] { return track_to_json(attach_raceline(make_demo_circuit())); },
        "The built-in circuit with its racing line, as track JSON.");

    // ------------------------------------------------------------- serving
    py::class_<PySession>(m, "Session")
        .def(py::init<const Checkpoint&, const std::string&, double, double, double>(), py::arg("checkpoint"),
             py::arg("track") = "demo", py::arg("tau") = 0.5, py::arg("cooldown") = 4.0, py::arg("eval_rate") = 2.0)
        .def("step", &PySession::step, py::arg("state"))
        .def("summary", &PySession::summary)
        .def_property_readonly("model_hash", &PySession::model_hash);

    m.def(
        "replay",
        [](const Checkpoint& ck, const py::list& states, const std::string& track, double tau, double cooldown,
           double eval_rate) {
            std::vector<State> st;
            for (const auto& s : states) st.push_back(state_arg(s.cast<py::dict>()));
            return replay_transcript(ServeModel::make(ck, track_arg(track)), CuePolicy{tau, cooldown, eval_rate}, st);
        },
        py::arg("checkpoint"), py::arg("states"), py::arg("track") = "demo", py::arg("tau") = 0.5,
        py::arg("cooldown") = 4.0, py::arg("eval_rate") = 2.0,
        "Server replies (one JSON text per line) for a state stream sent over the protocol.");
}
