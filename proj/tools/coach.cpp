// coach: dataset generation, racing line, training, evaluation, ablation
// and the live teaching server behind one command.

#include "coach/errors.hpp"
#include "coach/io.hpp"
#include "coach/raceline.hpp"
#include "coach/serve.hpp"
#include "coach/track_data.hpp"
#include "coach/tracks.hpp"
#include "coach/train.hpp"
#include "coach/urban.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <pthread.h>

using namespace coach;

namespace {

/// `--config FILE` reader: a flat JSON object whose keys are the long flag
/// names of the chosen subcommand.
class JsonConfig : public CLI::Config {
  public:
    explicit JsonConfig(const CLI::App* app) : app_(app) {}

    std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

    std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
        }
        if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
        std::vector<CLI::ConfigItem> items;
        const auto subs = app_->get_subcommands();
        for (const auto& [key, value] : j.items()) {
            const CLI::App* owner = subs.empty() ? app_ : subs.front();
            if (owner->get_option_no_throw("--" + key) == nullptr)
                throw CLI::ConversionError("config key '" + key + "' is not an option of '" + owner->get_name() + "'");
            CLI::ConfigItem item;
            if (!subs.empty()) item.parents = {subs.front()->get_name()};
            item.name = key;
            auto text = [](const nlohmann::json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
            if (value.is_array())
                for (const auto& v : value) item.inputs.push_back(text(v));
            else if (value.is_boolean())
                item.inputs.push_back(value.get<bool>() ? "true" : "false");
            else
                item.inputs.push_back(text(value));
            items.push_back(std::move(item));
        }
        return items;
    }

  private:
    const CLI::App* app_;
};

TrackModel load_or_demo(const std::string& spec) {
    if (spec == "demo") return make_demo_circuit();
    return load_track(spec);
}

TrackModel with_raceline(TrackModel t) { return t.has_raceline() ? t : attach_raceline(std::move(t)); }

void write_json(const std::string& path, const nlohmann::json& j) {
    if (path.empty() || path == "-")
        std::cout << j.dump(2) << "\n";
    else
        write_file_atomic(path, j.dump(2) + "\n");
}

// ------------------------------------------------------------- subcommands

struct UrbanArgs {
    UrbanDatasetConfig cfg;
    std::optional<std::size_t> labeled;
    std::string out;
};

void gen_urban(const UrbanArgs& a) {
    UrbanDatasetConfig c = a.cfg;
    c.labeled = a.labeled.value_or(c.K);
    const Dataset ds = gen_urban_dataset(c);
    save_dataset(ds, a.out);
    log_info("wrote " + std::to_string(ds.samples.size()) + " sequences (" + std::to_string(ds.meta.labeled) +
             " labeled) to " + a.out);
}

struct TrackArgs {
    std::string track = "demo";
    std::size_t students = 10;
    TrackGenConfig cfg;
    std::string out;
};

void gen_track(TrackArgs a) {
    const TrackModel track = with_raceline(load_or_demo(a.track));
    a.cfg.roster = default_roster(a.students, a.cfg.seed);
    const Dataset ds = gen_track_dataset(track, a.cfg);
    save_dataset(ds, a.out);
    log_info("wrote " + std::to_string(ds.samples.size()) + " windows from " + std::to_string(a.students) +
             " students to " + a.out);
}

struct RacelineArgs {
    std::string track = "demo";
    std::string out;
    RacelineSolverConfig solver;
    SpeedLimits limits;
};

void raceline(const RacelineArgs& a) {
    TrackModel t = load_or_demo(a.track);
    t.validate();
    const RacelineResult r = compute_racing_line(t, a.solver);
    t.raceline = r.points;
    t.race_speeds = speed_profile(t.raceline, a.limits.a_lat, a.limits.a_lon, a.limits.v_max, t.closed);
    save_track(t, a.out);
    nlohmann::json s{{"iterations", r.iterations},
                     {"objective_initial", r.objective_trace.front()},
                     {"objective_final", r.objective_trace.back()},
                     {"max_bound_excess", r.max_bound_excess},
                     {"out", a.out}};
    std::cout << s.dump() << "\n";
}

struct TrainArgs {
    std::string tasks = "A";
    TrainConfig cfg;
    std::vector<double> coeffs{1.0, 1.0, 1.0};
    std::string model_json = "{}";
    std::optional<double> target_f1;
    std::string out;
};

TrainConfig finish_train_config(const TrainArgs& a) {
    TrainConfig c = a.cfg;
    c.tasks = task_set_from_string(a.tasks);
    if (a.coeffs.size() != 3) throw ConfigError("--coeffs needs three values");
    c.coeffs = {a.coeffs[0], a.coeffs[1], a.coeffs[2]};
    try {
        c.model = nlohmann::json::parse(a.model_json);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("--model is not valid JSON: ") + e.what());
    }
    c.target_f1 = a.target_f1;
    c.validate();
    return c;
}

void train_cmd(const TrainArgs& a) {
    const TrainConfig c = finish_train_config(a);
    const TrainResult r = train(c);
    save_checkpoint(r.checkpoint, a.out);
    log_info("best epoch " + std::to_string(r.checkpoint.epoch) + "/" + std::to_string(r.checkpoint.epochs_run) +
             ", weighted F1 " + std::to_string(r.checkpoint.best_f1) + "; checkpoint " + a.out);
}

struct EvalArgs {
    std::string ckpt, data, report;
};

void eval_cmd(const EvalArgs& a) {
    const Checkpoint ck = load_checkpoint(a.ckpt);
    write_json(a.report, evaluate(ck, load_dataset(a.data)));
}

struct AblateArgs {
    TrainArgs train;
    std::string test, out;
    std::vector<std::string> task_list{"A", "AST"};
    std::vector<std::uint64_t> seeds{0};
    std::vector<std::size_t> labeled_sizes, unlabeled_sizes;
};

void ablate_cmd(const AblateArgs& a) {
    AblationConfig ac;
    ac.base = finish_train_config(a.train);
    ac.tasks.clear();
    for (const auto& t : a.task_list) ac.tasks.push_back(task_set_from_string(t));
    ac.seeds = a.seeds;
    ac.labeled_sizes = a.labeled_sizes;
    ac.unlabeled_sizes = a.unlabeled_sizes;
    if (ac.base.labeled_path.empty()) throw ConfigError("--data is required");
    const Dataset lab = load_dataset(ac.base.labeled_path);
    std::optional<Dataset> unl;
    if (!ac.base.unlabeled_path.empty()) unl = load_dataset(ac.base.unlabeled_path);
    const Dataset test = load_dataset(a.test);
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : ablation_grid(ac, lab, unl ? &*unl : nullptr, test)) rows.push_back(ablation_row_to_json(r));
    write_json(a.out, rows);
}

struct ServeArgs {
    std::string ckpt, track, address = "127.0.0.1";
    unsigned short port = 8080;
    CuePolicy policy;
};

void serve_cmd(const ServeArgs& a) {
    auto model = ServeModel::make(load_checkpoint(a.ckpt), with_raceline(load_or_demo(a.track)));
    // handle SIGINT/SIGTERM on this thread; workers inherit the blocked mask
    sigset_t sigs;
    sigemptyset(&sigs);
    sigaddset(&sigs, SIGINT);
    sigaddset(&sigs, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &sigs, nullptr);
    Server server(model, a.policy);
    const unsigned short port = server.start(a.port, a.address);
    std::cout << nlohmann::json{{"listening", a.address + ":" + std::to_string(port)}, {"identity", model->identity()}}
                     .dump()
              << std::endl;
    int sig = 0;
    sigwait(&sigs, &sig);
    server.stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Driving coach: data generation, training, evaluation and live teaching"};
    app.require_subcommand(1);
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "Only print warnings and errors");
    app.set_config("--config", "", "JSON file supplying any flag of the subcommand; the command line wins");
    app.config_formatter(std::make_shared<JsonConfig>(&app));
    // subcommands accept the global flags too
    auto add_config = [](CLI::App* sub) { sub->fallthrough(); };

    UrbanArgs ua;
    auto* gu = app.add_subcommand("gen-urban", "Generate urban scenario-sequence datasets");
    gu->add_option("--gamma", ua.cfg.gamma, "Weight of the skill rule in the teacher action")->check(CLI::Range(0.0, 1.0));
    gu->add_option("--num", ua.cfg.K, "Number of sequences");
    gu->add_option("--labeled", ua.labeled, "Sequences that keep their teacher action (default: all)");
    gu->add_option("--P", ua.cfg.P, "Scenarios per sequence");
    gu->add_option("--seed", ua.cfg.seed);
    gu->add_option("--out", ua.out)->required();
    add_config(gu);

    TrackArgs ta;
    auto* gt = app.add_subcommand("gen-track", "Generate track windows from scripted students");
    gt->add_option("--track", ta.track, "Track JSON, or 'demo'");
    gt->add_option("--students", ta.students);
    gt->add_option("--laps", ta.cfg.laps);
    gt->add_option("--labeled-fraction", ta.cfg.labeled_fraction);
    gt->add_option("--stride", ta.cfg.stride, "Steps between window starts");
    gt->add_option("--seed", ta.cfg.seed);
    gt->add_option("--out", ta.out)->required();
    add_config(gt);

    RacelineArgs ra;
    auto* rl = app.add_subcommand("raceline", "Solve the minimum-curvature racing line of a track");
    rl->add_option("--track", ra.track, "Track JSON, or 'demo'");
    rl->add_option("--margin", ra.solver.margin, "Meters kept clear of each edge");
    rl->add_option("--max-iters", ra.solver.max_iters);
    rl->add_option("--a-lat", ra.limits.a_lat);
    rl->add_option("--a-lon", ra.limits.a_lon);
    rl->add_option("--v-max", ra.limits.v_max);
    rl->add_option("--out", ra.out)->required();
    add_config(rl);

    auto add_train_opts = [](CLI::App* s, TrainArgs& t) {
        s->add_option("--tasks", t.tasks, "A, AT, AS or AST");
        s->add_option("--data", t.cfg.labeled_path, "Labeled dataset (JSONL)")->required();
        s->add_option("--unlabeled", t.cfg.unlabeled_path, "Unlabeled dataset (JSONL)");
        s->add_option("--seed", t.cfg.seed);
        s->add_option("--lr", t.cfg.lr);
        s->add_option("--batch-size", t.cfg.batch_size);
        s->add_option("--epochs", t.cfg.max_epochs, "Maximum epochs");
        s->add_option("--patience", t.cfg.patience);
        s->add_option("--val-fraction", t.cfg.val_fraction);
        s->add_option("--coeffs", t.coeffs, "Teacher, trajectory and skill loss coefficients")->expected(3);
        s->add_option("--monitor", t.cfg.monitor, "Early stopping on 'val' or 'train' weighted F1");
        s->add_option("--target-f1", t.target_f1, "Stop once the monitored F1 reaches this");
        s->add_option("--model", t.model_json, "JSON object overriding model shape keys");
        s->add_option("--precision", t.cfg.precision);
        s->add_option("--log", t.cfg.log_path, "Epoch log (JSONL)");
    };

    TrainArgs tr;
    auto* trn = app.add_subcommand("train", "Train the multi-task teacher");
    add_train_opts(trn, tr);
    trn->add_option("--out", tr.out, "Checkpoint path")->required();
    add_config(trn);

    EvalArgs ea;
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    ev->add_option("--ckpt", ea.ckpt)->required();
    ev->add_option("--data", ea.data)->required();
    ev->add_option("--report", ea.report, "Metrics report path (default: stdout)");
    add_config(ev);

    AblateArgs aa;
    auto* ab = app.add_subcommand("ablate", "Train a task x data-size x seed grid and tabulate held-out F1");
    add_train_opts(ab, aa.train);
    ab->add_option("--test", aa.test, "Held-out labeled dataset")->required();
    ab->add_option("--task-list", aa.task_list, "Task combinations to compare");
    ab->add_option("--seeds", aa.seeds);
    ab->add_option("--labeled-sizes", aa.labeled_sizes);
    ab->add_option("--unlabeled-sizes", aa.unlabeled_sizes);
    ab->add_option("--out", aa.out, "Results table (default: stdout)");
    add_config(ab);

    ServeArgs sa;
    auto* sv = app.add_subcommand("serve", "Run the live teaching server");
    sv->add_option("--ckpt", sa.ckpt)->required();
    sv->add_option("--track", sa.track, "Track JSON, or 'demo'")->required();
    sv->add_option("--port", sa.port);
    sv->add_option("--address", sa.address);
    sv->add_option("--tau", sa.policy.tau, "Decision threshold");
    sv->add_option("--cooldown", sa.policy.cooldown, "Seconds between cues");
    sv->add_option("--eval-rate", sa.policy.eval_rate, "Model evaluations per second");
    add_config(sv);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return static_cast<int>(ExitCode::kConfig);
    }
    if (quiet) set_log_level(LogLevel::kWarn);

    try {
        if (*gu) gen_urban(ua);
        if (*gt) gen_track(ta);
        if (*rl) raceline(ra);
        if (*trn) train_cmd(tr);
        if (*ev) eval_cmd(ea);
        if (*ab) ablate_cmd(aa);
        if (*sv) serve_cmd(sa);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::kConfig);
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::kData);
    } catch (const GenerationError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::kData);
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::kNumeric);
    }
    return static_cast<int>(ExitCode::kSuccess);
}
