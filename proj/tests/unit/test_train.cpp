#include "doctest.h"

#include "coach/errors.hpp"
#include "coach/io.hpp"
#include "coach/loss_ops.hpp"
#include "coach/train.hpp"
#include "coach/urban.hpp"

#include <cmath>
#include <filesystem>
#include <limits>

#include <unistd.h>

using namespace coach;

namespace {

const nlohmann::json kTiny{{"d_model", 8}, {"n_heads", 2}, {"enc_layers", 1}, {"head_hidden", 8},
                           {"Q_modes", 2}, {"n_map_tokens", 4}};

Dataset urban(std::size_t n, std::size_t labeled, std::uint64_t seed, double gamma = 0.5) {
    UrbanDatasetConfig c;
    c.K = n;
    c.labeled = labeled;
    c.seed = seed;
    c.gamma = gamma;
    c.P = 3;
    return gen_urban_dataset(c);
}

TrainConfig tiny_config(TaskSet tasks, std::size_t epochs) {
    TrainConfig c;
    c.tasks = tasks;
    c.max_epochs = epochs;
    c.batch_size = 8;
    c.model = kTiny;
    c.seed = 3;
    return c;
}

struct TempDir {
    std::filesystem::path path =
        std::filesystem::temp_directory_path() / ("coach_train_" + std::to_string(::getpid()));
    TempDir() { std::filesystem::create_directories(path); }
    ~TempDir() { std::filesystem::remove_all(path); }
    [[nodiscard]] std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("train config json") {
    TrainConfig c = tiny_config(TaskSet::kAST, 7);
    c.target_f1 = 99.0;
    c.coeffs = {1, 0.5, 2};
    const TrainConfig back = train_config_from_json(train_config_to_json(c));
    CHECK(train_config_to_json(back) == train_config_to_json(c));
    CHECK_THROWS_AS(train_config_from_json({{"learning_rate", 1.0}}), ConfigError);
    CHECK_THROWS_AS(train_config_from_json({{"patience", 0}}), ConfigError);
    CHECK_THROWS_AS(train_config_from_json({{"val_fraction", 0.6}}), ConfigError);
    CHECK_THROWS_AS(train_config_from_json({{"tasks", "ST"}}), ConfigError);
}

TEST_CASE("checkpoint round trip") {
    const Dataset ds = urban(24, 24, 1);
    const auto res = train(tiny_config(TaskSet::kAST, 2), ds, nullptr);
    const std::string bytes = serialize_checkpoint(res.checkpoint);
    CHECK(bytes.substr(0, 9) == "MTILCKPT1");
    const Checkpoint back = parse_checkpoint(bytes);
    CHECK(serialize_checkpoint(back) == bytes);
    CHECK(back.model == res.checkpoint.model);
    CHECK(back.skill.mean == res.checkpoint.skill.mean);
    CHECK(model_hash(back) == model_hash(res.checkpoint));

    TempDir dir;
    save_checkpoint(back, dir.file("m.ckpt"));
    CHECK(read_file(dir.file("m.ckpt")) == bytes);

    CHECK_THROWS_AS(parse_checkpoint("MTILCKPT0" + bytes.substr(9)), DataError);
    CHECK_THROWS_AS(parse_checkpoint(std::string_view(bytes).substr(0, bytes.size() - 1)), DataError);
    // a config edited without its hash
    std::string edited = bytes;
    const auto at = edited.find("\"d_model\":8");
    REQUIRE(at != std::string::npos);
    edited[at + 10] = '9';
    CHECK_THROWS_AS(parse_checkpoint(edited), DataError);
}

TEST_CASE("training is deterministic per seed") {
    const Dataset lab = urban(30, 30, 2);
    const Dataset unl = urban(40, 0, 3);
    const TrainConfig c = tiny_config(TaskSet::kAST, 2);
    const auto a = train(c, lab, &unl);
    const auto b = train(c, lab, &unl);
    CHECK(serialize_checkpoint(a.checkpoint) == serialize_checkpoint(b.checkpoint));
    TrainConfig other = c;
    other.seed = 4;
    CHECK(serialize_checkpoint(train(other, lab, &unl).checkpoint) != serialize_checkpoint(a.checkpoint));
}

TEST_CASE("split, interleaving and the epoch log") {
    const Dataset lab = urban(40, 40, 5);
    const Dataset unl = urban(68, 0, 6);
    const auto res = train(tiny_config(TaskSet::kAT, 2), lab, &unl);
    CHECK(res.val_indices.size() == 6);  // round(0.15 * 40)
    CHECK(res.train_indices.size() == 34);
    for (std::size_t v : res.val_indices)
        CHECK(std::find(res.train_indices.begin(), res.train_indices.end(), v) == res.train_indices.end());
    REQUIRE(res.log.size() == 2);
    CHECK(res.log[0]["labeled_batches"] == 5);    // ceil(34 / 8)
    CHECK(res.log[0]["unlabeled_batches"] == 10);  // 5 * 68 / 34
    CHECK(res.checkpoint.unlabeled_hash == dataset_hash(unl));

    // tasks=A never touches unlabeled data
    const auto a = train(tiny_config(TaskSet::kA, 1), lab, &unl);
    CHECK(a.log[0]["unlabeled_batches"] == 0);
    CHECK(a.checkpoint.unlabeled_hash.empty());
}

TEST_CASE("best epoch is returned, not the last") {
    TrainConfig c = tiny_config(TaskSet::kA, 12);
    c.patience = 3;
    c.lr = 3e-3;
    const Dataset ds = urban(40, 40, 7);
    const auto res = train(c, ds, nullptr);
    const auto& ck = res.checkpoint;
    CHECK(ck.epochs_run == res.log.size());
    CHECK(ck.epoch >= 1);
    CHECK(ck.epoch <= ck.epochs_run);
    CHECK(ck.best_f1 >= res.log.back()["val_weighted_f1"].get<double>());
    CHECK(ck.best_f1 == res.log[ck.epoch - 1]["val_weighted_f1"].get<double>());
    // the stored parameters reproduce the best validation score
    Dataset val;
    val.meta = ds.meta;
    for (std::size_t i : res.val_indices) val.samples.push_back(ds.samples[i]);
    CHECK(evaluate(ck, val)["weighted_f1"].get<double>() == doctest::Approx(ck.best_f1).epsilon(1e-12));
}

TEST_CASE("small labeled set is memorized") {
    TrainConfig c = tiny_config(TaskSet::kA, 300);
    c.model = {{"d_model", 16}, {"n_heads", 2}, {"enc_layers", 1}, {"head_hidden", 16}};
    c.monitor = "train";
    c.target_f1 = 100.0;
    c.patience = 300;
    const Dataset ds = urban(12, 12, 8);
    const auto res = train(c, ds, nullptr);
    CHECK(res.checkpoint.best_f1 == 100.0);
    Dataset tr;
    tr.meta = ds.meta;
    for (std::size_t i : res.train_indices) tr.samples.push_back(ds.samples[i]);
    CHECK(evaluate(res.checkpoint, tr)["weighted_f1"].get<double>() == 100.0);
}

TEST_CASE("teacher head gets no gradient from unlabeled samples") {
    ModelConfig mc = model_config_for(urban(1, 1, 9).meta, kTiny);
    auto store = nn::init_params<float>(model_param_specs(mc), 1);
    const Dataset ds = urban(4, 0, 9);
    std::vector<Targets> tg;
    for (const auto& s : ds.samples) {
        Targets t;
        t.future = *s.scenarios.back().future_gt;
        t.skill = std::vector<double>{0.5, -0.5};
        tg.push_back(t);
    }
    const TermScales sc = term_scales(tg, {1, 1, 1});
    const std::vector<double> cw{1, 1, 1};
    store.zero_grad();
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        nn::Graph<float> g(true);
        nn::Binder<float, nn::ParamStore<float>> b(g, store);
        const HeadVars h = forward_graph(b, featurize(ds.samples[i], mc), mc);
        g.backward(*sample_loss(g, h, tg[i], sc, cw));
    }
    double other = 0.0;
    for (std::size_t p = 0; p < store.size(); ++p) {
        const bool teacher = store.name(p).rfind("head.teacher", 0) == 0;
        for (float v : store.grad(p).data) {
            if (teacher)
                CHECK(v == 0.0f);
            else
                other += std::abs(v);
        }
    }
    CHECK(other > 0.0);
}

TEST_CASE("task switches need their labels") {
    Dataset lab = urban(20, 20, 10);
    for (auto& s : lab.samples) s.skill_gt.clear();
    CHECK_THROWS_AS(train(tiny_config(TaskSet::kAS, 1), lab, nullptr), ConfigError);
    CHECK_THROWS_AS(train(tiny_config(TaskSet::kAST, 1), lab, nullptr), ConfigError);
    CHECK_NOTHROW(train(tiny_config(TaskSet::kAT, 1), lab, nullptr));

    const Dataset none = urban(20, 1, 11);
    CHECK_THROWS_AS(train(tiny_config(TaskSet::kA, 1), none, nullptr), DataError);
}

TEST_CASE("non-finite loss names the batch") {
    Dataset lab = urban(20, 20, 12);
    (*lab.samples[3].scenarios.back().future_gt)[5].x = std::numeric_limits<double>::quiet_NaN();
    try {
        train(tiny_config(TaskSet::kAT, 1), lab, nullptr);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("batch") != std::string::npos);
    }
}

TEST_CASE("evaluate") {
    const Dataset lab = urban(24, 24, 13);
    const auto res = train(tiny_config(TaskSet::kAST, 1), lab, nullptr);
    const std::string before = serialize_checkpoint(res.checkpoint);

    const auto r1 = evaluate(res.checkpoint, lab);
    CHECK(r1 == evaluate(res.checkpoint, lab));
    CHECK(r1.contains("weighted_f1"));
    CHECK(r1["loss_terms"].contains("teacher"));

    const auto unl = evaluate(res.checkpoint, urban(10, 0, 14));
    CHECK_FALSE(unl.contains("weighted_f1"));
    CHECK(unl["loss_terms"].contains("trajectory"));
    CHECK(unl["loss_terms"].contains("skill"));
    CHECK(serialize_checkpoint(res.checkpoint) == before);

    // five-scenario sequences do not fit a three-scenario model
    UrbanDatasetConfig wide;
    wide.K = 2;
    wide.labeled = 2;
    try {
        evaluate(res.checkpoint, gen_urban_dataset(wide));
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("5 scenarios") != std::string::npos);
    }
}

TEST_CASE("training from files writes the epoch log") {
    TempDir dir;
    save_dataset(urban(20, 20, 15), dir.file("lab.jsonl"));
    TrainConfig c = tiny_config(TaskSet::kA, 2);
    c.labeled_path = dir.file("lab.jsonl");
    c.log_path = dir.file("log.jsonl");
    const auto res = train(c);
    const std::string log = read_file(c.log_path);
    CHECK(std::count(log.begin(), log.end(), '\n') == static_cast<long>(res.log.size()));
    CHECK(res.checkpoint.labeled_hash == dataset_hash(load_dataset(c.labeled_path)));
    c.labeled_path = dir.file("missing.jsonl");
    CHECK_THROWS_AS(train(c), DataError);
}

TEST_CASE("ablation grid of one cell is one train + evaluate") {
    const Dataset lab = urban(24, 24, 16);
    const Dataset test = urban(10, 10, 17);
    AblationConfig ac;
    ac.base = tiny_config(TaskSet::kA, 2);
    ac.tasks = {TaskSet::kA};
    ac.seeds = {5};
    const auto rows = ablation_grid(ac, lab, nullptr, test);
    REQUIRE(rows.size() == 1);
    TrainConfig c = ac.base;
    c.seed = 5;
    const double f1 = evaluate(train(c, lab, nullptr).checkpoint, test)["weighted_f1"].get<double>();
    CHECK(rows[0].mean_f1 == f1);
    CHECK(rows[0].std_f1 == 0.0);
    CHECK(rows[0].n_seeds == 1);
    const auto j = ablation_row_to_json(rows[0]);
    for (const char* k : {"gamma", "unlabeled_size", "task", "mean_f1", "std_f1", "n_seeds"}) CHECK(j.contains(k));
    CHECK(j["gamma"] == 0.5);

    ac.seeds = {5, 6};
    ac.tasks = {TaskSet::kA, TaskSet::kAS};
    const Dataset unl = urban(16, 0, 18);
    ac.unlabeled_sizes = {0, 16};
    const auto grid = ablation_grid(ac, lab, &unl, test);
    CHECK(grid.size() == 3);  // A once, AS at 0 and at 16
    for (const auto& r : grid) CHECK(r.n_seeds == 2);
}
