#include "doctest.h"

#include "coach/errors.hpp"
#include "coach/loss_ops.hpp"
#include "coach/nn/gradcheck.hpp"
#include "support/oracles.hpp"
#include "support/random_cases.hpp"

#include <random>

using namespace coach;

namespace {

std::vector<oracle::P2> to_p2(const std::vector<Vec2>& v) {
    std::vector<oracle::P2> out;
    for (auto p : v) out.push_back({p.x, p.y});
    return out;
}

}  // namespace

TEST_CASE("class weights are negative over positive counts") {
    using Row = std::vector<std::uint8_t>;
    std::vector<Row> rows;
    for (int i = 0; i < 12; ++i) rows.push_back({static_cast<std::uint8_t>(i < 3), static_cast<std::uint8_t>(i % 2), 1});
    const auto w = class_weights(rows, 3);
    CHECK(w[0] == doctest::Approx(3.0));
    CHECK(w[1] == doctest::Approx(1.0));
    CHECK(w[2] == 0.0);

    std::vector<std::size_t> zero;
    const std::vector<Row> none{{0, 1}, {0, 1}};
    const auto capped = class_weights(none, 2, &zero);
    CHECK(capped[0] == kMaxClassWeight);
    REQUIRE(zero.size() == 1);
    CHECK(zero[0] == 0);
}

TEST_CASE("wbce closed-form examples") {
    const std::vector<double> p{0.8, 0.2}, w{3, 1};
    const std::vector<std::uint8_t> y{1, 0};
    CHECK(wbce(p, y, w) == doctest::Approx(0.44629).epsilon(1e-5));

    const std::vector<double> perfect{1.0, 0.0};
    CHECK(wbce(perfect, y, w) < 1e-6);

    // unit weights: plain mean BCE
    const std::vector<double> ones{1, 1};
    const double bce = -(std::log(0.8) + std::log(0.8)) / 2.0;
    CHECK(wbce(p, y, ones) == doctest::Approx(bce).epsilon(1e-12));
}

TEST_CASE("wbce matches the reference on random instances") {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 200; ++i) {
        const auto c = cases::wbce_case(rng);
        CHECK(wbce(c.probs, c.labels, c.weights) == doctest::Approx(oracle::wbce(c.probs, c.labels, c.weights)).epsilon(1e-9));
    }
}

TEST_CASE("predict_pose is a cumulative sum") {
    const std::vector<Vec2> zeros(4);
    for (auto p : predict_pose(zeros)) CHECK(p == Vec2{});
    const std::vector<Vec2> d{{1, 0}, {1, 0}};
    const auto poses = predict_pose(d);
    CHECK(poses[0] == Vec2{1, 0});
    CHECK(poses[1] == Vec2{2, 0});

    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd;
    std::vector<Vec2> r(30);
    for (auto& v : r) v = {nd(rng), nd(rng)};
    const auto rp = predict_pose(r);
    for (std::size_t t = 1; t < r.size(); ++t) {
        CHECK(rp[t].x - rp[t - 1].x == doctest::Approx(r[t].x).epsilon(1e-12));
        CHECK(rp[t].y - rp[t - 1].y == doctest::Approx(r[t].y).epsilon(1e-12));
    }
}

TEST_CASE("mon_ade picks the best mode") {
    const std::vector<Vec2> gt{{1, 0}, {2, 0}};
    // Q = 1, exact deltas
    const std::vector<std::vector<Vec2>> exact{{{1, 0}, {1, 0}}};
    CHECK(mon_ade(exact, gt) == doctest::Approx(0.0));

    std::vector<std::vector<Vec2>> modes{{{1, 0}, {1, 1}}, {{0, 0}, {2, 0}}};
    CHECK(mon_ade(modes, gt) == doctest::Approx(0.5));
    modes.push_back({{1, 0.2}, {1, -0.2}});  // poses (1,0.2), (2,0): ADE 0.1
    CHECK(mon_ade(modes, gt) == doctest::Approx(0.1));

    std::mt19937_64 rng(3);
    for (int i = 0; i < 200; ++i) {
        const auto c = cases::traj_case(rng);
        std::vector<std::vector<oracle::P2>> om;
        for (const auto& m : c.modes) om.push_back(to_p2(m));
        CHECK(mon_ade(c.modes, c.gt) == doctest::Approx(oracle::mon_ade(om, to_p2(c.gt))).epsilon(1e-12));
    }
}

TEST_CASE("skill_mse") {
    const std::vector<double> a{2, 0}, z{0, 0};
    CHECK(skill_mse(z, a) == doctest::Approx(2.0));
    CHECK(skill_mse(a, z) == skill_mse(z, a));
    CHECK(skill_mse(a, a) == 0.0);
}

TEST_CASE("total loss masks absent targets") {
    ModelOutput o;
    o.teacher_probs = {0.7, 0.2, 0.1};
    o.traj_modes = {{{1, 0}, {1, 0}}};
    o.skill_pred = {0.5, -0.5};
    const std::vector<double> cw{1, 2, 3};

    Targets labeled;
    labeled.teacher = std::vector<std::uint8_t>{1, 0, 0};
    labeled.future = std::vector<Vec2>{{1, 1}, {2, 1}};
    labeled.skill = std::vector<double>{0, 0};
    Targets unlabeled = labeled;
    unlabeled.teacher.reset();

    const std::vector<ModelOutput> outs{o, o};
    const double w = wbce(o.teacher_probs, *labeled.teacher, cw);
    const double traj = mon_ade(o.traj_modes, *labeled.future);
    const double sk = skill_mse(o.skill_pred, *labeled.skill);

    SUBCASE("teacher only") {
        const std::vector<Targets> t{labeled};
        const auto r = total_loss(std::span(outs).first(1), t, {1, 0, 0}, cw);
        CHECK(r.total == doctest::Approx(w));
    }
    SUBCASE("unlabeled batch") {
        const std::vector<Targets> t{unlabeled, unlabeled};
        const auto r = total_loss(outs, t, {1, 1, 1}, cw);
        CHECK(r.teacher == 0.0);
        CHECK(r.n_teacher == 0);
        CHECK(r.total == doctest::Approx(traj + sk));
    }
    SUBCASE("one labeled of two") {
        ModelOutput o2 = o;
        o2.teacher_probs = {0.1, 0.1, 0.8};
        const std::vector<ModelOutput> mixed{o, o2};
        const std::vector<Targets> t{unlabeled, labeled};
        const auto r = total_loss(mixed, t, {2, 1, 1}, cw);
        CHECK(r.n_teacher == 1);
        CHECK(r.teacher == doctest::Approx(wbce(o2.teacher_probs, *labeled.teacher, cw)));
        CHECK(r.total == doctest::Approx(2 * r.teacher + traj + sk));
    }
    SUBCASE("no targets") {
        const std::vector<Targets> t{Targets{}};
        CHECK_THROWS_AS(total_loss(std::span(outs).first(1), t, {1, 1, 1}, cw), ContractViolation);
    }
}

TEST_CASE("task switches zero excluded coefficients") {
    const LossCoefficients c{1, 2, 3};
    CHECK(c.masked(TaskSet::kA).a2 == 0.0);
    CHECK(c.masked(TaskSet::kA).a3 == 0.0);
    CHECK(c.masked(TaskSet::kAT).a2 == 2.0);
    CHECK(c.masked(TaskSet::kAT).a3 == 0.0);
    CHECK(c.masked(TaskSet::kAS).a2 == 0.0);
    CHECK(c.masked(TaskSet::kAST).a3 == 3.0);
    CHECK(task_set_from_string("AST") == TaskSet::kAST);
    CHECK_THROWS_AS(task_set_from_string("TS"), ConfigError);
}

TEST_CASE("graph loss nodes agree with the plain versions") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> nd(0, 3);
    for (int i = 0; i < 50; ++i) {
        const auto c = cases::wbce_case(rng);
        nn::Graph<double> g(false);
        nn::Tensor<double> logits({1, c.probs.size()});
        std::vector<double> probs;
        for (auto& x : logits.data) {
            x = nd(rng);
            probs.push_back(1.0 / (1.0 + std::exp(-x)));
        }
        const auto v = wbce_node(g, g.constant(logits), c.labels, c.weights);
        CHECK(g.value(v).data[0] == doctest::Approx(wbce(probs, c.labels, c.weights)).epsilon(1e-9));

        const auto tc = cases::traj_case(rng);
        nn::Tensor<double> deltas({tc.modes.size(), 2 * tc.gt.size()});
        for (std::size_t q = 0; q < tc.modes.size(); ++q)
            for (std::size_t t = 0; t < tc.gt.size(); ++t) {
                deltas(q, 2 * t) = tc.modes[q][t].x;
                deltas(q, 2 * t + 1) = tc.modes[q][t].y;
            }
        const auto m = mon_ade_node(g, g.constant(deltas), tc.gt);
        CHECK(g.value(m).data[0] == doctest::Approx(mon_ade(tc.modes, tc.gt)).epsilon(1e-12));
    }
}

TEST_CASE("loss node gradients") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    nn::ParamStore<double> store;
    const auto il = store.add("logits", {1, 4});
    const auto it = store.add("traj", {3, 12});
    const auto is = store.add("skill", {1, 2});
    for (auto i : {il, it, is})
        for (auto& x : store.value(i).data) x = nd(rng);
    std::vector<Vec2> gt;
    for (int t = 0; t < 6; ++t) gt.push_back({0.5 * t + nd(rng), nd(rng)});
    const std::vector<std::uint8_t> y{1, 0, 0, 1};
    const std::vector<double> w{2.5, 1, 0.3, 4};
    const std::vector<double> sk{0.4, -1.2};

    auto f = [&](nn::ParamStore<double>& s, bool bw, std::uint64_t* pat) {
        nn::Graph<double> g(bw);
        g.track_pattern(true);
        nn::Binder<double, nn::ParamStore<double>> b(g, s);
        nn::Var l = g.add(wbce_node(g, b.p("logits"), y, w), mon_ade_node(g, b.p("traj"), gt));
        l = g.add(l, skill_mse_node(g, b.p("skill"), sk));
        if (bw) g.backward(l);
        *pat = g.pattern();
        return g.value(l).data[0];
    };
    const auto rep = nn::grad_check_piecewise(f, store, 1e-5, 200, 1);
    INFO(rep.worst_param << "[" << rep.worst_index << "]");
    CHECK(rep.max_rel_error < 1e-6);
    CHECK(rep.entries_checked == 4 + 36 + 2);
}
