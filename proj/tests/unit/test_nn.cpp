#include "doctest.h"

#include "coach/nn/gradcheck.hpp"
#include "coach/nn/layers.hpp"

#include <random>

using namespace coach;
using namespace coach::nn;

namespace {

Tensor<double> random_tensor(Shape s, std::mt19937_64& rng, double scale = 1.0) {
    Tensor<double> t(std::move(s));
    std::normal_distribution<double> nd(0.0, scale);
    for (auto& x : t.data) x = nd(rng);
    return t;
}

// Deterministic, smooth scalar read-out so every output entry matters.
Var readout(Graph<double>& g, Var y) {
    const auto& Y = g.value(y);
    Tensor<double> w(Y.shape);
    for (std::size_t i = 0; i < w.size(); ++i) w.data[i] = std::sin(0.37 * static_cast<double>(i) + 0.1);
    // sum(w o y) via a 1 x n times n x 1 product
    const Var yw = g.reshape(y, {1, Y.size()});
    const Var wc = g.constant(Tensor<double>({Y.size(), 1}, w.data));
    return g.matmul(yw, wc);
}

// Stores inputs as parameters too so their gradients are checked.
struct Harness {
    ParamStore<double> store;
    std::function<Var(Binder<double, ParamStore<double>>&)> body;

    double operator()(ParamStore<double>& s, bool backward) const {
        Graph<double> g(backward);
        Binder<double, ParamStore<double>> b(g, s);
        const Var out = readout(g, body(b));
        if (backward) g.backward(out);
        return g.value(out).data[0];
    }
};

double check(Harness& h) {
    const auto rep = grad_check([&](ParamStore<double>& s, bool bw) { return h(s, bw); }, h.store, 1e-5, 200, 1);
    INFO("worst " << rep.worst_param << "[" << rep.worst_index << "] analytic " << rep.worst_analytic << " numeric "
                  << rep.worst_numeric);
    CHECK(rep.entries_checked > 0);
    return rep.max_rel_error;
}

void add_random(ParamStore<double>& s, const std::string& name, Shape shape, std::mt19937_64& rng,
                double scale = 1.0) {
    const auto i = s.add(name, shape);
    s.value(i) = random_tensor(shape, rng, scale);
}

}  // namespace

TEST_CASE("softmax of a constant row is uniform") {
    Graph<double> g(false);
    const Var x = g.constant(Tensor<double>({2, 5}, 3.25));
    const auto& y = g.value(g.softmax(x));
    for (double v : y.data) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one") {
    std::mt19937_64 rng(2);
    Graph<float> g(false);
    Tensor<float> t({4, 9});
    std::normal_distribution<float> nd(0.f, 5.f);
    for (auto& v : t.data) v = nd(rng);
    const auto& y = g.value(g.softmax(g.constant(t)));
    for (std::size_t r = 0; r < 4; ++r) {
        float s = 0;
        for (std::size_t c = 0; c < 9; ++c) s += y(r, c);
        CHECK(std::abs(s - 1.0f) < 1e-6f);
    }
}

TEST_CASE("max pool over a length-1 axis is the identity") {
    std::mt19937_64 rng(4);
    Graph<double> g(false);
    const auto t = random_tensor({3, 4}, rng);
    CHECK(g.value(g.max_pool_rows(g.constant(t), 1)).data == t.data);
    CHECK(g.value(g.max_pool_strided(g.constant(t), 3)).data == t.data);
}

TEST_CASE("single-head attention matches a brute-force evaluator") {
    std::mt19937_64 rng(9);
    const std::size_t n = 4, d = 4;
    Tensor<double> q({n, d}), k({n, d}), v({n, d});
    // one-hot-like rows
    for (std::size_t i = 0; i < n; ++i) {
        q(i, i % d) = 1.0;
        k(i, (i + 1) % d) = 1.0;
    }
    v = random_tensor({n, d}, rng);
    Graph<double> g(false);
    const auto& out = g.value(g.attention(g.constant(q), g.constant(k), g.constant(v), 1));

    // reference: explicit loops
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> s(n);
        double mx = -1e300;
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0;
            for (std::size_t c = 0; c < d; ++c) acc += q(i, c) * k(j, c);
            s[j] = acc / std::sqrt(static_cast<double>(d));
            mx = std::max(mx, s[j]);
        }
        double z = 0;
        for (auto& x : s) z += (x = std::exp(x - mx));
        double wsum = 0;
        for (std::size_t j = 0; j < n; ++j) wsum += s[j] / z;
        CHECK(wsum == doctest::Approx(1.0));
        for (std::size_t c = 0; c < d; ++c) {
            double ref = 0;
            for (std::size_t j = 0; j < n; ++j) ref += s[j] / z * v(j, c);
            CHECK(out(i, c) == doctest::Approx(ref).epsilon(1e-12));
        }
    }
}

TEST_CASE("masked keys get exactly zero weight") {
    std::mt19937_64 rng(12);
    const auto q = random_tensor({3, 4}, rng);
    const auto k = random_tensor({5, 4}, rng);
    auto v = random_tensor({5, 4}, rng);
    std::vector<std::uint8_t> mask{1, 0, 1, 1, 0};
    Graph<double> g(false);
    const auto base = g.value(g.attention(g.constant(q), g.constant(k), g.constant(v), 2, mask));
    // perturbing masked values must not change anything
    for (std::size_t c = 0; c < 4; ++c) {
        v(1, c) += 100.0;
        v(4, c) -= 50.0;
    }
    Graph<double> g2(false);
    const auto pert = g2.value(g2.attention(g2.constant(q), g2.constant(k), g2.constant(v), 2, mask));
    CHECK(pert.data == base.data);
}

TEST_CASE("shape mismatch names both shapes") {
    Graph<double> g(false);
    const Var a = g.constant(Tensor<double>({2, 3}));
    const Var b = g.constant(Tensor<double>({4, 5}));
    try {
        g.matmul(a, b);
        FAIL("expected ContractViolation");
    } catch (const ContractViolation& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[4x5]") != std::string::npos);
    }
}

TEST_CASE("grad_check: linear layer") {
    std::mt19937_64 rng(21);
    Harness h;
    add_random(h.store, "x", {5, 6}, rng);
    add_random(h.store, "l.w", {6, 4}, rng);
    add_random(h.store, "l.b", {4}, rng);
    h.body = [](auto& b) { return b.linear("l", b.p("x")); };
    CHECK(check(h) < 1e-6);
}

TEST_CASE("grad_check: layer norm") {
    std::mt19937_64 rng(22);
    Harness h;
    add_random(h.store, "x", {4, 8}, rng);
    add_random(h.store, "n.gain", {8}, rng);
    add_random(h.store, "n.bias", {8}, rng);
    h.body = [](auto& b) { return b.layer_norm("n", b.p("x")); };
    CHECK(check(h) < 1e-6);
}

TEST_CASE("grad_check: relu, sigmoid, softmax") {
    std::mt19937_64 rng(23);
    Harness h;
    add_random(h.store, "x", {3, 7}, rng);
    h.body = [](auto& b) {
        auto& g = b.g();
        const Var r = g.relu(b.p("x"));
        const Var s = g.sigmoid(b.p("x"));
        const Var m = g.softmax(b.p("x"));
        return g.add(g.add(r, s), m);
    };
    CHECK(check(h) < 1e-6);
}

TEST_CASE("grad_check: multi-head attention with mask") {
    std::mt19937_64 rng(24);
    Harness h;
    add_random(h.store, "xq", {3, 8}, rng);
    add_random(h.store, "xkv", {5, 8}, rng);
    for (const char* p : {"a.q", "a.k", "a.v", "a.o"}) {
        add_random(h.store, std::string(p) + ".w", {8, 8}, rng, 0.35);
        if (std::string(p) != "a.k") add_random(h.store, std::string(p) + ".b", {8}, rng);
    }
    h.body = [](auto& b) {
        return b.attention("a", b.p("xq"), b.p("xkv"), 2, std::vector<std::uint8_t>{1, 1, 0, 1, 1});
    };
    CHECK(check(h) < 1e-6);
}

TEST_CASE("grad_check: pooling, reshapes and embedding lookup") {
    std::mt19937_64 rng(25);
    Harness h;
    add_random(h.store, "x", {6, 4}, rng);
    add_random(h.store, "e", {5, 4}, rng);
    h.body = [](auto& b) {
        auto& g = b.g();
        const Var x = b.p("x");
        const Var pooled = g.max_pool_rows(x, 3);     // 2 x 4
        const Var strided = g.max_pool_strided(x, 2); // 2 x 4
        const Var emb = g.embedding_lookup(b.p("e"), {4, 0});
        const Var both[] = {pooled, strided, emb};
        const Var cat = g.concat_cols(both);          // 2 x 12
        const Var rows[] = {g.slice_rows(x, 1, 2), g.reshape(cat, {6, 4})};
        const Var stacked = g.concat_rows(rows);
        return g.add_row(g.scale(stacked, 1.5), g.slice_rows(b.p("e"), 2, 1));
    };
    CHECK(check(h) < 1e-6);
}

TEST_CASE("grad_check: zero-parameter objective passes vacuously") {
    ParamStore<double> empty;
    const auto rep = grad_check([](ParamStore<double>&, bool) { return 1.0; }, empty);
    CHECK(rep.max_rel_error == 0.0);
    CHECK(rep.entries_checked == 0);
}

TEST_CASE("init_params: determinism, zero biases, fan-in variance") {
    SpecBuilder sb;
    sb.linear("big", 100, 200);
    sb.add("emb", {10, 8}, InitKind::kNormal02);
    const auto a = init_params<float>(sb.specs(), 42);
    const auto b = init_params<float>(sb.specs(), 42);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.value(i) == b.value(i));
    for (float x : a.value(a.index("big.b")).data) CHECK(x == 0.0f);
    const auto& w = a.value(a.index("big.w")).data;
    REQUIRE(w.size() >= 10000);
    double m = 0, v = 0;
    for (float x : w) m += x;
    m /= static_cast<double>(w.size());
    for (float x : w) v += (x - m) * (x - m);
    v /= static_cast<double>(w.size());
    CHECK(std::abs(v - 1.0 / 100.0) < 0.2 / 100.0);
    const auto c = init_params<float>(sb.specs(), 43);
    CHECK(!(c.value(0) == a.value(0)));
}

TEST_CASE("forward is bitwise deterministic") {
    std::mt19937_64 rng(31);
    ParamStore<float> s;
    SpecBuilder sb;
    sb.attention("a", 16);
    for (const auto& spec : sb.specs()) s.add(spec.name, spec.shape);
    for (std::size_t i = 0; i < s.size(); ++i)
        for (auto& x : s.value(i).data) x = std::normal_distribution<float>(0.f, 0.3f)(rng);
    Tensor<float> x({7, 16});
    for (auto& v : x.data) v = std::normal_distribution<float>(0.f, 1.f)(rng);
    auto run = [&] {
        Graph<float> g(false);
        const ParamStore<float>& cs = s;
        Binder<float, const ParamStore<float>> b(g, cs);
        const Var in = g.constant(x);
        return g.value(b.attention("a", in, in, 4)).data;
    };
    CHECK(run() == run());
}
