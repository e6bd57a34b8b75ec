#pragma once

#include "coach/nn/graph.hpp"

#include <string>
#include <type_traits>
#include <vector>

namespace coach::nn {

/// Declares parameters in a stable, canonical order.
class SpecBuilder {
  public:
    void add(const std::string& name, Shape shape, InitKind init) { specs_.push_back({name, std::move(shape), init}); }

    void linear(const std::string& name, std::size_t in, std::size_t out) {
        add(name + ".w", {in, out}, InitKind::kFanIn);
        add(name + ".b", {out}, InitKind::kZeros);
    }
    void layer_norm(const std::string& name, std::size_t d) {
        add(name + ".gain", {d}, InitKind::kOnes);
        add(name + ".bias", {d}, InitKind::kZeros);
    }
    /// Multi-head attention: q/k/v/out projections. The key projection has
    /// no bias: it would shift every score in a row equally.
    void attention(const std::string& name, std::size_t d) {
        linear(name + ".q", d, d);
        add(name + ".k.w", {d, d}, InitKind::kFanIn);
        linear(name + ".v", d, d);
        linear(name + ".o", d, d);
    }
    /// Pre-norm transformer block: attention + 2-layer feed-forward.
    void block(const std::string& name, std::size_t d, std::size_t ff, bool cross = false) {
        layer_norm(name + ".ln1", d);
        if (cross) layer_norm(name + ".ln_kv", d);
        attention(name + ".attn", d);
        layer_norm(name + ".ln2", d);
        linear(name + ".ff1", d, ff);
        linear(name + ".ff2", ff, d);
    }

    [[nodiscard]] const std::vector<ParamSpec>& specs() const { return specs_; }

  private:
    std::vector<ParamSpec> specs_;
};

/// Binds a graph to a (mutable or const) store; parameter leaves are created
/// once per graph and reused.
template <typename T, typename Store>
class Binder {
    static_assert(std::is_same_v<std::remove_const_t<Store>, ParamStore<T>>);

  public:
    Binder(Graph<T>& g, Store& store) : g_(g), store_(store), leaves_(store.size()) {}

    Graph<T>& g() { return g_; }
    Store& store() { return store_; }

    Var p(const std::string& name) {
        const std::size_t idx = store_.index(name);
        if (!leaves_[idx].valid()) leaves_[idx] = g_.param(store_, idx);
        return leaves_[idx];
    }

    Var linear(const std::string& name, Var x) { return g_.linear(x, p(name + ".w"), p(name + ".b")); }

    Var layer_norm(const std::string& name, Var x) { return g_.layer_norm(x, p(name + ".gain"), p(name + ".bias")); }

    /// Linear -> ReLU -> Linear.
    Var mlp2(const std::string& name, Var x) {
        return linear(name + ".l2", g_.relu(linear(name + ".l1", x)));
    }

    Var attention(const std::string& name, Var xq, Var xkv, std::size_t heads,
                  std::optional<std::vector<std::uint8_t>> key_mask = {}) {
        const Var q = linear(name + ".q", xq);
        const Var k = g_.matmul(xkv, p(name + ".k.w"));
        const Var v = linear(name + ".v", xkv);
        return linear(name + ".o", g_.attention(q, k, v, heads, std::move(key_mask)));
    }

    /// Pre-norm self-attention block.
    Var self_block(const std::string& name, Var x, std::size_t heads) {
        const Var h = layer_norm(name + ".ln1", x);
        x = g_.add(x, attention(name + ".attn", h, h, heads));
        return feed_forward(name, x);
    }

    /// Pre-norm cross-attention block; queries from x, keys/values from ctx.
    Var cross_block(const std::string& name, Var x, Var ctx, std::size_t heads) {
        const Var h = layer_norm(name + ".ln1", x);
        const Var c = layer_norm(name + ".ln_kv", ctx);
        x = g_.add(x, attention(name + ".attn", h, c, heads));
        return feed_forward(name, x);
    }

  private:
    Var feed_forward(const std::string& name, Var x) {
        const Var h = layer_norm(name + ".ln2", x);
        return g_.add(x, linear(name + ".ff2", g_.relu(linear(name + ".ff1", h))));
    }

    Graph<T>& g_;
    Store& store_;
    std::vector<Var> leaves_;
};

}  // namespace coach::nn
