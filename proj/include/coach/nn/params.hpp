#pragma once

#include "coach/nn/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace coach::nn {

/// How init_params fills a parameter.
enum class InitKind {
    kFanIn,    ///< U(-sqrt(3/fan_in), sqrt(3/fan_in)); variance 1/fan_in
    kZeros,
    kOnes,
    kNormal02  ///< N(0, 0.02)
};

struct ParamSpec {
    std::string name;
    Shape shape;
    InitKind init = InitKind::kFanIn;
};

/// Named parameters in declaration order plus same-shaped gradient slots.
template <typename T>
class ParamStore {
  public:
    std::size_t add(const std::string& name, Shape shape) {
        if (index_.count(name)) throw ContractViolation("duplicate parameter name '" + name + "'");
        index_[name] = names_.size();
        names_.push_back(name);
        values_.emplace_back(shape);
        grads_.emplace_back(shape);
        return names_.size() - 1;
    }

    [[nodiscard]] std::size_t size() const { return names_.size(); }
    [[nodiscard]] const std::string& name(std::size_t i) const { return names_[i]; }
    [[nodiscard]] std::size_t index(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ContractViolation("unknown parameter '" + name + "'");
        return it->second;
    }
    [[nodiscard]] bool contains(const std::string& name) const { return index_.count(name) > 0; }

    Tensor<T>& value(std::size_t i) { return values_[i]; }
    const Tensor<T>& value(std::size_t i) const { return values_[i]; }
    Tensor<T>& grad(std::size_t i) { return grads_[i]; }
    const Tensor<T>& grad(std::size_t i) const { return grads_[i]; }

    void zero_grad() {
        for (auto& g : grads_) std::fill(g.data.begin(), g.data.end(), T(0));
    }

    [[nodiscard]] std::size_t numel() const {
        std::size_t n = 0;
        for (const auto& v : values_) n += v.size();
        return n;
    }

    template <typename U>
    [[nodiscard]] ParamStore<U> cast() const {
        ParamStore<U> out;
        for (std::size_t i = 0; i < size(); ++i) {
            out.add(names_[i], values_[i].shape);
            out.value(i) = values_[i].template cast<U>();
        }
        return out;
    }

  private:
    std::vector<std::string> names_;
    std::vector<Tensor<T>> values_;
    std::vector<Tensor<T>> grads_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Builds and seeds a store from a list of specs. Fan-in is the first
/// dimension of 2-D weights (stored input-major: [in, out]).
template <typename T>
ParamStore<T> init_params(const std::vector<ParamSpec>& specs, std::uint64_t seed) {
    ParamStore<T> store;
    std::mt19937_64 rng(seed);
    for (const auto& spec : specs) {
        const std::size_t idx = store.add(spec.name, spec.shape);
        auto& data = store.value(idx).data;
        switch (spec.init) {
            case InitKind::kZeros: break;
            case InitKind::kOnes: std::fill(data.begin(), data.end(), T(1)); break;
            case InitKind::kNormal02: {
                std::normal_distribution<double> nd(0.0, 0.02);
                for (auto& x : data) x = static_cast<T>(nd(rng));
                break;
            }
            case InitKind::kFanIn: {
                const double fan_in = static_cast<double>(spec.shape.empty() ? 1 : spec.shape.front());
                const double bound = std::sqrt(3.0 / fan_in);
                std::uniform_real_distribution<double> ud(-bound, bound);
                for (auto& x : data) x = static_cast<T>(ud(rng));
                break;
            }
        }
    }
    return store;
}

}  // namespace coach::nn
