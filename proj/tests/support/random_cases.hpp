#pragma once
// Small random instances for the loss / metric oracle comparisons.

#include "coach/geom.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace cases {

struct Classification {
    std::vector<std::vector<double>> probs;
    std::vector<std::vector<std::uint8_t>> labels;
};

// Probabilities are coarse (multiples of 0.1) half the time so that ties and
// exact-threshold values occur.
inline double draw_prob(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (rng() % 2) return std::round(u(rng) * 10.0) / 10.0;
    return u(rng);
}

inline Classification multiclass(std::mt19937_64& rng) {
    const std::size_t n = 1 + rng() % 12, k = 2 + rng() % 4;
    Classification c;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> p(k);
        for (auto& x : p) x = draw_prob(rng);
        std::vector<std::uint8_t> y(k, 0);
        y[rng() % k] = 1;
        c.probs.push_back(p);
        c.labels.push_back(y);
    }
    return c;
}

inline Classification multilabel(std::mt19937_64& rng) {
    const std::size_t n = 1 + rng() % 12, k = 1 + rng() % 5;
    Classification c;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> p(k);
        std::vector<std::uint8_t> y(k);
        for (std::size_t j = 0; j < k; ++j) {
            p[j] = draw_prob(rng);
            y[j] = rng() % 3 == 0;
        }
        c.probs.push_back(p);
        c.labels.push_back(y);
    }
    return c;
}

struct WbceCase {
    std::vector<double> probs;
    std::vector<std::uint8_t> labels;
    std::vector<double> weights;
};

inline WbceCase wbce_case(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t k = 1 + rng() % 6;
    WbceCase c;
    for (std::size_t j = 0; j < k; ++j) {
        double p = u(rng);
        if (rng() % 8 == 0) p = (rng() % 2) ? 0.0 : 1.0;  // exercises the clamp
        c.probs.push_back(p);
        c.labels.push_back(static_cast<std::uint8_t>(rng() % 2));
        c.weights.push_back(u(rng) * 5.0);
    }
    return c;
}

struct TrajCase {
    std::vector<std::vector<coach::Vec2>> modes;  // deltas
    std::vector<coach::Vec2> gt;                  // positions
};

inline TrajCase traj_case(std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    const std::size_t q = 1 + rng() % 5, m = 1 + rng() % 8;
    TrajCase c;
    for (std::size_t i = 0; i < q; ++i) {
        std::vector<coach::Vec2> d(m);
        for (auto& v : d) v = {nd(rng), nd(rng)};
        c.modes.push_back(d);
    }
    for (std::size_t t = 0; t < m; ++t) c.gt.push_back({2.0 * nd(rng), 2.0 * nd(rng)});
    return c;
}

}  // namespace cases
