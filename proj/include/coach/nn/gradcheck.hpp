#pragma once

#include "coach/nn/params.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>

namespace coach::nn {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t entries_checked = 0;
    std::size_t kinks_skipped = 0;  ///< entries whose +-eps evaluations changed the branch pattern
};

/// Scalar objective over a double-precision store. When `backward` is true
/// it must also accumulate d(objective)/d(params) into the store's gradients.
using Objective = std::function<double(ParamStore<double>&, bool backward)>;

/// Compares analytic gradients with central differences. Parameters with
/// more than `max_entries` entries are checked on a seeded random subset.
/// Relative error per entry is |ga - gn| / max(1e-8, |ga| + |gn|).
inline GradCheckReport grad_check(const Objective& f, ParamStore<double>& store, double eps = 1e-5,
                                  std::size_t max_entries = 200, std::uint64_t seed = 0) {
    GradCheckReport rep;
    store.zero_grad();
    f(store, true);
    std::mt19937_64 rng(seed);
    for (std::size_t p = 0; p < store.size(); ++p) {
        auto& values = store.value(p).data;
        const auto& grads = store.grad(p).data;
        std::vector<std::size_t> idx(values.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        if (idx.size() > max_entries) {
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(max_entries);
        }
        for (std::size_t i : idx) {
            const double orig = values[i];
            values[i] = orig + eps;
            const double fp = f(store, false);
            values[i] = orig - eps;
            const double fm = f(store, false);
            values[i] = orig;
            const double gn = (fp - fm) / (2.0 * eps);
            const double ga = grads[i];
            const double rel = std::abs(ga - gn) / std::max(1e-8, std::abs(ga) + std::abs(gn));
            ++rep.entries_checked;
            if (rel > rep.max_rel_error) {
                rep.max_rel_error = rel;
                rep.worst_param = store.name(p);
                rep.worst_index = i;
                rep.worst_analytic = ga;
                rep.worst_numeric = gn;
            }
        }
    }
    return rep;
}

/// Objective that also reports the branch pattern of its evaluation
/// (see Graph::track_pattern); used for piecewise-smooth functions.
using PatternObjective = std::function<double(ParamStore<double>&, bool backward, std::uint64_t* pattern)>;

/// As grad_check, but an entry is compared only when f(x + eps) and
/// f(x - eps) lie on the same smooth piece as f(x). Entries whose
/// difference straddles a ReLU / max-pool switch are counted in
/// kinks_skipped instead: there the central difference does not estimate
/// the derivative.
inline GradCheckReport grad_check_piecewise(const PatternObjective& f, ParamStore<double>& store, double eps = 1e-5,
                                            std::size_t max_entries = 200, std::uint64_t seed = 0) {
    GradCheckReport rep;
    store.zero_grad();
    std::uint64_t base = 0;
    f(store, true, &base);
    std::mt19937_64 rng(seed);
    for (std::size_t p = 0; p < store.size(); ++p) {
        auto& values = store.value(p).data;
        const auto& grads = store.grad(p).data;
        std::vector<std::size_t> idx(values.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        if (idx.size() > max_entries) {
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(max_entries);
        }
        for (std::size_t i : idx) {
            const double orig = values[i];
            std::uint64_t pp = 0, pm = 0;
            values[i] = orig + eps;
            const double fp = f(store, false, &pp);
            values[i] = orig - eps;
            const double fm = f(store, false, &pm);
            values[i] = orig;
            if (pp != base || pm != base) {
                ++rep.kinks_skipped;
                continue;
            }
            const double gn = (fp - fm) / (2.0 * eps);
            const double ga = grads[i];
            const double rel = std::abs(ga - gn) / std::max(1e-8, std::abs(ga) + std::abs(gn));
            ++rep.entries_checked;
            if (rel > rep.max_rel_error) {
                rep.max_rel_error = rel;
                rep.worst_param = store.name(p);
                rep.worst_index = i;
                rep.worst_analytic = ga;
                rep.worst_numeric = gn;
            }
        }
    }
    return rep;
}

}  // namespace coach::nn
