#pragma once

// Bundles shared by the unit tests and the acceptance driver.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mhf/model.hpp"

namespace mhf::testing {

struct Instance {
    std::string name;
    Bundle bundle;
};

inline LossModel uniform_loss(const Grid& g, double scale = 1.0, double m0 = 0.0) {
    LossSpec s;
    s.kind = LossSpec::Kind::AtomUniform;
    s.scale = scale;
    s.m0 = m0;
    return build_loss_model(s, g);
}

inline LossModel beta_loss(const Grid& g, double a, double b, double scale) {
    LossSpec s;
    s.kind = LossSpec::Kind::Beta;
    s.a = a;
    s.b = b;
    s.scale = scale;
    return build_loss_model(s, g);
}

inline Bundle make_bundle(LossModel loss, DistortionMeasure mu, Utility u, MarketParams m) {
    Bundle b;
    b.loss = std::move(loss);
    b.mu = std::move(mu);
    b.u = u;
    b.market = m;
    return b;
}

// Density-only instances with nontrivial optima: singular arcs for the first
// two, bang-bang retentions for the rest.
inline std::vector<Instance> cross_solver_instances(int n) {
    const Grid g(n);
    std::vector<Instance> v;
    v.push_back({"uniform X, w=p^0.5, exponential u",
                 make_bundle(uniform_loss(g), measure_from_weighting(make_weighting("power", 0.5), g),
                             Utility::exponential(1.0), {0.2, 0.5, 0.0, 0.0})});
    v.push_back({"beta(2,3) X, w=p^0.7, exponential u",
                 make_bundle(beta_loss(g, 2.0, 3.0, 2.0), measure_from_weighting(make_weighting("power", 0.7), g),
                             Utility::exponential(1.0), {0.5, 0.5, 0.0, 0.0})});
    v.push_back({"uniform X, dual power 2, exponential u",
                 make_bundle(uniform_loss(g), measure_from_weighting(make_weighting("dual_power", 2.0), g),
                             Utility::exponential(1.0), {0.5, 0.5, 0.0, 0.0})});
    v.push_back({"beta(2,3) X, dual power 2, linear u",
                 make_bundle(beta_loss(g, 2.0, 3.0, 2.0), measure_from_weighting(make_weighting("dual_power", 2.0), g),
                             Utility::linear(), {0.05, 0.5, 0.0, 0.0})});
    v.push_back({"uniform X with atom at 0, prelec 1.2, linear u",
                 make_bundle(uniform_loss(g, 1.5, 0.2), measure_from_weighting(make_weighting("prelec", 1.2), g),
                             Utility::linear(), {0.2, 0.5, 0.0, 0.0})});
    return v;
}

// Random feasible retention built from uniform random increments in [0, b_k],
// optionally sparsified so that both bounds show up.
inline std::vector<double> random_increments(const LossModel& loss, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const int n = loss.grid.n;
    std::vector<double> g(n + 1, 0.0);
    for (int k = 0; k < n; ++k) {
        const double r = U(rng);
        const double f = r < 0.2 ? 0.0 : (r < 0.4 ? 1.0 : U(rng));
        g[k + 1] = g[k] + f * loss.cell_bound(k);
    }
    return g;
}

inline double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace mhf::testing
