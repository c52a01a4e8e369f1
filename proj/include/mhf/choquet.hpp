#pragma once

#include <vector>

#include "mhf/model.hpp"

namespace mhf {

// Constant part of ol{.}: k = beta - gamma - theta E[X] - sigma Var X, and the
// coefficient theta - 2 sigma E[X] multiplying the integral of f.
struct OlBase {
    double k = 0.0;
    double theta_eff = 0.0;
};

[[nodiscard]] OlBase ol_base(const MarketParams& market, const LossModel& loss);

[[nodiscard]] double ol(const std::vector<double>& f, const OlBase& base, const LossModel& loss, double sigma);
[[nodiscard]] double ol(const std::vector<double>& f, const Bundle& b);

// Nodal weights omega_j with  int y dmu ~= sum_j omega_j y_j  for a nodal y on the
// t-grid: half of each adjacent cell mass plus atoms split by linear interpolation.
[[nodiscard]] std::vector<double> nodal_measure_weights(const DistortionMeasure& mu);

// Same weights, reindexed for the p-grid under t = 1 - p. Entry i multiplies
// u(ol - G(p_i)) in the objective.
[[nodiscard]] std::vector<double> reflected_weights(const DistortionMeasure& mu);

// int_0^1 F_Y^{-1}(t) mu(dt) for a nodal quantile on the t-grid. Throws on a decreasing input.
[[nodiscard]] double choquet_expectation(const std::vector<double>& quantile_of_y, const DistortionMeasure& mu);

// Everything the solvers need about a bundle, with one frozen quadrature.
struct Discretization {
    explicit Discretization(const Bundle& b);

    int n;
    double dp;
    double sigma;
    double theta;
    double mean;        // trapezoid E[X]
    OlBase base;
    Utility u;
    std::vector<double> w;   // trapezoid weights
    std::vector<double> q;   // quantile at nodes
    std::vector<double> b;   // per-cell increment bounds q_{k+1} - q_k
    std::vector<double> mt;  // reflected measure weights

    [[nodiscard]] double integral(const std::vector<double>& g) const;
    [[nodiscard]] double ol(const std::vector<double>& g) const;
    [[nodiscard]] double objective(const std::vector<double>& g) const;
    // Psi'(p_i) = 2 sigma int G + theta - 2 sigma E - 2 sigma (g_i - q_i)
    [[nodiscard]] std::vector<double> psi_prime(const std::vector<double>& g) const;
    // sum_i mt_i u'(ol - g_i)
    [[nodiscard]] double marginal_mass(const std::vector<double>& g) const;
    // true if some utility argument hit the exponent clamp
    [[nodiscard]] bool clamped(const std::vector<double>& g) const;
};

[[nodiscard]] double rdu_objective(const std::vector<double>& g, const Bundle& b, bool* clamped = nullptr);

// dJ/dg_i for every node (entry 0 included, even though g_0 is pinned).
[[nodiscard]] std::vector<double> rdu_gradient(const std::vector<double>& g, const Bundle& b,
                                               bool* clamped = nullptr);

}  // namespace mhf
