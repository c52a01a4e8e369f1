#include "mhf/choquet.hpp"

#include <algorithm>
#include <cmath>

namespace mhf {

OlBase ol_base(const MarketParams& m, const LossModel& loss) {
    return {m.beta - m.gamma - m.theta * loss.mean - m.sigma * loss.variance,
            m.theta - 2.0 * m.sigma * loss.mean};
}

double ol(const std::vector<double>& f, const OlBase& base, const LossModel& loss, double sigma) {
    const Grid& grid = loss.grid;
    if (static_cast<int>(f.size()) != grid.nodes()) throw ModelError("ol: array does not match grid");
    const std::vector<double> w = trapezoid_weights(grid);
    double s = 0.0, s2 = 0.0, sq = 0.0;
    for (int i = 0; i <= grid.n; ++i) {
        s += w[i] * f[i];
        s2 += w[i] * f[i] * f[i];
        sq += w[i] * loss.quantile[i] * f[i];
    }
    return sigma * s * s - sigma * s2 + 2.0 * sigma * sq + base.theta_eff * s + base.k;
}

double ol(const std::vector<double>& f, const Bundle& b) {
    return ol(f, ol_base(b.market, b.loss), b.loss, b.market.sigma);
}

std::vector<double> nodal_measure_weights(const DistortionMeasure& mu) {
    const int n = mu.grid.n;
    std::vector<double> om(n + 1, 0.0);
    for (int j = 0; j < n; ++j) {
        const double m = mu.cell_mass(j);
        om[j] += 0.5 * m;
        om[j + 1] += 0.5 * m;
    }
    for (const Atom& a : mu.atoms) {
        const double x = a.location * n;
        const int i = std::min(static_cast<int>(std::floor(x)), n);
        if (i == n) {
            om[n] += a.mass;
            continue;
        }
        const double lam = x - i;
        om[i] += a.mass * (1.0 - lam);
        om[i + 1] += a.mass * lam;
    }
    return om;
}

std::vector<double> reflected_weights(const DistortionMeasure& mu) {
    std::vector<double> om = nodal_measure_weights(mu);
    std::reverse(om.begin(), om.end());
    return om;
}

double choquet_expectation(const std::vector<double>& y, const DistortionMeasure& mu) {
    if (static_cast<int>(y.size()) != mu.grid.nodes())
        throw ModelError("choquet_expectation: array does not match grid");
    for (std::size_t j = 1; j < y.size(); ++j)
        if (y[j] < y[j - 1] - 1e-12 * (1.0 + std::abs(y[j - 1])))
            throw ModelError("choquet_expectation: quantile decreases at node " + std::to_string(j));
    const std::vector<double> om = nodal_measure_weights(mu);
    double s = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) s += om[j] * y[j];
    return s;
}

Discretization::Discretization(const Bundle& bundle)
    : n(bundle.n()),
      dp(bundle.grid().dp()),
      sigma(bundle.market.sigma),
      theta(bundle.market.theta),
      mean(bundle.loss.mean),
      base(ol_base(bundle.market, bundle.loss)),
      u(bundle.u),
      w(trapezoid_weights(bundle.grid())),
      q(bundle.loss.quantile),
      b(bundle.n()),
      mt(reflected_weights(bundle.mu)) {
    for (int k = 0; k < n; ++k) b[k] = q[k + 1] - q[k];
}

double Discretization::integral(const std::vector<double>& g) const {
    double s = 0.0;
    for (int i = 0; i <= n; ++i) s += w[i] * g[i];
    return s;
}

double Discretization::ol(const std::vector<double>& g) const {
    double s = 0.0, s2 = 0.0, sq = 0.0;
    for (int i = 0; i <= n; ++i) {
        s += w[i] * g[i];
        s2 += w[i] * g[i] * g[i];
        sq += w[i] * q[i] * g[i];
    }
    return sigma * s * s - sigma * s2 + 2.0 * sigma * sq + base.theta_eff * s + base.k;
}

double Discretization::objective(const std::vector<double>& g) const {
    const double o = ol(g);
    double j = 0.0;
    for (int i = 0; i <= n; ++i) j += mt[i] * u.value(o - g[i]);
    return j;
}

std::vector<double> Discretization::psi_prime(const std::vector<double>& g) const {
    const double c0 = 2.0 * sigma * integral(g) + base.theta_eff;
    std::vector<double> v(n + 1);
    for (int i = 0; i <= n; ++i) v[i] = c0 - 2.0 * sigma * (g[i] - q[i]);
    return v;
}

double Discretization::marginal_mass(const std::vector<double>& g) const {
    const double o = ol(g);
    double a = 0.0;
    for (int i = 0; i <= n; ++i) a += mt[i] * u.deriv(o - g[i]);
    return a;
}

bool Discretization::clamped(const std::vector<double>& g) const {
    const double o = ol(g);
    for (int i = 0; i <= n; ++i)
        if (mt[i] > 0.0 && u.clamps(o - g[i])) return true;
    return false;
}

double rdu_objective(const std::vector<double>& g, const Bundle& b, bool* clamped) {
    const Discretization d(b);
    if (static_cast<int>(g.size()) != d.n + 1) throw ModelError("rdu_objective: array does not match grid");
    if (clamped) *clamped = d.clamped(g);
    return d.objective(g);
}

std::vector<double> rdu_gradient(const std::vector<double>& g, const Bundle& b, bool* clamped) {
    const Discretization d(b);
    if (static_cast<int>(g.size()) != d.n + 1) throw ModelError("rdu_gradient: array does not match grid");
    if (clamped) *clamped = d.clamped(g);
    const double o = d.ol(g);
    const double A = d.marginal_mass(g);
    const std::vector<double> pp = d.psi_prime(g);
    std::vector<double> grad(d.n + 1);
    for (int i = 0; i <= d.n; ++i) grad[i] = A * d.w[i] * pp[i] - d.mt[i] * d.u.deriv(o - g[i]);
    return grad;
}

}  // namespace mhf
