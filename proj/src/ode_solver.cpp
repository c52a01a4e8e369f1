#include "mhf/ode_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "mhf/choquet.hpp"
#include "mhf/parallel.hpp"

namespace mhf {

namespace {

using Vec = std::vector<double>;

// Bisection for the root of a decreasing f on [lo, hi]; clamps to the ends
// when f has one sign throughout. `clamped` reports the latter.
template <class F>
double decreasing_root(F&& f, double lo, double hi, bool& clamped) {
    clamped = false;
    if (f(lo) <= 0.0) {
        clamped = true;
        return lo;
    }
    if (f(hi) >= 0.0) {
        clamped = true;
        return hi;
    }
    for (int it = 0; it < 200 && hi - lo > 1e-16 * std::max(1.0, std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

void fill_residual(InnerTrajectory& tr, const Discretization& D, double lambda_end, double d, double rho) {
    tr.residual[0] = lambda_end;
    tr.residual[1] = D.ol(tr.gamma) - d;
    tr.residual[2] = rho - (2.0 * D.sigma * D.integral(tr.gamma) + D.base.theta_eff);
}

// Cell recursion. Lambda accumulates w_i Psi'_i - c m_i u'(d - Gamma_i) node by
// node, which is the discrete optimality condition of the direct problem with
// c = 1/A; Gamma's increment on cell k is then chosen from the sign of Lambda.
InnerTrajectory integrate_matched(const Discretization& D, double c, double d, double rho, double theta,
                                  double band) {
    const int n = D.n;
    const double s2 = 2.0 * D.sigma;
    InnerTrajectory tr;
    tr.lambda.assign(n + 1, 0.0);
    tr.gamma.assign(n + 1, 0.0);
    Vec& g = tr.gamma;

    double L = 1.0 - theta;
    tr.lambda[0] = L;
    for (int k = 0; k < n; ++k) {
        L += D.w[k] * (s2 * (D.q[k] - g[k]) + rho) - c * D.mt[k] * D.u.deriv(d - g[k]);
        if (k > 0) tr.lambda[k] = L;
        double inc;
        if (L <= -2.0 * band) {
            inc = D.b[k];
        } else if (L >= 2.0 * band) {
            inc = 0.0;
        } else {
            // singular arc: hold Lambda, i.e. pick Gamma_{k+1} with zero next contribution
            const int j = k + 1;
            auto f = [&](double x) { return D.w[j] * (s2 * (D.q[j] - x) + rho) - c * D.mt[j] * D.u.deriv(d - x); };
            bool clamped = false;
            inc = decreasing_root(f, g[k], g[k] + D.b[k], clamped) - g[k];
            // Outside [-band, band] blend linearly towards the bang value. This keeps the
            // increment continuous in (c, d, rho), so a bang-bang switch can land mid-cell.
            if (L > band) {
                inc *= (2.0 * band - L) / band;
            } else if (L < -band) {
                inc += (D.b[k] - inc) * (-L - band) / band;
            } else {
                ++tr.band_steps;
                if (clamped) ++tr.clamp_events;
            }
        }
        g[k + 1] = g[k] + inc;
    }
    L += D.w[n] * (s2 * (D.q[n] - g[n]) + rho) - c * D.mt[n] * D.u.deriv(d - g[n]);
    tr.lambda[n] = L;
    fill_residual(tr, D, L, d, rho);
    return tr;
}

InnerTrajectory integrate_rk4(const Bundle& bundle, const Discretization& D, double c, double d, double rho,
                              double band) {
    const int n = D.n;
    const double dp = D.dp, s2 = 2.0 * D.sigma;
    const LossModel& loss = bundle.loss;
    const DistortionMeasure& mu = bundle.mu;

    auto quant = [&](int k, double p) {
        if (loss.quantile_fn) return loss.quantile_fn(p);
        const double lam = (p - loss.grid.p(k)) / dp;
        return D.q[k] + lam * D.b[k];
    };
    // density of mu at t = 1 - p for p in cell k
    auto dens = [&](int k, double p) {
        if (mu.density_fn) return mu.density_fn(1.0 - p);
        return mu.density[n - 1 - k];
    };

    InnerTrajectory tr;
    tr.lambda.assign(n + 1, 0.0);
    tr.gamma.assign(n + 1, 0.0);
    double L = 1.0 - D.theta;
    tr.lambda[0] = L;
    for (int k = 0; k < n; ++k) {
        const double p0 = loss.grid.p(k);
        const double g0 = tr.gamma[k], q0 = D.q[k];
        int branch = L < -band ? 1 : (L > band ? -1 : 0);
        if (branch == 0) ++tr.band_steps;
        auto gamma_at = [&](double p) {
            const double up = g0 + quant(k, p) - q0;
            if (branch > 0) return up;
            if (branch < 0) return g0;
            const double qp = quant(k, p), mp = dens(k, p);
            auto f = [&](double x) { return s2 * (qp - x) + rho - c * D.u.deriv(d - x) * mp; };
            bool clamped = false;
            const double x = decreasing_root(f, g0, up, clamped);
            if (clamped) ++tr.clamp_events;
            return x;
        };
        auto rhs = [&](double p) {
            const double gm = gamma_at(p);
            return s2 * (quant(k, p) - gm) + rho - c * D.u.deriv(d - gm) * dens(k, p);
        };
        const double f0 = rhs(p0), fm = rhs(p0 + 0.5 * dp), f1 = rhs(p0 + dp);
        L += dp / 6.0 * (f0 + 4.0 * fm + f1);
        tr.gamma[k + 1] = gamma_at(p0 + dp);
        tr.lambda[k + 1] = L;
    }
    fill_residual(tr, D, L, d, rho);
    return tr;
}

struct Outer {
    Eigen::Vector3d x;  // (c, d, rho)
    InnerTrajectory tr;
    double merit = std::numeric_limits<double>::infinity();
    int iterations = 0;
};

double merit_of(const InnerTrajectory& tr, double ess_sup) {
    return std::max({std::abs(tr.residual[0]), std::abs(tr.residual[1]) / ess_sup, std::abs(tr.residual[2])});
}

// Newton on the three matching conditions with a forward-difference Jacobian
// and halving on the max scaled residual.
Outer newton_outer(const Bundle& bundle, const Discretization& D, Eigen::Vector3d x, double band,
                   const OdeConfig& cfg) {
    const double ess = bundle.loss.ess_sup;
    auto run = [&](const Eigen::Vector3d& z) {
        return cfg.scheme == OdeConfig::Scheme::Matched ? integrate_matched(D, z[0], z[1], z[2], D.theta, band)
                                                        : integrate_rk4(bundle, D, z[0], z[1], z[2], band);
    };
    Outer o;
    o.x = x;
    o.tr = run(x);
    o.merit = merit_of(o.tr, ess);
    for (int it = 0; it < cfg.max_iters && o.merit > cfg.target; ++it) {
        o.iterations = it + 1;
        const Eigen::Vector3d r(o.tr.residual[0], o.tr.residual[1], o.tr.residual[2]);
        Eigen::Matrix3d J;
        std::array<InnerTrajectory, 3> probe;
        std::array<double, 3> hs{};
        parallel_for(3, cfg.threads, [&](int j) {
            Eigen::Vector3d z = o.x;
            hs[j] = 1e-7 * std::max(1.0, std::abs(z[j]));
            z[j] += hs[j];
            probe[j] = run(z);
        });
        for (int j = 0; j < 3; ++j)
            for (int i = 0; i < 3; ++i) J(i, j) = (probe[j].residual[i] - r[i]) / hs[j];
        const Eigen::Vector3d step = J.completeOrthogonalDecomposition().solve(-r);
        if (!step.allFinite()) break;

        bool accepted = false;
        for (double lam = 1.0; lam > 1e-4; lam *= 0.5) {
            const Eigen::Vector3d xn = o.x + lam * step;
            if (!(xn[0] > 0.0)) continue;
            InnerTrajectory tn = run(xn);
            const double mn = merit_of(tn, ess);
            if (mn < o.merit) {
                o.x = xn;
                o.tr = std::move(tn);
                o.merit = mn;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
    }
    return o;
}

Eigen::Vector3d default_constants(const Discretization& D) {
    const double k = D.ol(Vec(D.n + 1, 0.0));
    return {1.0 / D.u.deriv(k), k, D.theta};
}

Outer cold_solve(const Bundle& bundle, const Discretization& D, double band, const OdeConfig& cfg) {
    Eigen::Vector3d x = default_constants(D);
    Outer o;
    // continuation in the band width: wide bands smooth the residual map
    for (double e : {1e-1, 1e-2, 1e-3, 1e-4, 1e-5}) {
        if (e <= band) break;
        o = newton_outer(bundle, D, x, e, cfg);
        x = o.x;
    }
    Outer fin = newton_outer(bundle, D, x, band, cfg);
    fin.iterations += o.iterations;
    return fin;
}

double default_band(double theta) { return 1e-6 * (1.0 + std::abs(1.0 - theta)); }

}  // namespace

InnerTrajectory integrate_inner(double c, double d, double rho, const Bundle& b, double band,
                                OdeConfig::Scheme scheme) {
    if (b.mu.has_atoms()) throw ModelError("ODE route needs a measure with a density; use the direct solver");
    const Discretization D(b);
    if (!(band > 0.0)) band = default_band(D.theta);
    return scheme == OdeConfig::Scheme::Matched ? integrate_matched(D, c, d, rho, D.theta, band)
                                                : integrate_rk4(b, D, c, d, rho, band);
}

OdeConstants warm_constants(const std::vector<double>& g, const Bundle& b) {
    const Discretization D(b);
    if (static_cast<int>(g.size()) != D.n + 1) throw ModelError("warm start does not match grid");
    OdeConstants k;
    k.rho = 2.0 * D.sigma * D.integral(g) + D.base.theta_eff;
    k.d = D.ol(g);
    k.c = 1.0 / D.marginal_mass(g);
    return k;
}

std::vector<double> reconstruct_psi(const std::vector<double>& gamma, double rho, const Bundle& b) {
    const int n = b.n();
    const double dp = b.grid().dp(), s2 = 2.0 * b.market.sigma;
    const Vec& q = b.loss.quantile;
    Vec psi(n + 1);
    psi[0] = 1.0 - b.market.theta;
    double acc = 0.0;
    for (int i = 1; i <= n; ++i) {
        acc += 0.5 * dp * ((q[i - 1] - gamma[i - 1]) + (q[i] - gamma[i]));
        psi[i] = s2 * acc + rho * b.grid().p(i) + 1.0 - b.market.theta;
    }
    return psi;
}

OdeSolution solve_ode(const Bundle& bundle, const std::vector<double>* warm_start, const OdeConfig& cfg) {
    validate_bundle(bundle);
    if (bundle.mu.has_atoms()) throw ModelError("ODE route needs a measure with a density; use the direct solver");
    const Discretization D(bundle);
    const double band = cfg.band > 0.0 ? cfg.band : default_band(D.theta);

    Outer best;
    bool warm = false;
    if (warm_start) {
        const OdeConstants k = warm_constants(*warm_start, bundle);
        best = newton_outer(bundle, D, Eigen::Vector3d(k.c, k.d, k.rho), band, cfg);
        warm = true;
    }
    if (!warm_start || (best.merit > cfg.tol && cfg.cold_fallback)) {
        Outer cold = cold_solve(bundle, D, band, cfg);
        if (cold.merit < best.merit) {
            cold.iterations += best.iterations;
            best = std::move(cold);
            warm = false;
        }
    }

    OdeSolution s;
    s.lambda = std::move(best.tr.lambda);
    s.gamma_fn = std::move(best.tr.gamma);
    s.c = best.x[0];
    s.d = best.x[1];
    s.rho = best.x[2];
    s.psi = reconstruct_psi(s.gamma_fn, s.rho, bundle);
    s.residual = best.tr.residual;
    s.residual_norm = best.merit;
    s.iterations = best.iterations;
    s.converged = best.merit <= cfg.tol;
    s.warm_started = warm;
    s.clamp_events = best.tr.clamp_events;
    return s;
}

}  // namespace mhf
