#include "mhf/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/beta.hpp>

namespace mhf {

namespace {

constexpr double kExpClamp = 700.0;

double clamp_exponent(double e) { return std::clamp(e, -kExpClamp, kExpClamp); }

template <class F>
double cell_integral(F&& f, double a, double b) {
    return boost::math::quadrature::gauss<double, 7>::integrate(f, a, b);
}

void finish_loss(LossModel& m) {
    const Grid& g = m.grid;
    const int n = g.n;
    const double tol = 1e-12 * std::max(1.0, m.quantile.back());

    m.quantile[0] = 0.0;
    for (int k = 0; k < n; ++k) {
        if (!std::isfinite(m.quantile[k + 1]))
            throw ModelError("loss quantile is not finite (unbounded support?)");
        if (m.quantile[k + 1] < m.quantile[k] - tol)
            throw ModelError("loss quantile decreases at p = " + std::to_string(g.p(k)));
        m.quantile[k + 1] = std::max(m.quantile[k + 1], m.quantile[k]);
    }
    m.ess_sup = m.quantile[n];
    if (!(m.ess_sup > 0.0) || !(m.m0 < 1.0))
        throw ModelError("loss is identically zero; need P(X = 0) < 1");

    m.h.assign(n, 0.0);
    for (int k = 0; k < n; ++k) {
        m.h[k] = (m.quantile[k + 1] - m.quantile[k]) / g.dp();
        // strictly increasing beyond the atom at zero
        if (g.p(k) >= m.m0 - 1e-12 && !(m.h[k] > 0.0))
            throw ModelError("loss quantile is flat on (m0, 1) near p = " + std::to_string(g.p(k)));
    }

    std::vector<double> sq(m.quantile.size());
    std::transform(m.quantile.begin(), m.quantile.end(), sq.begin(), [](double x) { return x * x; });
    m.mean = integrate(m.quantile, g);
    m.variance = integrate(sq, g) - m.mean * m.mean;
}

}  // namespace

Grid::Grid(int cells) : n(cells) {
    if (cells < 8) throw ModelError("grid needs at least 8 cells, got " + std::to_string(cells));
}

std::vector<double> trapezoid_weights(const Grid& grid) {
    std::vector<double> w(grid.nodes(), grid.dp());
    w.front() *= 0.5;
    w.back() *= 0.5;
    return w;
}

double integrate(const std::vector<double>& f, const Grid& grid) {
    double s = 0.5 * (f.front() + f.back());
    for (int i = 1; i < grid.n; ++i) s += f[i];
    return s * grid.dp();
}

LossModel build_loss_model(const LossSpec& spec, const Grid& grid) {
    LossModel m;
    m.grid = grid;
    m.quantile.resize(grid.nodes());

    switch (spec.kind) {
    case LossSpec::Kind::AtomUniform: {
        if (!(spec.m0 >= 0.0 && spec.m0 < 1.0)) throw ModelError("atom at zero must lie in [0, 1)");
        if (!(spec.scale > 0.0) || !std::isfinite(spec.scale))
            throw ModelError("loss scale must be positive and finite");
        const double m0 = spec.m0, s = spec.scale;
        m.quantile_fn = [m0, s](double p) { return s * std::max(p - m0, 0.0) / (1.0 - m0); };
        m.m0 = m0;
        break;
    }
    case LossSpec::Kind::Beta: {
        if (!(spec.a > 0.0 && spec.b > 0.0)) throw ModelError("beta shapes must be positive");
        if (!(spec.scale > 0.0) || !std::isfinite(spec.scale))
            throw ModelError("loss scale must be positive and finite");
        const double a = spec.a, b = spec.b, s = spec.scale;
        m.quantile_fn = [a, b, s](double p) {
            if (p <= 0.0) return 0.0;
            if (p >= 1.0) return s;
            return s * boost::math::ibeta_inv(a, b, p);
        };
        m.m0 = 0.0;
        break;
    }
    case LossSpec::Kind::Sample: {
        std::vector<double> x = spec.sample;
        if (x.empty()) throw ModelError("empty loss sample");
        for (double v : x) {
            if (!std::isfinite(v)) throw ModelError("loss sample contains a non-finite value");
            if (v < 0.0) throw ModelError("loss sample contains a negative value");
        }
        std::sort(x.begin(), x.end());
        const double N = static_cast<double>(x.size());
        // knots (F(x_j), x_j) of the empirical distribution, starting from (0, 0)
        std::vector<double> kp{0.0}, kx{0.0};
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (i + 1 < x.size() && x[i + 1] == x[i]) continue;
            const double F = static_cast<double>(i + 1) / N;
            if (x[i] == 0.0) {
                kp[0] = F;  // atom at zero
                continue;
            }
            kp.push_back(F);
            kx.push_back(x[i]);
        }
        m.m0 = kp[0];
        if (kx.size() < 2) throw ModelError("loss sample is identically zero");
        // a zero atom moves the first knot; keep (0,0) so F^{-1}(0) = 0
        if (kp[0] > 0.0) {
            kp.insert(kp.begin(), 0.0);
            kx.insert(kx.begin(), 0.0);
        }
        m.quantile_fn = [kp, kx](double p) {
            if (p <= kp.front()) return kx.front();
            if (p >= kp.back()) return kx.back();
            const auto it = std::upper_bound(kp.begin(), kp.end(), p);
            const std::size_t j = static_cast<std::size_t>(it - kp.begin());
            const double lam = (p - kp[j - 1]) / (kp[j] - kp[j - 1]);
            return kx[j - 1] + lam * (kx[j] - kx[j - 1]);
        };
        break;
    }
    }

    for (int i = 0; i <= grid.n; ++i) m.quantile[i] = m.quantile_fn(grid.p(i));
    finish_loss(m);
    return m;
}

LossModel example_loss(const Grid& grid) {
    LossSpec s;
    s.kind = LossSpec::Kind::AtomUniform;
    s.m0 = 0.5;
    s.scale = 1.0;
    return build_loss_model(s, grid);
}

bool DistortionMeasure::has_atoms() const {
    return std::any_of(atoms.begin(), atoms.end(), [](const Atom& a) { return a.mass > 0.0; });
}

double DistortionMeasure::total_mass() const {
    double s = 0.0;
    for (double d : density) s += d;
    s *= grid.dp();
    for (const Atom& a : atoms) s += a.mass;
    return s;
}

WeightingFunction make_weighting(const std::string& family, double a) {
    if (family == "identity") return [](double p) { return p; };
    if (!(a > 0.0) || !std::isfinite(a))
        throw ModelError("weighting parameter must be positive for family '" + family + "'");
    if (family == "power") return [a](double p) { return std::pow(p, a); };
    if (family == "dual_power") return [a](double p) { return 1.0 - std::pow(1.0 - p, a); };
    if (family == "tk") {
        return [a](double p) {
            if (p <= 0.0) return 0.0;
            if (p >= 1.0) return 1.0;
            const double pa = std::pow(p, a);
            return pa / std::pow(pa + std::pow(1.0 - p, a), 1.0 / a);
        };
    }
    if (family == "prelec") {
        return [a](double p) {
            if (p <= 0.0) return 0.0;
            if (p >= 1.0) return 1.0;
            return std::exp(-std::pow(-std::log(p), a));
        };
    }
    throw ModelError("unknown weighting family '" + family + "'");
}

DistortionMeasure measure_from_weighting(const WeightingFunction& w, const Grid& grid,
                                         const std::vector<double>& jumps) {
    if (std::abs(w(0.0)) > 1e-12 || std::abs(w(1.0) - 1.0) > 1e-12)
        throw ModelError("weighting function must satisfy w(0) = 0 and w(1) = 1");

    constexpr double tau = 1e-13;
    std::vector<double> size(jumps.size());
    DistortionMeasure mu;
    mu.grid = grid;
    for (std::size_t j = 0; j < jumps.size(); ++j) {
        const double s0 = jumps[j];
        if (!(s0 >= 0.0 && s0 < 1.0))
            throw ModelError("a jump of w at 1 would put an atom at 0");
        const double left = s0 > 0.0 ? w(s0 - tau) : 0.0;
        size[j] = w(s0 + tau) - left;
        if (size[j] < 0.0) throw ModelError("weighting function decreases across a jump");
        mu.atoms.push_back({1.0 - s0, size[j]});
    }

    // continuous part of w, left limit taken at the jump points themselves
    auto wc = [&](double s) {
        double v = w(s);
        for (std::size_t j = 0; j < jumps.size(); ++j) {
            if (s == jumps[j])
                v = jumps[j] > 0.0 ? w(jumps[j] - tau) : 0.0;
        }
        for (std::size_t j = 0; j < jumps.size(); ++j)
            if (jumps[j] < s) v -= size[j];
        return v;
    };

    mu.density.resize(grid.n);
    double prev = wc(1.0);
    for (int j = 0; j < grid.n; ++j) {
        const double next = wc(1.0 - grid.p(j + 1));
        double m = prev - next;
        if (m < -1e-13) throw ModelError("weighting function is not monotone");
        mu.density[j] = std::max(m, 0.0) / grid.dp();
        prev = next;
    }
    return mu;
}

DistortionMeasure measure_from_density(const std::function<double(double)>& density, const Grid& grid,
                                       const std::vector<Atom>& atoms) {
    double atom_mass = 0.0;
    for (const Atom& a : atoms) {
        if (!(a.location > 0.0 && a.location <= 1.0)) throw ModelError("atom location must lie in (0, 1]");
        if (a.mass < 0.0) throw ModelError("negative atom mass");
        atom_mass += a.mass;
    }
    if (atom_mass > 1.0 + 1e-12) throw ModelError("atom masses exceed 1");

    DistortionMeasure mu;
    mu.grid = grid;
    mu.atoms = atoms;
    mu.density.resize(grid.n);
    double z = 0.0;
    for (int j = 0; j < grid.n; ++j) {
        const double m = cell_integral(density, grid.p(j), grid.p(j + 1));
        if (!(m >= 0.0)) throw ModelError("density must be nonnegative");
        mu.density[j] = m;
        z += m;
    }
    const double target = 1.0 - atom_mass;
    if (target > 0.0 && !(z > 0.0)) throw ModelError("density integrates to zero");
    const double scale = target > 0.0 ? target / z : 0.0;
    for (double& d : mu.density) d *= scale / grid.dp();
    mu.density_fn = [density, scale](double t) { return scale * density(t); };
    return mu;
}

ExampleConstants example_constants() {
    using boost::math::quadrature::gauss_kronrod;
    const double e89 = std::exp(8.0 / 9.0);
    ExampleConstants k;
    k.i1 = gauss_kronrod<double, 31>::integrate(
        [e89](double t) { return e89 * (2.0 * t - 1.0 / 9.0); }, 0.5, 2.0 / 3.0, 10, 1e-15);
    k.i2 = gauss_kronrod<double, 31>::integrate(
        [](double t) { return (t + 5.0 / 9.0) * std::exp(-t + 14.0 / 9.0); }, 2.0 / 3.0, 1.0, 10, 1e-15);
    // The free region has to carry (13/36) e^{8/9} c for c = d to hold; see the
    // d-integrand exp(F^{-1}(t) - Psi'(t)) = e^{-8/9} on [0, 1/2].
    k.c = 1.0 / (13.0 / 36.0 * e89 + k.i1 + k.i2);
    k.c_printed = 1.0 / (13.0 / 36.0 / e89 + k.i1 + k.i2);
    k.free_mass = 13.0 / 36.0 * e89 * k.c;
    return k;
}

double example_density_at_p(double p) {
    static const ExampleConstants k = example_constants();
    if (p > 2.0 / 3.0) return k.c * (p + 5.0 / 9.0) * std::exp(-p + 14.0 / 9.0);
    if (p > 0.5) return k.c * std::exp(8.0 / 9.0) * (2.0 * p - 1.0 / 9.0);
    return 2.0 * k.free_mass;
}

DistortionMeasure build_example_measure(const Grid& grid) {
    if (grid.n % 2 != 0) throw ModelError("example measure needs an even n so that 1/2 is a node");
    const ExampleConstants k = example_constants();
    if (k.free_mass < 0.0) throw ModelError("internal: negative residual mass in example measure");

    // the density is smooth except at 1/2 (jump) and 2/3 (kink); split cells there
    auto piecewise = [](double a, double b) {
        double s = 0.0, lo = a;
        for (double cut : {0.5, 2.0 / 3.0}) {
            if (cut > lo && cut < b) {
                s += cell_integral(example_density_at_p, lo, cut);
                lo = cut;
            }
        }
        return s + cell_integral(example_density_at_p, lo, b);
    };

    DistortionMeasure mu;
    mu.grid = grid;
    mu.density.resize(grid.n);
    for (int j = 0; j < grid.n; ++j) {
        // t-cell [t_j, t_{j+1}] is p in [1 - t_{j+1}, 1 - t_j]
        mu.density[j] = piecewise(1.0 - grid.p(j + 1), 1.0 - grid.p(j)) / grid.dp();
    }
    mu.density_fn = [](double t) { return example_density_at_p(1.0 - t); };
    if (std::abs(mu.total_mass() - 1.0) > 1e-10)
        throw ModelError("internal: example measure has mass " + std::to_string(mu.total_mass()));
    return mu;
}

Utility Utility::exponential(double alpha) {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ModelError("exponential utility needs alpha > 0");
    return Utility(Kind::Exponential, alpha);
}

double Utility::value(double x) const {
    if (kind_ == Kind::Linear) return x;
    return -std::exp(clamp_exponent(-alpha_ * x)) / alpha_;
}

double Utility::deriv(double x) const {
    if (kind_ == Kind::Linear) return 1.0;
    return std::exp(clamp_exponent(-alpha_ * x));
}

double Utility::second(double x) const {
    if (kind_ == Kind::Linear) return 0.0;
    return -alpha_ * std::exp(clamp_exponent(-alpha_ * x));
}

bool Utility::clamps(double x) const {
    return kind_ == Kind::Exponential && std::abs(alpha_ * x) > kExpClamp;
}

void validate_bundle(const Bundle& b) {
    const int n = b.loss.grid.n;
    if (b.mu.grid.n != n || static_cast<int>(b.mu.density.size()) != n)
        throw ModelError("loss model and measure use different grids");
    if (static_cast<int>(b.loss.quantile.size()) != n + 1 || static_cast<int>(b.loss.h.size()) != n)
        throw ModelError("loss model arrays do not match its grid");
    const MarketParams& m = b.market;
    if (!(m.sigma > 0.0) || !std::isfinite(m.sigma)) throw ModelError("sigma must be positive");
    if (!(m.theta >= 0.0) || !std::isfinite(m.theta)) throw ModelError("theta must be nonnegative");
    if (!std::isfinite(m.gamma) || !std::isfinite(m.beta)) throw ModelError("gamma and beta must be finite");
    for (const Atom& a : b.mu.atoms)
        if (!(a.location > 0.0 && a.location <= 1.0) || a.mass < 0.0)
            throw ModelError("measure atoms must sit in (0, 1] with nonnegative mass");
    if (std::abs(b.mu.total_mass() - 1.0) > 1e-10)
        throw ModelError("measure has total mass " + std::to_string(b.mu.total_mass()) + ", expected 1");
}

Bundle example_bundle(int n) {
    const Grid grid(n);
    Bundle b;
    b.loss = example_loss(grid);
    b.mu = build_example_measure(grid);
    b.u = Utility::exponential(1.0);
    b.market = {13.0 / 12.0, 0.5, 0.0, 0.0};
    return b;
}

FeasibilityReport validate_feasible(const std::vector<double>& g, const LossModel& loss, double tol) {
    const int n = loss.grid.n;
    if (static_cast<int>(g.size()) != n + 1)
        throw ModelError("retention has " + std::to_string(g.size()) + " nodes, grid has " +
                         std::to_string(n + 1));
    FeasibilityReport r;
    r.lower.assign(n, 0.0);
    r.upper.assign(n, 0.0);
    r.origin = std::abs(g[0]);
    r.max_violation = r.origin;
    for (int k = 0; k < n; ++k) {
        const double d = g[k + 1] - g[k];
        r.lower[k] = std::max(0.0, -d);
        r.upper[k] = std::max(0.0, d - loss.cell_bound(k));
        r.max_violation = std::max({r.max_violation, r.lower[k], r.upper[k]});
    }
    r.ok = r.max_violation <= tol;
    return r;
}

}  // namespace mhf
