#include "mhf/contract.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "mhf/choquet.hpp"
#include "mhf/direct_solver.hpp"
#include "mhf/ode_solver.hpp"
#include "mhf/parallel.hpp"

namespace mhf {

double Contract::retention(double loss) const {
    if (loss <= x.front()) return R.front();
    if (loss >= x.back()) return R.back();
    const auto it = std::upper_bound(x.begin(), x.end(), loss);
    const std::size_t j = static_cast<std::size_t>(it - x.begin());
    const double lam = (loss - x[j - 1]) / (x[j] - x[j - 1]);
    return R[j - 1] + lam * (R[j] - R[j - 1]);
}

Contract contract_from_quantile(const std::vector<double>& g, const Bundle& b) {
    const LossModel& loss = b.loss;
    const int n = loss.grid.n;
    if (static_cast<int>(g.size()) != n + 1) throw ModelError("retention does not match grid");

    Contract c;
    c.g = g;
    // R(x) = G(F_X(x)). Flat stretches of the quantile collapse to one knot;
    // the last node of a stretch is F_X(x) for right-continuous F_X.
    for (int i = 0; i <= n; ++i) {
        if (i < n && loss.quantile[i + 1] == loss.quantile[i]) continue;
        c.x.push_back(loss.quantile[i]);
        c.R.push_back(g[i]);
        c.I.push_back(loss.quantile[i] - g[i]);
    }

    const std::vector<double> w = trapezoid_weights(loss.grid);
    double m = 0.0, m2 = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double ind = loss.quantile[i] - g[i];
        m += w[i] * ind;
        m2 += w[i] * ind * ind;
    }
    c.mean_indemnity = m;
    c.var_indemnity = m2 - m * m;
    c.premium = b.market.gamma + b.market.theta * m + b.market.sigma * c.var_indemnity;
    return c;
}

Valuation evaluate_contract(const Contract& c, const Bundle& b) {
    const int n = b.n();
    Valuation v;
    v.premium = c.premium;
    v.u_insurer = c.premium - b.market.theta * c.mean_indemnity - b.market.sigma * c.var_indemnity;
    // quantile of u(beta - pi - R(X)) at level t is u(beta - pi - G(1 - t))
    std::vector<double> y(n + 1);
    for (int j = 0; j <= n; ++j) y[j] = b.u.value(b.market.beta - c.premium - c.g[n - j]);
    v.u_insured = choquet_expectation(y, b.mu);
    return v;
}

Benchmark Benchmark::parse(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw ModelError("benchmark must look like deductible:<d> or quota:<a>");
    const std::string kind = text.substr(0, colon), val = text.substr(colon + 1);
    char* end = nullptr;
    const double level = std::strtod(val.c_str(), &end);
    if (val.empty() || *end != '\0' || !std::isfinite(level)) throw ModelError("bad benchmark level '" + val + "'");
    Benchmark bm;
    if (kind == "deductible") bm.kind = Kind::Deductible;
    else if (kind == "quota") bm.kind = Kind::Quota;
    else throw ModelError("unknown benchmark kind '" + kind + "'");
    bm.level = level;
    return bm;
}

std::string Benchmark::label() const {
    return (kind == Kind::Deductible ? "deductible:" : "quota:") + std::to_string(level);
}

std::vector<double> benchmark_retention(const Benchmark& bm, const LossModel& loss) {
    std::vector<double> g(loss.quantile.size());
    if (bm.kind == Benchmark::Kind::Deductible) {
        if (!(bm.level >= 0.0)) throw ModelError("deductible must be nonnegative");
        std::transform(loss.quantile.begin(), loss.quantile.end(), g.begin(),
                       [d = bm.level](double q) { return std::min(q, d); });
    } else {
        if (!(bm.level >= 0.0 && bm.level <= 1.0)) throw ModelError("quota share must lie in [0, 1]");
        std::transform(loss.quantile.begin(), loss.quantile.end(), g.begin(),
                       [a = bm.level](double q) { return (1.0 - a) * q; });
    }
    return g;
}

Valuation evaluate_benchmark(const Benchmark& bm, const Bundle& b) {
    return evaluate_contract(contract_from_quantile(benchmark_retention(bm, b.loss), b), b);
}

std::vector<FrontierEntry> pareto_frontier(const std::vector<double>& gammas, const Bundle& b, SolveMethod method,
                                           int threads) {
    std::vector<FrontierEntry> out(gammas.size());
    parallel_for(static_cast<int>(gammas.size()), threads, [&](int i) {
        Bundle bi = b;
        bi.market.gamma = gammas[i];
        FrontierEntry& e = out[i];
        e.gamma = gammas[i];
        const DirectResult dr = solve_direct(bi);
        e.g = dr.g;
        e.converged = dr.converged;
        if (method != SolveMethod::Direct) {
            const OdeSolution os = solve_ode(bi, &dr.g);
            if (method == SolveMethod::Ode) e.g = os.gamma_fn;
            e.converged = e.converged && os.converged;
        }
        const Contract c = contract_from_quantile(e.g, bi);
        const Valuation v = evaluate_contract(c, bi);
        e.premium = v.premium;
        e.u_insured = v.u_insured;
    });
    return out;
}

}  // namespace mhf
