#include <doctest.h>

#include <cmath>

#include "instances.hpp"
#include "mhf/contract.hpp"
#include "mhf/direct_solver.hpp"
#include "mhf/verify.hpp"

using namespace mhf;

namespace {

void check_incentive_compatible(const Contract& c) {
    for (std::size_t j = 0; j < c.x.size(); ++j) CHECK(c.I[j] + c.R[j] == c.x[j]);
    for (std::size_t j = 1; j < c.x.size(); ++j) {
        const double dx = c.x[j] - c.x[j - 1];
        if (dx <= 0.0) continue;
        const double s = (c.R[j] - c.R[j - 1]) / dx;
        CHECK(s >= -1e-9);
        CHECK(s <= 1.0 + 1e-9);
    }
}

}  // namespace

TEST_CASE("optimal example contract") {
    const Bundle b = example_bundle(4000);
    const DirectResult r = solve_direct(b);
    REQUIRE(r.converged);
    const Contract c = contract_from_quantile(r.g, b);
    check_incentive_compatible(c);
    double err = 0.0;
    for (int j = 0; j <= 1000; ++j) {
        const double x = j / 1000.0;
        err = std::max(err, std::abs(c.retention(x) - example_r(x)));
    }
    CHECK(err <= 2e-3);
    const Valuation v = evaluate_contract(c, b);
    CHECK(std::abs(v.u_insurer - b.market.gamma) <= 1e-8);
}

TEST_CASE("full coverage and no coverage") {
    const Grid g(800);
    const Bundle b = testing::make_bundle(testing::beta_loss(g, 2.0, 3.0, 2.0),
                                          measure_from_weighting(make_weighting("tk", 0.7), g),
                                          Utility::exponential(1.0), {0.3, 0.4, 0.05, 1.0});
    const auto& L = b.loss;

    const Contract full = contract_from_quantile(std::vector<double>(g.nodes(), 0.0), b);
    check_incentive_compatible(full);
    for (std::size_t j = 0; j < full.x.size(); ++j) CHECK(full.I[j] == full.x[j]);
    CHECK(full.premium ==
          doctest::Approx(b.market.gamma + b.market.theta * L.mean + b.market.sigma * L.variance).epsilon(1e-12));

    const Contract none = contract_from_quantile(L.quantile, b);
    for (double i : none.I) CHECK(i == 0.0);
    CHECK(none.premium == doctest::Approx(b.market.gamma).epsilon(1e-14));

    const Valuation vq = evaluate_benchmark(Benchmark::parse("quota:1"), b);
    const Valuation vf = evaluate_contract(full, b);
    CHECK(vq.premium == doctest::Approx(vf.premium).epsilon(1e-14));
    CHECK(vq.u_insured == doctest::Approx(vf.u_insured).epsilon(1e-14));
    CHECK(vq.u_insurer == doctest::Approx(b.market.gamma).epsilon(1e-12));
}

TEST_CASE("benchmarks re-premiumed to the same gamma never beat the optimum") {
    std::vector<Bundle> bundles{example_bundle(1200)};
    for (auto& inst : testing::cross_solver_instances(600)) bundles.push_back(inst.bundle);
    for (const Bundle& b : bundles) {
        const DirectResult r = solve_direct(b);
        REQUIRE(r.converged);
        const Valuation opt = evaluate_contract(contract_from_quantile(r.g, b), b);
        for (int i = 0; i <= 10; ++i) {
            const double x = b.loss.ess_sup * i / 10.0;
            for (const auto& bm : {Benchmark{Benchmark::Kind::Deductible, x}, Benchmark{Benchmark::Kind::Quota, i / 10.0}}) {
                const Valuation v = evaluate_benchmark(bm, b);
                CHECK(std::abs(v.u_insurer - b.market.gamma) <= 1e-8);
                CHECK_MESSAGE(opt.u_insured >= v.u_insured - 1e-6, bm.label());
            }
        }
    }
}

TEST_CASE("benchmark parsing and validation") {
    const Benchmark d = Benchmark::parse("deductible:0.25");
    CHECK(d.kind == Benchmark::Kind::Deductible);
    CHECK(d.level == 0.25);
    CHECK(Benchmark::parse("quota:0.5").kind == Benchmark::Kind::Quota);
    for (const char* bad : {"deductible", "quota:", "quota:abc", "stoploss:1", "deductible:1x"})
        CHECK_THROWS_AS((void)Benchmark::parse(bad), ModelError);
    const LossModel L = example_loss(Grid(100));
    CHECK_THROWS_AS((void)benchmark_retention(Benchmark{Benchmark::Kind::Deductible, -0.1}, L), ModelError);
    CHECK_THROWS_AS((void)benchmark_retention(Benchmark{Benchmark::Kind::Quota, 1.2}, L), ModelError);
}

TEST_CASE("CARA frontier is a translation in gamma") {
    const Bundle b = example_bundle(1200);
    const std::vector<double> gammas{0.0, 0.1, 0.2};
    const auto f = pareto_frontier(gammas, b, SolveMethod::Direct, 3);
    REQUIRE(f.size() == 3);
    for (std::size_t i = 1; i < f.size(); ++i) {
        CHECK(f[i].converged);
        CHECK(testing::sup_diff(f[i].g, f[0].g) <= 1e-6);
        CHECK(f[i].premium - f[0].premium == doctest::Approx(gammas[i] - gammas[0]).epsilon(1e-9));
        CHECK(f[i].u_insured < f[i - 1].u_insured);
    }
    const DirectResult base = solve_direct(b);
    const auto single = pareto_frontier({0.0}, b, SolveMethod::Direct);
    CHECK(single[0].g == base.g);
    CHECK(single[0].u_insured == evaluate_contract(contract_from_quantile(base.g, b), b).u_insured);
}

TEST_CASE("frontier with linear utility decreases and parallel runs match serial") {
    const auto inst = testing::cross_solver_instances(500)[3];
    std::vector<double> gammas;
    for (int i = 0; i < 6; ++i) gammas.push_back(-0.1 + 0.05 * i);
    const auto serial = pareto_frontier(gammas, inst.bundle, SolveMethod::Both, 1);
    const auto par = pareto_frontier(gammas, inst.bundle, SolveMethod::Both, 4);
    for (std::size_t i = 0; i < gammas.size(); ++i) {
        CHECK(serial[i].converged);
        CHECK(serial[i].g == par[i].g);
        CHECK(serial[i].u_insured == par[i].u_insured);
        if (i > 0) CHECK(serial[i].u_insured < serial[i - 1].u_insured);
    }
}
