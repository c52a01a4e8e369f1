#include <doctest.h>

#include <cmath>
#include <random>

#include "instances.hpp"
#include "mhf/choquet.hpp"
#include "mhf/verify.hpp"

using namespace mhf;

namespace {

DistortionMeasure lebesgue(const Grid& g) { return measure_from_weighting(make_weighting("identity", 1.0), g); }

std::vector<double> nodal(const Grid& g, double (*f)(double)) {
    std::vector<double> v(g.nodes());
    for (int i = 0; i <= g.n; ++i) v[i] = f(g.p(i));
    return v;
}

Bundle generated(int n) {
    const Grid g(n);
    return testing::make_bundle(testing::beta_loss(g, 2.0, 3.0, 2.0),
                                measure_from_weighting(make_weighting("tk", 0.69), g), Utility::exponential(0.8),
                                {0.3, 0.4, 0.1, 0.5});
}

}  // namespace

TEST_CASE("choquet expectation closed forms") {
    const Grid g(1000);
    const DistortionMeasure leb = lebesgue(g);
    const DistortionMeasure sq = measure_from_weighting([](double p) { return p * p; }, g);
    const DistortionMeasure ex = build_example_measure(g);

    const std::vector<double> k(g.nodes(), 3.25);
    CHECK(choquet_expectation(k, leb) == doctest::Approx(3.25).epsilon(1e-14));
    CHECK(choquet_expectation(k, ex) == doctest::Approx(3.25).epsilon(1e-12));

    const auto id = nodal(g, [](double p) { return p; });
    CHECK(std::abs(choquet_expectation(id, leb) - 0.5) < 1e-12);
    CHECK(std::abs(choquet_expectation(id, sq) - 1.0 / 3.0) < 1e-6);

    // Lebesgue reduces to the trapezoid mean
    const auto sq_q = nodal(g, [](double p) { return std::exp(p) * p; });
    CHECK(std::abs(choquet_expectation(sq_q, leb) - integrate(sq_q, g)) < 1e-12);

    auto dec = id;
    dec[10] = 5.0;
    CHECK_THROWS_AS((void)choquet_expectation(dec, leb), ModelError);
}

TEST_CASE("atoms enter the choquet expectation by interpolation") {
    const Grid g(100);
    const DistortionMeasure mu = measure_from_density([](double) { return 1.0; }, g, {{0.255, 0.5}});
    std::vector<double> y(g.nodes());
    for (int i = 0; i <= g.n; ++i) y[i] = g.p(i) * g.p(i);
    // continuous half carries int t^2 / 2, the atom sees linear interpolation at 0.255
    const double interp = 0.5 * (0.25 * 0.25 + 0.26 * 0.26);
    CHECK(std::abs(choquet_expectation(y, mu) - (0.5 / 3.0 + 0.5 * interp)) < 1e-4);
}

TEST_CASE("ol on special arguments") {
    const Bundle b = generated(400);
    const auto& L = b.loss;
    const double k = b.market.beta - b.market.gamma - b.market.theta * L.mean - b.market.sigma * L.variance;
    const std::vector<double> zero(b.n() + 1, 0.0);
    CHECK(std::abs(ol(zero, b) - k) < 1e-12);
    const std::vector<double> c(b.n() + 1, 0.7);
    CHECK(std::abs(ol(c, b) - (k + 0.7 * b.market.theta)) < 1e-12);
    CHECK(std::abs(ol(L.quantile, b) - (b.market.beta - b.market.gamma)) < 1e-12);
}

TEST_CASE("ol shift identity and concavity") {
    const Bundle b = generated(300);
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> N(0.0, 1.0);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    auto random_f = [&] {
        std::vector<double> f(b.n() + 1);
        const double a = N(rng), s = N(rng), c = N(rng);
        for (int i = 0; i <= b.n(); ++i) {
            const double p = b.grid().p(i);
            f[i] = a + s * std::sin(3.0 * p + c) + 0.3 * N(rng);
        }
        return f;
    };
    for (int t = 0; t < 100; ++t) {
        auto f = random_f();
        const double c = 5.0 * N(rng);
        auto fc = f;
        for (double& v : fc) v += c;
        CHECK(std::abs(ol(fc, b) - ol(f, b) - c * b.market.theta) < 1e-9);

        const auto f1 = random_f(), f2 = random_f();
        const double e = U(rng);
        std::vector<double> mix(f1.size()), shifted(f1.size());
        for (std::size_t i = 0; i < f1.size(); ++i) {
            mix[i] = e * f1[i] + (1 - e) * f2[i];
            shifted[i] = f1[i] + c;
        }
        CHECK(e * ol(f1, b) + (1 - e) * ol(f2, b) <= ol(mix, b) + 1e-12);
        // equality exactly when the difference is constant
        for (std::size_t i = 0; i < f1.size(); ++i) mix[i] = e * f1[i] + (1 - e) * shifted[i];
        CHECK(std::abs(e * ol(f1, b) + (1 - e) * ol(shifted, b) - ol(mix, b)) < 1e-9);
        for (std::size_t i = 0; i < f1.size(); ++i) mix[i] = e * f1[i] + (1 - e) * f2[i];
        if (e > 0.05 && e < 0.95) CHECK(ol(mix, b) - e * ol(f1, b) - (1 - e) * ol(f2, b) > 1e-9);
    }
}

TEST_CASE("objective on special arguments") {
    const Bundle b = generated(400);
    const std::vector<double> zero(b.n() + 1, 0.0);
    CHECK(rdu_objective(zero, b) == doctest::Approx(b.u.value(ol(zero, b))).epsilon(1e-14));

    const Grid g(500);
    const Bundle lin = testing::make_bundle(testing::uniform_loss(g), lebesgue(g), Utility::linear(),
                                            {0.2, 0.5, 0.0, 0.0});
    std::mt19937_64 rng(5);
    for (int t = 0; t < 10; ++t) {
        const auto r = testing::random_increments(lin.loss, rng);
        CHECK(std::abs(rdu_objective(r, lin) - (ol(r, lin) - integrate(r, g))) < 1e-9);
    }
}

TEST_CASE("objective is concave over feasible retentions") {
    const Bundle b = generated(300);
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        const auto g1 = random_feasible(b.loss, rng());
        const auto g2 = random_feasible(b.loss, rng());
        const double e = U(rng);
        std::vector<double> mix(g1.size());
        for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = e * g1[i] + (1 - e) * g2[i];
        CHECK(rdu_objective(mix, b) >= e * rdu_objective(g1, b) + (1 - e) * rdu_objective(g2, b) - 1e-10);
    }
}

TEST_CASE("gradient with linear utility and Lebesgue measure") {
    const Grid g(400);
    const Bundle b = testing::make_bundle(testing::uniform_loss(g), lebesgue(g), Utility::linear(),
                                          {0.2, 0.5, 0.0, 0.0});
    std::mt19937_64 rng(9);
    const auto r = testing::random_increments(b.loss, rng);
    const auto grad = rdu_gradient(r, b);
    const auto pp = Discretization(b).psi_prime(r);
    for (int i = 1; i < g.n; ++i) CHECK(std::abs(grad[i] - g.dp() * (pp[i] - 1.0)) < 1e-9);
}

TEST_CASE("gradient matches central differences") {
    for (const Bundle& b : {generated(160), example_bundle(180)}) {
        for (std::uint64_t s = 0; s < 10; ++s) {
            const auto r = random_feasible(b.loss, 100 + s);
            const auto grad = rdu_gradient(r, b);
            const double step = 1e-5 * b.loss.ess_sup;
            double worst = 0.0;
            auto x = r;
            for (int i = 0; i <= b.n(); ++i) {
                x[i] = r[i] + step;
                const double jp = rdu_objective(x, b);
                x[i] = r[i] - step;
                const double jm = rdu_objective(x, b);
                x[i] = r[i];
                worst = std::max(worst, std::abs((jp - jm) / (2 * step) - grad[i]));
            }
            CHECK(worst <= 1e-6);
        }
    }
}

TEST_CASE("closed-form example optimum beats random feasible retentions") {
    const Bundle b = example_bundle(1200);
    std::vector<double> opt(b.n() + 1);
    for (int i = 0; i <= b.n(); ++i) opt[i] = example_g(b.grid().p(i));
    REQUIRE(validate_feasible(opt, b.loss).ok);
    const double j = rdu_objective(opt, b);
    const auto grad = rdu_gradient(opt, b);
    for (std::uint64_t s = 0; s < 50; ++s) {
        const auto r = random_feasible(b.loss, 500 + s);
        CHECK(j >= rdu_objective(r, b));
        double dir = 0.0;
        for (int i = 0; i <= b.n(); ++i) dir += grad[i] * (r[i] - opt[i]);
        CHECK(dir <= 1e-6);
    }
}
