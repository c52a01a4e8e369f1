#pragma once

#include <string>
#include <vector>

#include "mhf/model.hpp"

namespace mhf {

struct Contract {
    // knots in loss space; R and I are linear in between
    std::vector<double> x, R, I;
    std::vector<double> g;  // the quantile retention it came from
    double mean_indemnity = 0.0;
    double var_indemnity = 0.0;
    double premium = 0.0;

    [[nodiscard]] double retention(double loss) const;
    [[nodiscard]] double indemnity(double loss) const { return loss - retention(loss); }
};

[[nodiscard]] Contract contract_from_quantile(const std::vector<double>& g, const Bundle& b);

struct Valuation {
    double premium = 0.0;
    double u_insurer = 0.0;
    double u_insured = 0.0;
};

[[nodiscard]] Valuation evaluate_contract(const Contract& c, const Bundle& b);

struct Benchmark {
    enum class Kind { Deductible, Quota };
    Kind kind = Kind::Deductible;
    double level = 0.0;  // deductible d, or ceded share a

    // "deductible:<d>" or "quota:<a>"
    [[nodiscard]] static Benchmark parse(const std::string& text);
    [[nodiscard]] std::string label() const;
};

// Retention quantile of a benchmark: min(F^{-1}, d) or (1 - a) F^{-1}.
[[nodiscard]] std::vector<double> benchmark_retention(const Benchmark& bm, const LossModel& loss);

[[nodiscard]] Valuation evaluate_benchmark(const Benchmark& bm, const Bundle& b);

enum class SolveMethod { Direct, Ode, Both };

struct FrontierEntry {
    double gamma = 0.0;
    double premium = 0.0;
    double u_insured = 0.0;
    bool converged = false;
    std::vector<double> g;
};

[[nodiscard]] std::vector<FrontierEntry> pareto_frontier(const std::vector<double>& gammas, const Bundle& b,
                                                         SolveMethod method, int threads = 1);

}  // namespace mhf
