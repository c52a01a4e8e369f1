#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mhf/model.hpp"

namespace mhf {

// Psi(p) = (2 sigma int G + theta - 2 sigma E)(p - 1) + 2 sigma int_p^1 (G - F^{-1}) + 1
[[nodiscard]] std::vector<double> build_psi(const std::vector<double>& g, const Bundle& b);

// Normalised reverse cumulative mu-integral of u'(ol{G} - G(1-t)) over (1-p, 1].
[[nodiscard]] std::vector<double> build_lambda_hat(const std::vector<double>& g, const Bundle& b);

// Nondecreasing, starts at 0, ends at 1.
[[nodiscard]] bool is_distribution_function(const std::vector<double>& f, double tol = 1e-12);

struct OideReport {
    double max_residual = 0.0;  // over non-excluded nodes
    int worst_node = -1;
    std::vector<double> residual;  // every node
    std::vector<char> excluded;    // switching nodes and their neighbours
    std::vector<double> psi_hat;
};

// |min{max{-Psi'', Psi - Psi_hat[Psi']}, 2 sigma h - Psi''}| with Psi'' from
// second differences and Psi_hat built from Gamma = F^{-1} + (Psi'(0) - Psi'(p)) / (2 sigma).
[[nodiscard]] OideReport oide_residual(const std::vector<double>& psi, const Bundle& b);

struct VerifyTolerances {
    double feasibility = 1e-9;
    double complementarity = 2e-3;
    double kkt_band = 1e-3;
    double oide = 1e-4;
    double boundary = 1e-8;
};

struct OptimalityReport {
    std::vector<double> psi;
    std::vector<double> lambda_hat;
    std::vector<double> node_residual;
    double feasibility_violation = 0.0;
    double max_complementarity_violation = 0.0;
    int worst_cell = -1;
    double oide_residual = 0.0;
    int worst_node = -1;
    std::array<double, 2> boundary_errors{};  // |Psi(0) - (1 - theta)|, |Psi(1) - 1|
    bool lambda_hat_ok = false;
    bool pass = false;
};

[[nodiscard]] OptimalityReport verify_solution(const std::vector<double>& g, const Bundle& b,
                                               const VerifyTolerances& tol = {});

// max over sampled feasible G' of <grad J(g), G' - g> / A. Nonpositive (up to
// round-off) exactly when g solves the discrete problem.
[[nodiscard]] double variational_gap(const std::vector<double>& g, const Bundle& b, int samples,
                                     std::uint64_t seed);

// Random feasible retention: a mixture of independent slopes, deductibles,
// quota shares and slope blocks.
[[nodiscard]] std::vector<double> random_feasible(const LossModel& loss, std::uint64_t seed);

// Closed forms of the worked example.
[[nodiscard]] double example_psi(double p);
[[nodiscard]] double example_g(double p);
[[nodiscard]] double example_r(double x);

struct ExampleSolverErrors {
    double g = 0.0;
    double r = 0.0;
    double psi = 0.0;
    double psi0 = 0.0;
    double psi1 = 0.0;
    double seconds = 0.0;
    bool converged = false;
};

struct ExampleReport {
    int n = 0;
    double tolerance = 0.0;
    ExampleSolverErrors direct, ode;
    bool ode_warm = false;
    double c = 0.0;
    double d = 0.0;
    double c_printed = 0.0;  // with the e^{-8/9} free-region term
    double d_printed = 0.0;  // the matching d for that measure
    double seconds = 0.0;
    std::vector<double> g_direct;
    std::vector<double> g_ode;
    bool pass = false;
};

// Needs an even n >= 600 (1/2 must be a node; 2/3 need not be).
[[nodiscard]] ExampleReport run_example_41(int n, int threads = 1);

}  // namespace mhf
