#pragma once

#include <array>
#include <vector>

#include "mhf/model.hpp"

namespace mhf {

struct OdeConfig {
    enum class Scheme {
        Matched,  // cell recursion using the same quadrature as the direct problem
        RK4       // classical RK4 in p (Simpson, since Lambda' does not depend on Lambda)
    };
    Scheme scheme = Scheme::Matched;
    double band = -1.0;  // eps_Lambda; negative means 1e-6 (1 + |1 - theta|)
    double tol = 1e-7;   // converged when every scaled residual is below this
    double target = 1e-13;
    int max_iters = 60;
    int threads = 1;  // finite-difference probes run concurrently when > 1
    bool cold_fallback = true;  // retry from the default constants if a warm start stalls
};

struct InnerTrajectory {
    std::vector<double> lambda;  // nodal Lambda, lambda[n] = Lambda(1)
    std::vector<double> gamma;   // nodal Gamma
    // (Lambda(1), ol{Gamma} - d, rho - theta - 2 sigma int Gamma + 2 sigma E[X])
    std::array<double, 3> residual{};
    int band_steps = 0;
    int clamp_events = 0;  // singular steps whose root fell outside [0, h]
};

// band <= 0 selects the default eps_Lambda.
[[nodiscard]] InnerTrajectory integrate_inner(double c, double d, double rho, const Bundle& b, double band,
                                              OdeConfig::Scheme scheme = OdeConfig::Scheme::Matched);

struct OdeConstants {
    double c = 0.0;
    double d = 0.0;
    double rho = 0.0;
};

// Constants implied by a candidate optimum G.
[[nodiscard]] OdeConstants warm_constants(const std::vector<double>& g, const Bundle& b);

// Psi(p) = 2 sigma int_0^p (F^{-1} - Gamma) + rho p + 1 - theta
[[nodiscard]] std::vector<double> reconstruct_psi(const std::vector<double>& gamma, double rho, const Bundle& b);

struct OdeSolution {
    std::vector<double> lambda;
    std::vector<double> gamma_fn;
    double c = 0.0;
    double d = 0.0;
    double rho = 0.0;
    std::vector<double> psi;
    std::array<double, 3> residual{};
    double residual_norm = 0.0;  // max of the scaled residuals
    int iterations = 0;
    bool converged = false;
    bool warm_started = false;
    int clamp_events = 0;
};

// Throws ModelError if mu has atoms.
[[nodiscard]] OdeSolution solve_ode(const Bundle& b, const std::vector<double>* warm_start = nullptr,
                                    const OdeConfig& cfg = {});

}  // namespace mhf
