#pragma once

#include <functional>
#include <vector>

#include "mhf/model.hpp"

namespace mhf {

struct DirectConfig {
    enum class Method { ProjectedNewton, ProjectedGradient };

    Method method = Method::ProjectedNewton;
    int max_iters = 20000;
    // Converged when the scaled projected gradient is below tol_grad. The solver
    // keeps going until `target` or a stall, whichever comes first.
    double tol_grad = 1e-8;
    double target = 1e-14;
    double tol_obj = 1e-12;  // relative objective stall tolerance
    int stall_iters = 25;
    // Optional feasible starting retention (nodal). Default: half retention.
    std::vector<double> start;
    // Called with every accepted iterate, the start included.
    std::function<void(int, const std::vector<double>&)> on_iterate;
};

struct DirectResult {
    std::vector<double> g;
    double objective = 0.0;
    double stationarity = 0.0;  // max_k |projected dJ/d delta_k| / A
    int iterations = 0;
    bool converged = false;
    bool clamped = false;  // utility exponent clamp was hit at the returned point
};

[[nodiscard]] DirectResult solve_direct(const Bundle& b, const DirectConfig& cfg = {});

// Per-cell value of Psi - Lambda-hat as seen by the discrete problem:
// D_k = -(dJ/d delta_k) / A.
[[nodiscard]] std::vector<double> cell_gap(const std::vector<double>& g, const Bundle& b);

struct KktReport {
    double max_violation = 0.0;  // slope units (currency per unit probability)
    int worst_cell = -1;
    std::vector<double> gap;        // D_k
    std::vector<double> violation;  // per cell
};

// Three-case complementarity check. Cells with |D_k| <= tol are unconstrained.
[[nodiscard]] KktReport kkt_residual(const std::vector<double>& g, const Bundle& b, double tol = 1e-3);

}  // namespace mhf
