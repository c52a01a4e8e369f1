#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mhf {

// Thrown for anything the caller handed us that violates a model assumption.
class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Grid {
    int n = 0;

    explicit Grid(int cells);

    [[nodiscard]] double dp() const { return 1.0 / n; }
    [[nodiscard]] double p(int i) const { return static_cast<double>(i) / n; }
    [[nodiscard]] int nodes() const { return n + 1; }
};

// Composite trapezoid weights on the nodes: dp inside, dp/2 at both ends.
[[nodiscard]] std::vector<double> trapezoid_weights(const Grid& grid);

// Trapezoid integral of a nodal array.
[[nodiscard]] double integrate(const std::vector<double>& f, const Grid& grid);

struct LossModel {
    Grid grid{8};
    std::vector<double> quantile;  // F_X^{-1}(p_i), n+1 values
    std::vector<double> h;         // per-cell slope of the quantile, n values
    double mean = 0.0;
    double variance = 0.0;
    double m0 = 0.0;       // mass at zero
    double ess_sup = 0.0;
    // analytic quantile, when the model came from a formula (used by the RK4 integrator)
    std::function<double(double)> quantile_fn;

    [[nodiscard]] double cell_bound(int k) const { return quantile[k + 1] - quantile[k]; }
};

struct LossSpec {
    enum class Kind { AtomUniform, Beta, Sample };
    Kind kind = Kind::AtomUniform;
    double m0 = 0.0;     // AtomUniform: probability of a zero loss
    double scale = 1.0;  // essential supremum for the parametric kinds
    double a = 1.0;      // Beta shape parameters
    double b = 1.0;
    std::vector<double> sample;  // Sample: nonnegative observations
};

[[nodiscard]] LossModel build_loss_model(const LossSpec& spec, const Grid& grid);

// F_X(x) = (x+1)/2 on [0,1].
[[nodiscard]] LossModel example_loss(const Grid& grid);

struct Atom {
    double location = 0.0;  // in (0,1]
    double mass = 0.0;
};

// The distortion measure mu on [0,1], stored as per-cell densities on the same
// grid as everything else (cell j is [t_j, t_{j+1}]) plus point masses.
struct DistortionMeasure {
    Grid grid{8};
    std::vector<double> density;
    std::vector<Atom> atoms;
    std::function<double(double)> density_fn;  // optional, for RK4

    [[nodiscard]] double cell_mass(int j) const { return density[j] * grid.dp(); }
    [[nodiscard]] bool has_atoms() const;
    [[nodiscard]] double total_mass() const;
};

using WeightingFunction = std::function<double(double)>;

// Named probability weighting families:
//   identity, power (p^a), dual_power (1-(1-p)^a), tk (Tversky-Kahneman, a),
//   prelec (exp(-(-ln p)^a)).
[[nodiscard]] WeightingFunction make_weighting(const std::string& family, double a);

// dmu = w'(1-t) dt. Jump points of w (in w's own argument) become atoms.
[[nodiscard]] DistortionMeasure measure_from_weighting(const WeightingFunction& w, const Grid& grid,
                                                       const std::vector<double>& jumps = {});

// Cell masses by Gauss quadrature of an unnormalised density on [0,1]; the
// continuous part is scaled to carry 1 - sum(atom masses).
[[nodiscard]] DistortionMeasure measure_from_density(const std::function<double(double)>& density,
                                                     const Grid& grid,
                                                     const std::vector<Atom>& atoms = {});

struct ExampleConstants {
    double i1 = 0.0;         // integral over [1/2, 2/3]
    double i2 = 0.0;         // integral over [2/3, 1]
    double c = 0.0;          // normalisation actually used
    double c_printed = 0.0;  // normalisation with the e^{-8/9} free-region term
    double free_mass = 0.0;  // mu((1/2, 1]) in t, i.e. reflected p in (0, 1/2)
};

[[nodiscard]] ExampleConstants example_constants();

// Density of the worked example as a function of p = 1 - t (free region filled uniformly).
[[nodiscard]] double example_density_at_p(double p);

[[nodiscard]] DistortionMeasure build_example_measure(const Grid& grid);

class Utility {
public:
    enum class Kind { Linear, Exponential };

    static Utility linear() { return Utility(Kind::Linear, 0.0); }
    static Utility exponential(double alpha);

    [[nodiscard]] Kind kind() const { return kind_; }
    [[nodiscard]] double alpha() const { return alpha_; }

    [[nodiscard]] double value(double x) const;
    [[nodiscard]] double deriv(double x) const;
    [[nodiscard]] double second(double x) const;
    // true when evaluating at x hits the exponent clamp
    [[nodiscard]] bool clamps(double x) const;

private:
    Utility(Kind k, double a) : kind_(k), alpha_(a) {}
    Kind kind_;
    double alpha_;
};

struct MarketParams {
    double theta = 0.0;
    double sigma = 0.5;
    double gamma = 0.0;
    double beta = 0.0;
};

struct Bundle {
    LossModel loss;
    DistortionMeasure mu;
    Utility u = Utility::linear();
    MarketParams market;

    [[nodiscard]] const Grid& grid() const { return loss.grid; }
    [[nodiscard]] int n() const { return loss.grid.n; }
};

// Throws ModelError when the pieces do not fit together.
void validate_bundle(const Bundle& b);

[[nodiscard]] Bundle example_bundle(int n);

struct FeasibilityReport {
    std::vector<double> lower;  // per cell, amount by which the increment is negative
    std::vector<double> upper;  // per cell, amount above h*dp
    double origin = 0.0;        // |g_0|
    double max_violation = 0.0;
    bool ok = true;
};

[[nodiscard]] FeasibilityReport validate_feasible(const std::vector<double>& g, const LossModel& loss,
                                                  double tol = 1e-9);

}  // namespace mhf
