#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mhf/choquet.hpp"
#include "mhf/config.hpp"
#include "mhf/contract.hpp"
#include "mhf/csv.hpp"
#include "mhf/direct_solver.hpp"
#include "mhf/ode_solver.hpp"
#include "mhf/parallel.hpp"
#include "mhf/verify.hpp"

namespace {

using nlohmann::json;
using Vec = std::vector<double>;

constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;
constexpr int kExitVerify = 4;

struct Options {
    std::string config;
    int n = 0;
    std::string method = "direct";
    std::string out = ".";
    std::uint64_t seed = 0;
    double gamma_min = 0.0, gamma_max = 0.0;
    int gamma_steps = 0;
    std::string contract;
    std::string solution;
    bool verbose = false;
    bool out_given = false;
};

// exit with a code from anywhere in a subcommand
struct Exit {
    int code;
};

[[noreturn]] void fail(int code, const std::string& msg) {
    std::cerr << "mhf: " << msg << '\n';
    throw Exit{code};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::filesystem::path out_dir(const Options& o) {
    std::filesystem::path dir(o.out);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(kExitConfig, "cannot create output directory " + dir.string());
    return dir;
}

void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream f(path, std::ios::binary);
    if (!f) fail(kExitConfig, "cannot write " + path.string());
    f << j.dump(2) << '\n';
}

mhf::LoadedConfig load(const Options& o) {
    if (o.config.empty()) fail(kExitConfig, "--config is required");
    try {
        return mhf::load_config(o.config, o.n);
    } catch (const mhf::ConfigError& e) {
        fail(kExitConfig, e.what());
    }
}

mhf::SolveMethod parse_method(const std::string& m) {
    if (m == "direct") return mhf::SolveMethod::Direct;
    if (m == "ode") return mhf::SolveMethod::Ode;
    if (m == "both") return mhf::SolveMethod::Both;
    fail(kExitConfig, "unknown method '" + m + "' (direct, ode or both)");
}

void require_density(const mhf::Bundle& b, mhf::SolveMethod m) {
    if (m != mhf::SolveMethod::Direct && b.mu.has_atoms())
        fail(kExitConfig, "the configured measure has atoms; the ODE route needs a density. Use --method direct");
}

Vec nodal_h(const mhf::LossModel& loss) {
    const int n = loss.grid.n;
    Vec h(n + 1);
    h[0] = loss.h[0];
    h[n] = loss.h[n - 1];
    for (int i = 1; i < n; ++i) h[i] = 0.5 * (loss.h[i - 1] + loss.h[i]);
    return h;
}

Vec p_column(const mhf::Grid& grid) {
    Vec p(grid.n + 1);
    for (int i = 0; i <= grid.n; ++i) p[i] = grid.p(i);
    return p;
}

mhf::Table solution_table(const Vec& g, const Vec& psi, const mhf::Bundle& b, double* oide_max) {
    const mhf::OideReport r = mhf::oide_residual(psi, b);
    if (oide_max) *oide_max = r.max_residual;
    return {{"p", "G", "Psi", "Lambda_hat", "residual"},
            {p_column(b.grid()), g, psi, mhf::build_lambda_hat(g, b), r.residual}};
}

void write_contract(const std::filesystem::path& path, const mhf::Contract& c) {
    mhf::write_csv(path.string(), {{"x", "R", "I"}, {c.x, c.R, c.I}});
}

json valuation_json(const mhf::Valuation& v) {
    return {{"premium", v.premium}, {"U_insurer", v.u_insurer}, {"U_insured", v.u_insured}};
}

int cmd_solve(const Options& o) {
    const mhf::SolveMethod method = parse_method(o.method);
    const mhf::LoadedConfig cfg = load(o);
    const mhf::Bundle& b = cfg.bundle;
    require_density(b, method);
    const auto dir = out_dir(o);
    const auto t0 = std::chrono::steady_clock::now();

    json summary;
    summary["n"] = b.n();
    summary["method"] = o.method;
    bool converged = false;
    Vec g_final, psi_final;
    // the ODE route is warm-started from the direct optimum, so that always runs
    const mhf::DirectResult dr = mhf::solve_direct(b);
    converged = dr.converged;
    summary["direct"] = {{"iterations", dr.iterations},
                         {"stationarity", dr.stationarity},
                         {"objective", dr.objective},
                         {"converged", dr.converged},
                         {"utility_clamped", dr.clamped}};
    if (o.verbose)
        std::fprintf(stderr, "direct: %d iterations, stationarity %.2e, %s\n", dr.iterations, dr.stationarity,
                     dr.converged ? "converged" : "NOT converged");
    g_final = dr.g;
    psi_final = mhf::build_psi(dr.g, b);
    if (method != mhf::SolveMethod::Direct) {
        mhf::OdeConfig oc;
        oc.threads = mhf::thread_cap();
        const mhf::OdeSolution os = mhf::solve_ode(b, &dr.g, oc);
        converged = converged && os.converged;
        if (o.verbose)
            std::fprintf(stderr, "ode: %d outer iterations (%s), residual %.2e, c %.6g d %.6g rho %.6g, %s\n",
                         os.iterations, os.warm_started ? "warm" : "cold", os.residual_norm, os.c, os.d, os.rho,
                         os.converged ? "converged" : "NOT converged");
        summary["ode"] = {{"iterations", os.iterations},
                          {"residual", os.residual_norm},
                          {"c", os.c},
                          {"d", os.d},
                          {"rho", os.rho},
                          {"warm_started", os.warm_started},
                          {"converged", os.converged},
                          {"clamp_events", os.clamp_events}};
        if (method == mhf::SolveMethod::Ode) {
            g_final = os.gamma_fn;
            psi_final = os.psi;
        } else {
            double gap = 0.0;
            for (std::size_t i = 0; i < dr.g.size(); ++i) gap = std::max(gap, std::abs(dr.g[i] - os.gamma_fn[i]));
            summary["cross_solver_gap"] = gap;
            double oide_ode = 0.0;
            mhf::write_csv((dir / "solution_ode.csv").string(), solution_table(os.gamma_fn, os.psi, b, &oide_ode));
            summary["ode"]["oide_residual"] = oide_ode;
        }
    }

    double oide = 0.0;
    mhf::write_csv((dir / "solution.csv").string(), solution_table(g_final, psi_final, b, &oide));
    const mhf::Contract c = mhf::contract_from_quantile(g_final, b);
    write_contract(dir / "contract.csv", c);
    const mhf::Valuation v = mhf::evaluate_contract(c, b);
    summary["valuation"] = valuation_json(v);
    const mhf::KktReport kkt = mhf::kkt_residual(g_final, b);
    summary["residuals"] = {{"complementarity", kkt.max_violation}, {"oide", oide}};
    summary["converged"] = converged;
    write_json(dir / "summary.json", summary);

    std::printf("premium %.10g  U_insurer %.10g  U_insured %.10g\n", v.premium, v.u_insurer, v.u_insured);
    if (summary.contains("cross_solver_gap"))
        std::printf("cross-solver gap %.3e\n", summary["cross_solver_gap"].get<double>());
    std::printf("complementarity %.3e  oide %.3e  wall %.2fs\n", kkt.max_violation, oide, seconds_since(t0));
    if (!converged) fail(kExitSolver, "solver did not converge (see summary.json)");
    return 0;
}

int cmd_verify(const Options& o) {
    if (o.solution.empty()) fail(kExitConfig, "--solution is required");
    mhf::Table sol;
    try {
        sol = mhf::read_csv(o.solution);
    } catch (const std::exception& e) {
        fail(kExitConfig, e.what());
    }
    const mhf::LoadedConfig cfg = load(o);
    const mhf::Bundle& b = cfg.bundle;
    Vec g;
    try {
        g = sol.column("G");
    } catch (const std::exception& e) {
        fail(kExitConfig, std::string(o.solution) + ": " + e.what());
    }
    if (static_cast<int>(g.size()) != b.n() + 1)
        fail(kExitConfig, "solution has " + std::to_string(g.size()) + " nodes but the grid has n = " +
                              std::to_string(b.n()) + " (" + std::to_string(b.n() + 1) + " nodes)");

    const auto dir = out_dir(o);
    const mhf::FeasibilityReport feas = mhf::validate_feasible(g, b.loss);
    const mhf::OptimalityReport rep = mhf::verify_solution(g, b);
    const double vgap = mhf::variational_gap(g, b, 200, o.seed);

    mhf::write_csv((dir / "verification.csv").string(),
                   {{"p", "F_X_inv", "h", "G", "Psi", "Lambda_hat", "residual"},
                    {p_column(b.grid()), b.loss.quantile, nodal_h(b.loss), g, rep.psi, rep.lambda_hat,
                     rep.node_residual}});

    const mhf::VerifyTolerances tol;
    json s;
    s["n"] = b.n();
    s["pass"] = rep.pass;
    s["feasibility"] = {{"max_violation", rep.feasibility_violation}, {"ok", feas.ok}};
    s["complementarity"] = {{"max_violation", rep.max_complementarity_violation},
                            {"worst_cell", rep.worst_cell},
                            {"tolerance", tol.complementarity}};
    s["oide"] = {{"max_residual", rep.oide_residual}, {"worst_node", rep.worst_node}, {"tolerance", tol.oide}};
    s["boundary"] = {{"psi0", rep.boundary_errors[0]}, {"psi1", rep.boundary_errors[1]}};
    s["lambda_hat_distribution"] = rep.lambda_hat_ok;
    s["variational_gap"] = vgap;
    s["seed"] = o.seed;
    write_json(dir / "verification_summary.json", s);

    const double dp = b.grid().dp();
    std::printf("feasibility %.3e  complementarity %.3e  oide %.3e  variational gap %.3e\n", rep.feasibility_violation,
                rep.max_complementarity_violation, rep.oide_residual, vgap);
    if (rep.max_complementarity_violation > tol.complementarity)
        std::printf("  complementarity violated on cell %d, p in [%.6g, %.6g]\n", rep.worst_cell, rep.worst_cell * dp,
                    (rep.worst_cell + 1) * dp);
    if (rep.oide_residual > tol.oide)
        std::printf("  OIDE residual worst at node %d, p = %.6g\n", rep.worst_node, rep.worst_node * dp);
    if (!rep.lambda_hat_ok) std::printf("  Lambda_hat is not a distribution function\n");
    if (!feas.ok) {
        int shown = 0;
        for (int k = 0; k < b.n() && shown < 5; ++k)
            if (feas.lower[k] > 1e-9 || feas.upper[k] > 1e-9) {
                std::printf("  infeasible cell %d: below %.3e above %.3e\n", k, feas.lower[k], feas.upper[k]);
                ++shown;
            }
    }
    if (!rep.pass) fail(kExitVerify, "verification failed");
    std::printf("PASS\n");
    return 0;
}

int cmd_example(const Options& o) {
    const int n = o.n > 0 ? o.n : 4000;
    mhf::ExampleReport r;
    try {
        r = mhf::run_example_41(n, mhf::thread_cap());
    } catch (const mhf::ModelError& e) {
        fail(kExitConfig, e.what());
    }
    auto line = [&](const char* name, const mhf::ExampleSolverErrors& e) {
        std::printf("%-7s G %.3e  R %.3e  Psi %.3e  Psi(0) %.1e  Psi(1) %.1e  %s\n", name, e.g, e.r, e.psi, e.psi0,
                    e.psi1, e.converged ? "converged" : "NOT converged");
    };
    std::printf("n = %d, tolerance %.0e\n", r.n, r.tolerance);
    line("direct", r.direct);
    line("ode", r.ode);
    std::printf("c = %.12f  d = %.12f  |c - d| = %.2e\n", r.c, r.d, std::abs(r.c - r.d));
    std::printf("with the e^{-8/9} normalisation: c = %.12f  d = %.12f\n", r.c_printed, r.d_printed);
    std::printf("wall %.2fs\n", r.seconds);

    if (o.out_given) {
        const auto dir = out_dir(o);
        Vec ge(r.n + 1), psi_e(r.n + 1);
        const mhf::Grid grid(r.n);
        for (int i = 0; i <= r.n; ++i) {
            ge[i] = mhf::example_g(grid.p(i));
            psi_e[i] = mhf::example_psi(grid.p(i));
        }
        mhf::write_csv((dir / "example.csv").string(),
                       {{"p", "G_exact", "G_direct", "G_ode", "Psi_exact"}, {p_column(grid), ge, r.g_direct, r.g_ode, psi_e}});
    }
    if (!r.pass) fail(kExitVerify, "example regression failed");
    std::printf("PASS\n");
    return 0;
}

int cmd_frontier(const Options& o) {
    const mhf::SolveMethod method = parse_method(o.method);
    if (o.gamma_steps < 1 || !(o.gamma_min <= o.gamma_max) ||
        (o.gamma_steps > 1 && o.gamma_min == o.gamma_max))
        fail(kExitConfig, "empty gamma range: need --gamma-steps >= 1 and --gamma-min <= --gamma-max");
    const mhf::LoadedConfig cfg = load(o);
    require_density(cfg.bundle, method);
    const auto dir = out_dir(o);

    Vec gammas(o.gamma_steps);
    for (int i = 0; i < o.gamma_steps; ++i)
        gammas[i] = o.gamma_steps == 1 ? o.gamma_min
                                       : o.gamma_min + (o.gamma_max - o.gamma_min) * i / (o.gamma_steps - 1);
    const auto entries = mhf::pareto_frontier(gammas, cfg.bundle, method, mhf::thread_cap());

    Vec prem, uins;
    json flags = json::array();
    int ok = 0;
    for (const auto& e : entries) {
        prem.push_back(e.premium);
        uins.push_back(e.u_insured);
        flags.push_back({{"gamma", e.gamma}, {"converged", e.converged}});
        ok += e.converged;
        std::printf("gamma %.6g  premium %.10g  U_insured %.10g%s\n", e.gamma, e.premium, e.u_insured,
                    e.converged ? "" : "  (not converged)");
    }
    mhf::write_csv((dir / "frontier.csv").string(), {{"gamma", "premium", "U_insured"}, {gammas, prem, uins}});
    write_json(dir / "frontier_summary.json", {{"entries", flags}, {"converged", ok}});
    if (ok == 0) fail(kExitSolver, "no frontier entry converged");
    return 0;
}

int cmd_eval(const Options& o) {
    if (o.contract.empty()) fail(kExitConfig, "--contract deductible:<d> or quota:<a> is required");
    const mhf::LoadedConfig cfg = load(o);
    const mhf::Bundle& b = cfg.bundle;
    mhf::Contract c;
    try {
        const mhf::Benchmark bm = mhf::Benchmark::parse(o.contract);
        c = mhf::contract_from_quantile(mhf::benchmark_retention(bm, b.loss), b);
    } catch (const mhf::ModelError& e) {
        fail(kExitConfig, e.what());
    }
    const mhf::Valuation v = mhf::evaluate_contract(c, b);
    const auto dir = out_dir(o);
    write_contract(dir / "contract.csv", c);
    write_json(dir / "eval_summary.json", {{"contract", o.contract}, {"valuation", valuation_json(v)}});
    std::printf("premium %.10g  U_insurer %.10g  U_insured %.10g\n", v.premium, v.u_insurer, v.u_insured);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Optimal moral-hazard-free insurance under rank-dependent utility"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sc, bool needs_config) {
        auto* c = sc->add_option("--config", o.config, "JSON model configuration");
        if (needs_config) c->required();
        sc->add_option("--n", o.n, "grid cells (overrides the config)")->check(CLI::PositiveNumber);
        sc->add_option("--out", o.out, "output directory");
        sc->add_flag("-v,--verbose", o.verbose);
    };

    auto* solve = app.add_subcommand("solve", "solve for the optimal contract");
    common(solve, true);
    solve->add_option("--method", o.method, "direct, ode or both");

    auto* verify = app.add_subcommand("verify", "check a solution CSV against the optimality conditions");
    common(verify, true);
    verify->add_option("--solution", o.solution, "solution CSV written by solve")->required();
    verify->add_option("--seed", o.seed, "seed for the sampled variational gap");

    auto* example = app.add_subcommand("example", "closed-form regression on the worked example");
    common(example, false);

    auto* frontier = app.add_subcommand("frontier", "sweep the insurer reservation level gamma");
    common(frontier, true);
    frontier->add_option("--method", o.method, "direct, ode or both");
    frontier->add_option("--gamma-min", o.gamma_min)->required();
    frontier->add_option("--gamma-max", o.gamma_max)->required();
    frontier->add_option("--gamma-steps", o.gamma_steps)->required();

    auto* eval = app.add_subcommand("eval", "value a deductible or quota-share contract");
    common(eval, true);
    eval->add_option("--contract", o.contract, "deductible:<d> or quota:<a>")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    o.out_given = example->count("--out") > 0;
    try {
        if (*solve) return cmd_solve(o);
        if (*verify) return cmd_verify(o);
        if (*example) return cmd_example(o);
        if (*frontier) return cmd_frontier(o);
        if (*eval) return cmd_eval(o);
    } catch (const Exit& e) {
        return e.code;
    } catch (const mhf::ModelError& e) {
        std::cerr << "mhf: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "mhf: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
