#include "mhf/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mhf/csv.hpp"

namespace mhf {

namespace {

using nlohmann::json;

const json& require(const json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
    return j.at(key);
}

double number(const json& j, const char* key, const std::string& where, double fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (!v.is_number()) throw ConfigError(where + "." + key + " must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(where + "." + key + " must be finite");
    return x;
}

double number(const json& j, const char* key, const std::string& where) {
    require(j, key, where);
    return number(j, key, where, 0.0);
}

std::string text(const json& j, const char* key, const std::string& where) {
    const json& v = require(j, key, where);
    if (!v.is_string()) throw ConfigError(where + "." + key + " must be a string");
    return v.get<std::string>();
}

const json& params_of(const json& j) {
    static const json empty = json::object();
    return j.contains("params") ? j.at("params") : empty;
}

LossModel parse_loss(const json& j, const Grid& grid, const std::string& base_dir) {
    const std::string kind = text(j, "kind", "loss");
    const json& p = params_of(j);
    if (kind == "example41") return example_loss(grid);

    LossSpec spec;
    if (kind == "uniform" || kind == "atom_uniform") {
        spec.kind = LossSpec::Kind::AtomUniform;
        spec.m0 = kind == "uniform" ? 0.0 : number(p, "m0", "loss.params");
        spec.scale = number(p, "scale", "loss.params", 1.0);
    } else if (kind == "beta") {
        spec.kind = LossSpec::Kind::Beta;
        spec.a = number(p, "a", "loss.params");
        spec.b = number(p, "b", "loss.params");
        spec.scale = number(p, "scale", "loss.params", 1.0);
    } else if (kind == "sample") {
        spec.kind = LossSpec::Kind::Sample;
        std::filesystem::path path = text(j, "sample_path", "loss");
        if (path.is_relative()) path = std::filesystem::path(base_dir) / path;
        if (!std::filesystem::exists(path)) throw ConfigError("loss sample file not found: " + path.string());
        try {
            spec.sample = read_single_column(path.string());
        } catch (const std::runtime_error& e) {
            throw ConfigError(std::string("loss sample: ") + e.what());
        }
    } else {
        throw ConfigError("unknown loss kind '" + kind + "'");
    }
    return build_loss_model(spec, grid);
}

std::vector<Atom> parse_atoms(const json& p) {
    std::vector<Atom> atoms;
    if (!p.contains("atoms")) return atoms;
    if (!p.at("atoms").is_array()) throw ConfigError("measure.params.atoms must be an array");
    for (const json& a : p.at("atoms"))
        atoms.push_back({number(a, "location", "measure atom"), number(a, "mass", "measure atom")});
    return atoms;
}

DistortionMeasure parse_measure(const json& j, const Grid& grid) {
    const std::string kind = text(j, "kind", "measure");
    const json& p = params_of(j);
    if (kind == "example41") return build_example_measure(grid);

    if (kind == "weighting") {
        const std::string family = text(p, "family", "measure.params");
        const double a = number(p, "a", "measure.params", 1.0);
        std::vector<double> jumps;
        if (p.contains("jumps")) {
            if (!p.at("jumps").is_array()) throw ConfigError("measure.params.jumps must be an array");
            for (const json& v : p.at("jumps")) {
                if (!v.is_number()) throw ConfigError("measure.params.jumps must hold numbers");
                jumps.push_back(v.get<double>());
            }
        }
        return measure_from_weighting(make_weighting(family, a), grid, jumps);
    }

    if (kind == "density") {
        const std::string family = text(p, "family", "measure.params");
        std::function<double(double)> f;
        if (family == "uniform") {
            f = [](double) { return 1.0; };
        } else if (family == "exponential") {
            const double rate = number(p, "rate", "measure.params");
            f = [rate](double t) { return std::exp(rate * t); };
        } else if (family == "power") {
            const double a = number(p, "a", "measure.params");
            if (!(a > -1.0)) throw ConfigError("power density needs a > -1");
            f = [a](double t) { return std::pow(t, a); };
        } else if (family == "table") {
            const json& v = require(p, "values", "measure.params");
            if (!v.is_array() || v.empty()) throw ConfigError("measure.params.values must be a nonempty array");
            std::vector<double> vals;
            for (const json& x : v) {
                if (!x.is_number()) throw ConfigError("measure.params.values must hold numbers");
                vals.push_back(x.get<double>());
            }
            // piecewise constant on equal pieces of [0,1]
            f = [vals](double t) {
                const auto m = static_cast<double>(vals.size());
                const auto i = static_cast<std::size_t>(std::min(m - 1.0, std::floor(t * m)));
                return vals[i];
            };
        } else {
            throw ConfigError("unknown density family '" + family + "'");
        }
        return measure_from_density(f, grid, parse_atoms(p));
    }
    throw ConfigError("unknown measure kind '" + kind + "'");
}

Utility parse_utility(const json& j) {
    const std::string kind = text(j, "kind", "utility");
    if (kind == "linear") return Utility::linear();
    if (kind == "exponential") return Utility::exponential(number(j, "alpha", "utility"));
    throw ConfigError("unknown utility kind '" + kind + "'");
}

}  // namespace

LoadedConfig parse_config(const std::string& json_text, const std::string& base_dir, int n_override) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");

    int n = kDefaultGridN;
    if (j.contains("grid")) {
        const double v = number(j.at("grid"), "n", "grid", kDefaultGridN);
        if (v != std::floor(v)) throw ConfigError("grid.n must be an integer");
        n = static_cast<int>(v);
    }
    if (n_override > 0) n = n_override;

    try {
        const Grid grid(n);
        LoadedConfig out;
        Bundle& b = out.bundle;
        b.loss = parse_loss(require(j, "loss", "config"), grid, base_dir);
        b.mu = parse_measure(require(j, "measure", "config"), grid);
        b.u = parse_utility(require(j, "utility", "config"));
        const json& m = require(j, "market", "config");
        b.market.theta = number(m, "theta", "market");
        b.market.sigma = number(m, "sigma", "market");
        b.market.gamma = number(m, "gamma", "market", 0.0);
        b.market.beta = number(m, "beta", "market", 0.0);
        validate_bundle(b);
        out.example = j.at("loss").value("kind", "") == "example41" && j.at("measure").value("kind", "") == "example41";
        return out;
    } catch (const ModelError& e) {
        throw ConfigError(e.what());
    }
}

LoadedConfig load_config(const std::string& path, int n_override) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    const std::filesystem::path dir = std::filesystem::path(path).parent_path();
    return parse_config(ss.str(), dir.empty() ? "." : dir.string(), n_override);
}

}  // namespace mhf
