#ifndef FPCONV_CONFIG_HPP
#define FPCONV_CONFIG_HPP

// Experiment configuration: a JSON object whose keys map one-to-one onto the
// experiment specs. Unknown keys are errors; missing keys take defaults; the
// echo written to result.json parses back to an identical spec.
//
//   {
//     "experiment": "rate" | "locallaw" | "fluctuation" | "twoatom",
//     "alpha": {"atoms": [...], "weights": [...]} | "path/to/measure.json",
//     "beta":  same as alpha,
//     "n_list": [128, 256], "replicas": 30, "seed": 1,
//     "gamma": 0.2, "epsilon": 0.25, "pass_fraction": 0.9, "center": false,
//     "solver": {"tol": 1e-12, "max_iter": 10000, "newton_max_iter": 50, "newton_switch": 1e-8},
//     rate:      "interval": [lo, hi], "subinterval_grid": 0, "b_threshold": 0.1
//     scans:     "e_grid": [...], "eta_grid": [...], "n_eta_grid": [...],
//                "weights_mode": "unit" | "random-phase" | "supplied", "weights": [[re, im], ...]
//     twoatom:   "xi", "zeta", "theta", "varsigma" (alpha and beta are implied)
//   }

#include "fpconv/errors.hpp"
#include "fpconv/experiments.hpp"
#include "fpconv/measure_io.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

namespace fpconv {

enum class ExperimentKind { rate, locallaw, fluctuation, twoatom };

inline const char* to_string(ExperimentKind k)
{
    switch (k) {
    case ExperimentKind::rate: return "rate";
    case ExperimentKind::locallaw: return "locallaw";
    case ExperimentKind::fluctuation: return "fluctuation";
    case ExperimentKind::twoatom: return "twoatom";
    }
    return "rate";
}

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::rate;
    RateExperimentSpec rate;
    LocalLawScanSpec scan;
    TwoAtomSpec two_atom;
};

inline bool operator==(const RateExperimentSpec& a, const RateExperimentSpec& b)
{
    return a.alpha == b.alpha && a.beta == b.beta && a.n_list == b.n_list && a.replicas == b.replicas &&
           a.lo == b.lo && a.hi == b.hi && a.subinterval_grid == b.subinterval_grid && a.seed == b.seed &&
           a.b_threshold == b.b_threshold && a.gamma == b.gamma && a.epsilon == b.epsilon &&
           a.pass_fraction == b.pass_fraction && a.center == b.center && a.solver == b.solver;
}

inline bool operator==(const LocalLawScanSpec& a, const LocalLawScanSpec& b)
{
    return a.alpha == b.alpha && a.beta == b.beta && a.n_list == b.n_list && a.replicas == b.replicas &&
           a.e_grid == b.e_grid && a.eta_grid == b.eta_grid && a.n_eta_grid == b.n_eta_grid && a.gamma == b.gamma &&
           a.weights_mode == b.weights_mode && a.weights == b.weights && a.epsilon == b.epsilon &&
           a.pass_fraction == b.pass_fraction && a.seed == b.seed && a.center == b.center && a.solver == b.solver;
}

inline bool operator==(const TwoAtomSpec& a, const TwoAtomSpec& b)
{
    return a.xi == b.xi && a.zeta == b.zeta && a.theta == b.theta && a.varsigma == b.varsigma && a.gamma == b.gamma;
}

inline bool operator==(const ExperimentConfig& a, const ExperimentConfig& b)
{
    if (a.kind != b.kind)
        return false;
    switch (a.kind) {
    case ExperimentKind::rate: return a.rate == b.rate;
    case ExperimentKind::locallaw:
    case ExperimentKind::fluctuation: return a.scan == b.scan;
    case ExperimentKind::twoatom: return a.scan == b.scan && a.two_atom == b.two_atom;
    }
    return false;
}

namespace detail {

inline bool is_count(const nlohmann::json& v)
{
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
}

class ConfigReader {
public:
    ConfigReader(const nlohmann::json& j, std::filesystem::path base) : j_(j), base_(std::move(base))
    {
        if (!j.is_object())
            throw ValidationError("config must be a JSON object");
    }

    void allow(std::initializer_list<const char*> keys)
    {
        for (const char* k : keys)
            allowed_.insert(k);
    }

    void reject_unknown() const
    {
        for (const auto& [key, value] : j_.items())
            if (!allowed_.count(key))
                throw ValidationError("unknown config key \"" + key + "\"");
    }

    bool has(const char* key) const { return j_.contains(key); }

    template <class T>
    T get(const char* key, T fallback) const
    {
        if (!j_.contains(key))
            return fallback;
        try {
            return j_.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ValidationError(std::string(key) + ": wrong type");
        }
    }

    double number(const char* key, double fallback) const
    {
        if (!j_.contains(key))
            return fallback;
        if (!j_.at(key).is_number())
            throw ValidationError(std::string(key) + ": must be a number");
        return j_.at(key).get<double>();
    }

    std::size_t count(const char* key, std::size_t fallback) const
    {
        if (!j_.contains(key))
            return fallback;
        const auto& v = j_.at(key);
        if (!is_count(v))
            throw ValidationError(std::string(key) + ": must be a nonnegative integer");
        return v.get<std::size_t>();
    }

    std::vector<double> numbers(const char* key) const
    {
        std::vector<double> out;
        if (!j_.contains(key))
            return out;
        const auto& v = j_.at(key);
        if (!v.is_array())
            throw ValidationError(std::string(key) + ": must be an array of numbers");
        for (const auto& x : v) {
            if (!x.is_number())
                throw ValidationError(std::string(key) + ": must be an array of numbers");
            out.push_back(x.get<double>());
        }
        return out;
    }

    DiscreteMeasure measure(const char* key) const
    {
        if (!j_.contains(key))
            throw ValidationError(std::string(key) + ": required measure is missing");
        const auto& v = j_.at(key);
        try {
            if (v.is_string()) {
                std::filesystem::path p = v.get<std::string>();
                if (p.is_relative())
                    p = base_ / p;
                return read_measure_file(p);
            }
            return measure_from_json(v);
        } catch (const ValidationError& e) {
            throw ValidationError(std::string(key) + ": " + e.what());
        }
    }

    const nlohmann::json& at(const char* key) const { return j_.at(key); }

private:
    const nlohmann::json& j_;
    std::filesystem::path base_;
    std::set<std::string> allowed_;
};

inline void require(bool ok, const char* key, const std::string& what)
{
    if (!ok)
        throw ValidationError(std::string(key) + ": " + what);
}

inline SolverOptions parse_solver(const ConfigReader& r)
{
    SolverOptions s;
    if (!r.has("solver"))
        return s;
    const auto& j = r.at("solver");
    ConfigReader sub(j, {});
    sub.allow({"tol", "max_iter", "newton_max_iter", "newton_switch"});
    sub.reject_unknown();
    s.tol = sub.number("tol", s.tol);
    s.max_iter = sub.count("max_iter", s.max_iter);
    s.newton_max_iter = sub.count("newton_max_iter", s.newton_max_iter);
    s.newton_switch = sub.number("newton_switch", s.newton_switch);
    require(s.tol > 0.0, "solver.tol", "must be positive");
    require(s.max_iter >= 1, "solver.max_iter", "must be at least 1");
    require(s.newton_switch > 0.0, "solver.newton_switch", "must be positive");
    return s;
}

inline std::vector<std::size_t> parse_n_list(const ConfigReader& r)
{
    require(r.has("n_list"), "n_list", "is required");
    const auto& v = r.at("n_list");
    require(v.is_array() && !v.empty(), "n_list", "must be a nonempty array of positive integers");
    std::vector<std::size_t> out;
    for (const auto& x : v) {
        require(is_count(x) && x.get<std::size_t>() > 0, "n_list", "entries must be positive integers");
        out.push_back(x.get<std::size_t>());
    }
    for (std::size_t k = 1; k < out.size(); ++k)
        require(out[k] > out[k - 1], "n_list", "must be strictly ascending");
    return out;
}

struct Common {
    std::vector<std::size_t> n_list;
    std::size_t replicas = 30;
    std::uint64_t seed = 0;
    double gamma = 0.2;
    double epsilon = 0.25;
    double pass_fraction = 0.9;
    bool center = false;
    SolverOptions solver;
};

inline Common parse_common(const ConfigReader& r, double default_gamma = 0.2)
{
    Common c;
    c.n_list = parse_n_list(r);
    c.replicas = r.count("replicas", c.replicas);
    require(c.replicas >= 1, "replicas", "must be at least 1");
    c.seed = r.get<std::uint64_t>("seed", 0);
    c.gamma = r.number("gamma", default_gamma);
    require(c.gamma > 0.0 && c.gamma < 0.5, "gamma", "must lie in (0, 1/2)");
    c.epsilon = r.number("epsilon", c.epsilon);
    require(c.epsilon > 0.0, "epsilon", "must be positive");
    c.pass_fraction = r.number("pass_fraction", c.pass_fraction);
    require(c.pass_fraction > 0.0 && c.pass_fraction <= 1.0, "pass_fraction", "must lie in (0, 1]");
    c.center = r.get<bool>("center", false);
    c.solver = parse_solver(r);
    return c;
}

inline void parse_scan_grid(const ConfigReader& r, LocalLawScanSpec& s)
{
    s.e_grid = r.numbers("e_grid");
    require(!s.e_grid.empty(), "e_grid", "must be a nonempty array");
    s.eta_grid = r.numbers("eta_grid");
    s.n_eta_grid = r.numbers("n_eta_grid");
    require(!s.eta_grid.empty() || !s.n_eta_grid.empty(), "eta_grid", "eta_grid or n_eta_grid must be given");
    for (double eta : s.eta_grid)
        require(eta > 0.0 && eta <= 1.0, "eta_grid", "entries must lie in (0, 1]");
    for (double v : s.n_eta_grid)
        require(v > 0.0, "n_eta_grid", "entries must be positive");
    const auto mode = r.get<std::string>("weights_mode", "unit");
    if (mode == "unit")
        s.weights_mode = WeightsMode::unit;
    else if (mode == "random-phase")
        s.weights_mode = WeightsMode::random_phase;
    else if (mode == "supplied")
        s.weights_mode = WeightsMode::supplied;
    else
        throw ValidationError("weights_mode: must be one of unit, random-phase, supplied");
    if (r.has("weights")) {
        const auto& w = r.at("weights");
        require(w.is_array(), "weights", "must be an array");
        for (const auto& d : w) {
            if (d.is_number())
                s.weights.emplace_back(d.get<double>(), 0.0);
            else if (d.is_array() && d.size() == 2 && d[0].is_number() && d[1].is_number())
                s.weights.emplace_back(d[0].get<double>(), d[1].get<double>());
            else
                throw ValidationError("weights: entries must be numbers or [re, im] pairs");
            require(std::abs(s.weights.back()) <= 1.0 + 1e-12, "weights", "entries must have modulus at most 1");
        }
    }
    require(s.weights_mode != WeightsMode::supplied || !s.weights.empty(), "weights",
            "required when weights_mode is supplied");
    require(s.weights_mode == WeightsMode::supplied || s.weights.empty(), "weights",
            "only allowed when weights_mode is supplied");
}

template <class Spec>
void apply_common(Spec& s, const Common& c)
{
    s.n_list = c.n_list;
    s.replicas = c.replicas;
    s.seed = c.seed;
    s.gamma = c.gamma;
    s.epsilon = c.epsilon;
    s.pass_fraction = c.pass_fraction;
    s.center = c.center;
    s.solver = c.solver;
}

} // namespace detail

/// Parses a config object; relative measure paths resolve against base_dir.
inline ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {})
{
    detail::ConfigReader r(j, base_dir);
    ExperimentConfig cfg;
    const auto kind = r.get<std::string>("experiment", "rate");
    if (kind == "rate")
        cfg.kind = ExperimentKind::rate;
    else if (kind == "locallaw")
        cfg.kind = ExperimentKind::locallaw;
    else if (kind == "fluctuation")
        cfg.kind = ExperimentKind::fluctuation;
    else if (kind == "twoatom")
        cfg.kind = ExperimentKind::twoatom;
    else
        throw ValidationError("experiment: must be one of rate, locallaw, fluctuation, twoatom");

    r.allow({"experiment", "n_list", "replicas", "seed", "gamma", "epsilon", "pass_fraction", "center", "solver"});
    switch (cfg.kind) {
    case ExperimentKind::rate: {
        r.allow({"alpha", "beta", "interval", "subinterval_grid", "b_threshold"});
        r.reject_unknown();
        auto& s = cfg.rate;
        detail::apply_common(s, detail::parse_common(r));
        s.alpha = r.measure("alpha");
        s.beta = r.measure("beta");
        const auto iv = r.numbers("interval");
        if (r.has("interval")) {
            detail::require(iv.size() == 2 && iv[0] < iv[1], "interval", "must be [lo, hi] with lo < hi");
            s.lo = iv[0];
            s.hi = iv[1];
        }
        s.subinterval_grid = r.count("subinterval_grid", 0);
        s.b_threshold = r.number("b_threshold", s.b_threshold);
        detail::require(s.b_threshold > 0.0, "b_threshold", "must be positive");
        break;
    }
    case ExperimentKind::locallaw:
    case ExperimentKind::fluctuation: {
        r.allow({"alpha", "beta", "e_grid", "eta_grid", "n_eta_grid", "weights_mode", "weights"});
        r.reject_unknown();
        auto& s = cfg.scan;
        detail::apply_common(s, detail::parse_common(r));
        s.alpha = r.measure("alpha");
        s.beta = r.measure("beta");
        detail::parse_scan_grid(r, s);
        break;
    }
    case ExperimentKind::twoatom: {
        r.allow({"e_grid", "eta_grid", "n_eta_grid", "weights_mode", "weights", "xi", "zeta", "theta", "varsigma"});
        r.reject_unknown();
        auto& s = cfg.scan;
        detail::apply_common(s, detail::parse_common(r));
        detail::parse_scan_grid(r, s);
        auto& t = cfg.two_atom;
        t.xi = r.number("xi", t.xi);
        t.zeta = r.number("zeta", t.zeta);
        t.theta = r.number("theta", t.theta);
        t.varsigma = r.number("varsigma", t.varsigma);
        t.gamma = s.gamma;
        detail::require(t.xi > 0.0 && t.xi <= 0.5, "xi", "must lie in (0, 1/2] (two-point-mass constraint)");
        detail::require(t.zeta > 0.0 && t.zeta <= 0.5, "zeta", "must lie in (0, 1/2] (two-point-mass constraint)");
        detail::require(t.xi <= t.zeta, "xi", "must not exceed zeta (two-point-mass constraint)");
        detail::require(t.theta != 0.0, "theta", "must be nonzero (two-point-mass constraint)");
        detail::require(!(t.theta == -1.0 && t.xi == 0.5 && t.zeta == 0.5), "theta",
                        "(theta, xi, zeta) = (-1, 1/2, 1/2) is excluded (two-point-mass constraint)");
        detail::require(t.varsigma > 0.0, "varsigma", "must be positive");
        s.alpha = t.alpha();
        s.beta = t.beta();
        break;
    }
    }
    return cfg;
}

inline ExperimentConfig parse_config_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ValidationError("cannot open config file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_config(j, path.parent_path());
}

namespace detail {

inline nlohmann::json solver_json(const SolverOptions& s)
{
    return {{"tol", s.tol}, {"max_iter", s.max_iter}, {"newton_max_iter", s.newton_max_iter},
            {"newton_switch", s.newton_switch}};
}

template <class Spec>
void echo_common(nlohmann::json& j, const Spec& s)
{
    j["n_list"] = s.n_list;
    j["replicas"] = s.replicas;
    j["seed"] = s.seed;
    j["gamma"] = s.gamma;
    j["epsilon"] = s.epsilon;
    j["pass_fraction"] = s.pass_fraction;
    j["center"] = s.center;
    j["solver"] = solver_json(s.solver);
}

inline void echo_scan_grid(nlohmann::json& j, const LocalLawScanSpec& s)
{
    j["e_grid"] = s.e_grid;
    j["eta_grid"] = s.eta_grid;
    j["n_eta_grid"] = s.n_eta_grid;
    j["weights_mode"] = to_string(s.weights_mode);
    if (s.weights_mode == WeightsMode::supplied) {
        auto w = nlohmann::json::array();
        for (const auto& d : s.weights)
            w.push_back({d.real(), d.imag()});
        j["weights"] = w;
    }
}

} // namespace detail

/// Full config with defaults filled; parse_config(echo_config(c)) == c.
inline nlohmann::json echo_config(const ExperimentConfig& c)
{
    nlohmann::json j;
    j["experiment"] = to_string(c.kind);
    switch (c.kind) {
    case ExperimentKind::rate:
        detail::echo_common(j, c.rate);
        j["alpha"] = measure_to_json(c.rate.alpha);
        j["beta"] = measure_to_json(c.rate.beta);
        j["interval"] = {c.rate.lo, c.rate.hi};
        j["subinterval_grid"] = c.rate.subinterval_grid;
        j["b_threshold"] = c.rate.b_threshold;
        break;
    case ExperimentKind::locallaw:
    case ExperimentKind::fluctuation:
        detail::echo_common(j, c.scan);
        j["alpha"] = measure_to_json(c.scan.alpha);
        j["beta"] = measure_to_json(c.scan.beta);
        detail::echo_scan_grid(j, c.scan);
        break;
    case ExperimentKind::twoatom:
        detail::echo_common(j, c.scan);
        detail::echo_scan_grid(j, c.scan);
        j["xi"] = c.two_atom.xi;
        j["zeta"] = c.two_atom.zeta;
        j["theta"] = c.two_atom.theta;
        j["varsigma"] = c.two_atom.varsigma;
        break;
    }
    return j;
}

/// Dispatches to the campaign the config describes and attaches the echo.
inline ExperimentResult run_experiment(const ExperimentConfig& c, const RunControl& ctl = {})
{
    ExperimentResult r;
    switch (c.kind) {
    case ExperimentKind::rate: r = run_rate_experiment(c.rate, ctl); break;
    case ExperimentKind::locallaw: r = run_local_law_scan(c.scan, ctl); break;
    case ExperimentKind::fluctuation: r = run_fluctuation_averaging(c.scan, ctl); break;
    case ExperimentKind::twoatom: r = run_two_atom_case(c.two_atom, c.scan, ctl); break;
    }
    r.config_echo = echo_config(c);
    return r;
}

} // namespace fpconv

#endif
