#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "problem.hpp"

namespace msense {

enum class InitMode { planted, spectral, random };
enum class GradientMode { sample, population };
/// How the sample gradient is evaluated: the direct O(n d^2) sum, or the precomputed
/// O(d^4) normal operator (SensingOperator). Same gradient up to rounding.
enum class GradientEval { direct, gram };

inline const char* to_string(InitMode m) {
    switch (m) {
    case InitMode::planted: return "planted";
    case InitMode::spectral: return "spectral";
    case InitMode::random: return "random";
    }
    return "?";
}
inline const char* to_string(GradientMode m) {
    return m == GradientMode::sample ? "sample" : "population";
}
inline const char* to_string(GradientEval e) { return e == GradientEval::direct ? "direct" : "gram"; }

struct InitConfig {
    InitMode mode = InitMode::planted;
    double rho = 0.07;
    double scale = 1e-3;
};

/// Every knob of a run. Defaults are the d=20, r=3 desk configuration.
struct ExperimentConfig {
    std::size_t d = 20;
    std::size_t r = 3;
    std::size_t k = 4;
    std::size_t n = 200;
    double sigma = 0.0;
    std::vector<double> ds{1.0, 0.9, 0.8};
    std::optional<std::vector<double>> dt;  // nullopt means "zeros"
    std::optional<double> eta = 0.1;        // nullopt means "theory"
    std::size_t iters = 1000;
    std::uint64_t seed = 1;
    InitConfig init;
    GradientMode gradient_mode = GradientMode::sample;
    GradientEval gradient_eval = GradientEval::direct;
    Distribution distribution = Distribution::gaussian;
    EntryVariance entry_variance = EntryVariance::unit;
    bool track_delta = false;
    std::size_t delta_every = 1;
    MemoryMode memory_mode = MemoryMode::dense;
    double floor_multiple = 50.0;
    double delta_d_coeff = 10.0;
    double delta_sigma_coeff = 4.0;
    std::string output;

    std::vector<double> dt_values() const { return dt ? *dt : std::vector<double>(d - r, 0.0); }

    /// Throws invalid_input naming the first offending field.
    void validate() const {
        auto bad = [](const std::string& field, const std::string& why) {
            throw invalid_input("config field '" + field + "': " + why);
        };
        if (d < 1) bad("d", "must be >= 1");
        if (r < 1 || r > d) bad("r", "must satisfy 1 <= r <= d");
        if (k < 1) bad("k", "must be >= 1");
        if (n < 1) bad("n", "must be >= 1");
        if (!(sigma >= 0.0) || !std::isfinite(sigma)) bad("sigma", "must be finite and >= 0");
        if (ds.size() != r) bad("ds", "must have r entries");
        for (std::size_t i = 0; i < ds.size(); ++i) {
            if (!(ds[i] > 0.0) || !std::isfinite(ds[i])) bad("ds", "entries must be positive");
            if (i > 0 && ds[i] > ds[i - 1]) bad("ds", "must be descending");
        }
        if (dt) {
            if (dt->size() != d - r) bad("dt", "must have d - r entries");
            for (double v : *dt) {
                if (!std::isfinite(v)) bad("dt", "entries must be finite");
                if (!(std::abs(v) < ds.back())) bad("dt", "max |dt| must be below ds[r-1]");
            }
        }
        if (eta && (!(*eta > 0.0) || !std::isfinite(*eta))) bad("eta", "must be positive or \"theory\"");
        if (init.mode == InitMode::planted) {
            if (k < r) bad("k", "planted init requires k >= r");
            if (!(init.rho > 0.0 && init.rho <= 0.07)) bad("init.rho", "must lie in (0, 0.07]");
        }
        if (init.mode == InitMode::spectral && k > d) bad("k", "spectral init requires k <= d");
        if (init.mode == InitMode::random && (!(init.scale > 0.0) || !std::isfinite(init.scale)))
            bad("init.scale", "must be positive");
        if (delta_every < 1) bad("delta_every", "must be >= 1");
        if (track_delta && gradient_mode == GradientMode::population)
            bad("track_delta", "needs the sample gradient mode");
        if (!(floor_multiple >= 0.0)) bad("floor_multiple", "must be >= 0");
        if (!(delta_d_coeff >= 0.0)) bad("delta_d_coeff", "must be >= 0");
        if (!(delta_sigma_coeff >= 0.0)) bad("delta_sigma_coeff", "must be >= 0");
    }
};

namespace detail {

using json = nlohmann::json;

inline void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw invalid_input("unknown config key '" + where + it.key() + "'");
}

inline std::size_t get_count(const json& v, const std::string& field) {
    if (!v.is_number_integer() || v.get<long long>() < 0)
        throw invalid_input("config field '" + field + "': expected a nonnegative integer");
    return v.get<std::size_t>();
}

inline double get_real(const json& v, const std::string& field) {
    if (!v.is_number()) throw invalid_input("config field '" + field + "': expected a number");
    return v.get<double>();
}

inline bool get_bool(const json& v, const std::string& field) {
    if (!v.is_boolean()) throw invalid_input("config field '" + field + "': expected true or false");
    return v.get<bool>();
}

inline std::string get_string(const json& v, const std::string& field) {
    if (!v.is_string()) throw invalid_input("config field '" + field + "': expected a string");
    return v.get<std::string>();
}

inline std::vector<double> get_reals(const json& v, const std::string& field) {
    if (!v.is_array()) throw invalid_input("config field '" + field + "': expected a list of numbers");
    std::vector<double> out;
    for (const auto& e : v) out.push_back(get_real(e, field));
    return out;
}

template <class E>
E get_enum(const json& v, const std::string& field, std::initializer_list<E> options) {
    const std::string s = get_string(v, field);
    std::string allowed;
    for (E e : options) {
        if (s == to_string(e)) return e;
        allowed += (allowed.empty() ? "" : "|") + std::string(to_string(e));
    }
    throw invalid_input("config field '" + field + "': expected one of " + allowed + ", got '" + s + "'");
}

} // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    using detail::json;
    if (!j.is_object()) throw invalid_input("config must be a JSON object");
    detail::reject_unknown(j, {"d", "r", "k", "n", "sigma", "ds", "dt", "eta", "iters", "seed", "init",
                               "gradient_mode", "gradient_eval", "distribution", "entry_variance", "track_delta",
                               "delta_every", "memory_mode", "floor_multiple", "delta_d_coeff",
                               "delta_sigma_coeff", "output"},
                           "");
    ExperimentConfig c;
    if (j.contains("d")) c.d = detail::get_count(j["d"], "d");
    if (j.contains("r")) c.r = detail::get_count(j["r"], "r");
    if (j.contains("k")) c.k = detail::get_count(j["k"], "k");
    if (j.contains("n")) c.n = detail::get_count(j["n"], "n");
    if (j.contains("sigma")) c.sigma = detail::get_real(j["sigma"], "sigma");
    if (j.contains("ds")) c.ds = detail::get_reals(j["ds"], "ds");
    if (j.contains("dt")) {
        const json& v = j["dt"];
        if (v.is_string()) {
            if (v.get<std::string>() != "zeros")
                throw invalid_input("config field 'dt': expected a list or \"zeros\"");
            c.dt.reset();
        } else {
            c.dt = detail::get_reals(v, "dt");
        }
    }
    if (j.contains("eta")) {
        const json& v = j["eta"];
        if (v.is_string()) {
            if (v.get<std::string>() != "theory")
                throw invalid_input("config field 'eta': expected a number or \"theory\"");
            c.eta.reset();
        } else {
            c.eta = detail::get_real(v, "eta");
        }
    }
    if (j.contains("iters")) c.iters = detail::get_count(j["iters"], "iters");
    if (j.contains("seed")) {
        if (!j["seed"].is_number_integer()) throw invalid_input("config field 'seed': expected an integer");
        c.seed = j["seed"].is_number_unsigned() ? j["seed"].get<std::uint64_t>()
                                                : static_cast<std::uint64_t>(j["seed"].get<long long>());
    }
    if (j.contains("init")) {
        const json& in = j["init"];
        if (!in.is_object()) throw invalid_input("config field 'init': expected an object");
        detail::reject_unknown(in, {"mode", "rho", "scale"}, "init.");
        if (in.contains("mode"))
            c.init.mode = detail::get_enum(in["mode"], "init.mode",
                                           {InitMode::planted, InitMode::spectral, InitMode::random});
        if (in.contains("rho")) c.init.rho = detail::get_real(in["rho"], "init.rho");
        if (in.contains("scale")) c.init.scale = detail::get_real(in["scale"], "init.scale");
    }
    if (j.contains("gradient_mode"))
        c.gradient_mode = detail::get_enum(j["gradient_mode"], "gradient_mode",
                                           {GradientMode::sample, GradientMode::population});
    if (j.contains("gradient_eval"))
        c.gradient_eval = detail::get_enum(j["gradient_eval"], "gradient_eval",
                                           {GradientEval::direct, GradientEval::gram});
    if (j.contains("distribution"))
        c.distribution = detail::get_enum(j["distribution"], "distribution",
                                          {Distribution::gaussian, Distribution::rademacher});
    if (j.contains("entry_variance"))
        c.entry_variance = detail::get_enum(j["entry_variance"], "entry_variance",
                                            {EntryVariance::unit, EntryVariance::isotropic});
    if (j.contains("track_delta")) c.track_delta = detail::get_bool(j["track_delta"], "track_delta");
    if (j.contains("delta_every")) c.delta_every = detail::get_count(j["delta_every"], "delta_every");
    if (j.contains("memory_mode"))
        c.memory_mode = detail::get_enum(j["memory_mode"], "memory_mode",
                                         {MemoryMode::dense, MemoryMode::regenerate});
    if (j.contains("floor_multiple")) c.floor_multiple = detail::get_real(j["floor_multiple"], "floor_multiple");
    if (j.contains("delta_d_coeff")) c.delta_d_coeff = detail::get_real(j["delta_d_coeff"], "delta_d_coeff");
    if (j.contains("delta_sigma_coeff"))
        c.delta_sigma_coeff = detail::get_real(j["delta_sigma_coeff"], "delta_sigma_coeff");
    if (j.contains("output")) c.output = detail::get_string(j["output"], "output");
    c.validate();
    return c;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["d"] = c.d;
    j["r"] = c.r;
    j["k"] = c.k;
    j["n"] = c.n;
    j["sigma"] = c.sigma;
    j["ds"] = c.ds;
    if (c.dt) j["dt"] = *c.dt; else j["dt"] = "zeros";
    if (c.eta) j["eta"] = *c.eta; else j["eta"] = "theory";
    j["iters"] = c.iters;
    j["seed"] = c.seed;
    j["init"] = {{"mode", to_string(c.init.mode)}, {"rho", c.init.rho}, {"scale", c.init.scale}};
    j["gradient_mode"] = to_string(c.gradient_mode);
    j["gradient_eval"] = to_string(c.gradient_eval);
    j["distribution"] = to_string(c.distribution);
    j["entry_variance"] = to_string(c.entry_variance);
    j["track_delta"] = c.track_delta;
    j["delta_every"] = c.delta_every;
    j["memory_mode"] = to_string(c.memory_mode);
    j["floor_multiple"] = c.floor_multiple;
    j["delta_d_coeff"] = c.delta_d_coeff;
    j["delta_sigma_coeff"] = c.delta_sigma_coeff;
    j["output"] = c.output;
    return j;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw invalid_input("cannot read config file " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw invalid_input("config " + path + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

} // namespace msense
