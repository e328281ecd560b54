#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "config.hpp"
#include "error.hpp"
#include "experiment.hpp"
#include "format.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace msense {

enum class SweepParam { n, k, sigma, d };

inline const char* to_string(SweepParam p) {
    switch (p) {
    case SweepParam::n: return "n";
    case SweepParam::k: return "k";
    case SweepParam::sigma: return "sigma";
    case SweepParam::d: return "d";
    }
    return "?";
}

inline SweepParam parse_sweep_param(const std::string& s) {
    for (SweepParam p : {SweepParam::n, SweepParam::k, SweepParam::sigma, SweepParam::d})
        if (s == to_string(p)) return p;
    throw invalid_input("sweep parameter must be one of n|k|sigma|d, got '" + s + "'");
}

struct SweepCell {
    double value = 0.0;
    std::size_t replicate = 0;
    std::uint64_t cell_seed = 0;
    double plateau_err_fro = 0.0;
    double plateau_err_fro_sq = 0.0;
    double D_final = 0.0;
    std::string status;  // ok | diverged | failed: <reason>
};

struct SweepResult {
    SweepParam param = SweepParam::n;
    std::vector<double> values;
    std::vector<SweepCell> cells;  // grid order, replicates innermost
    std::optional<LinearFit> fit;  // log(median plateau err_fro^2) vs log(value)
    std::string fit_note;
};

struct SweepOptions {
    std::size_t replicates = 1;
    std::size_t threads = default_thread_count();
    /// Plateau err_fro below this multiple of sigma_1 counts as the numerical floor.
    double floor_relative = 1e-8;
};

/// FNV-1a over the parameter name, the value's bit pattern and the replicate index.
inline std::uint64_t cell_hash(SweepParam p, double value, std::size_t replicate) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&](std::uint64_t byte) {
        h ^= byte;
        h *= 0x100000001b3ULL;
    };
    for (const char* c = to_string(p); *c; ++c) mix(static_cast<unsigned char>(*c));
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(value);
    for (int b = 0; b < 8; ++b) mix((bits >> (8 * b)) & 0xffu);
    for (int b = 0; b < 8; ++b) mix((static_cast<std::uint64_t>(replicate) >> (8 * b)) & 0xffu);
    return splitmix64(h);
}

inline std::uint64_t cell_seed(std::uint64_t seed, SweepParam p, double value, std::size_t replicate) {
    return seed ^ cell_hash(p, value, replicate);
}

namespace detail {

inline std::size_t as_count(double v, const char* name) {
    if (!(v >= 1.0) || v != std::floor(v) || v > 1e12)
        throw invalid_input(std::string("sweep value for ") + name + " must be a positive integer");
    return static_cast<std::size_t>(v);
}

inline ExperimentConfig apply_sweep_value(ExperimentConfig c, SweepParam p, double v) {
    switch (p) {
    case SweepParam::n: c.n = as_count(v, "n"); break;
    case SweepParam::k: c.k = as_count(v, "k"); break;
    case SweepParam::sigma: c.sigma = v; break;
    case SweepParam::d:
        if (c.dt) throw invalid_input("sweeping d needs dt = \"zeros\"");
        c.d = as_count(v, "d");
        break;
    }
    return c;
}

} // namespace detail

/// Plateau statistics: medians over the final 10% of recorded iterations.
inline void plateau_statistics(const Trajectory& traj, SweepCell& cell) {
    const auto& m = traj.metrics;
    const std::size_t count = std::max<std::size_t>(1, m.size() / 10);
    std::vector<double> e, e2;
    for (std::size_t i = m.size() - count; i < m.size(); ++i) {
        e.push_back(m[i].err_fro);
        e2.push_back(m[i].err_fro * m[i].err_fro);
    }
    cell.plateau_err_fro = median(e);
    cell.plateau_err_fro_sq = median(e2);
    cell.D_final = m.back().D;
}

inline SweepResult sweep(const ExperimentConfig& base, SweepParam param, const std::vector<double>& values,
                         const SweepOptions& opts = {}) {
    if (values.empty()) throw invalid_input("sweep: no values");
    for (std::size_t i = 1; i < values.size(); ++i)
        if (!(values[i] > values[i - 1])) throw invalid_input("sweep: values must be strictly increasing");
    if (opts.replicates < 1) throw invalid_input("sweep: replicates must be >= 1");
    // Validate every cell up front so bad grids fail before any work.
    for (double v : values) {
        ExperimentConfig c = detail::apply_sweep_value(base, param, v);
        c.output.clear();
        c.validate();
    }

    SweepResult res;
    res.param = param;
    res.values = values;
    res.cells.resize(values.size() * opts.replicates);
    parallel_for(
        res.cells.size(),
        [&](std::size_t idx) {
            SweepCell& cell = res.cells[idx];
            cell.value = values[idx / opts.replicates];
            cell.replicate = idx % opts.replicates;
            cell.cell_seed = cell_seed(base.seed, param, cell.value, cell.replicate);
            ExperimentConfig c = detail::apply_sweep_value(base, param, cell.value);
            c.seed = cell.cell_seed;
            c.output.clear();
            try {
                const Trajectory traj = run_experiment(c);
                if (traj.metrics.empty()) {
                    cell.status = "failed: no iterations recorded";
                    return;
                }
                plateau_statistics(traj, cell);
                cell.status = to_string(traj.status);
            } catch (const std::exception& e) {
                cell.status = std::string("failed: ") + e.what();
            }
        },
        opts.threads);

    const double sigma1 = base.ds.front();
    std::vector<double> xs, ys;
    bool floor_hit = false;
    for (std::size_t v = 0; v < values.size(); ++v) {
        std::vector<double> sq;
        for (std::size_t r = 0; r < opts.replicates; ++r) {
            const SweepCell& cell = res.cells[v * opts.replicates + r];
            if (cell.status != "ok") continue;
            if (cell.plateau_err_fro < opts.floor_relative * sigma1) floor_hit = true;
            sq.push_back(cell.plateau_err_fro_sq);
        }
        if (sq.empty()) continue;
        xs.push_back(values[v]);
        ys.push_back(median(sq));
    }
    if (floor_hit) {
        res.fit_note = "undefined: plateau at the numerical floor";
    } else if (xs.size() < 2) {
        res.fit_note = "undefined: fewer than two successful grid values";
    } else {
        res.fit = loglog_fit(xs, ys);
    }
    return res;
}

inline constexpr const char* sweep_header = "param,value,cell_seed,plateau_err_fro,plateau_err_fro_sq,D_final,status";

inline void write_sweep_csv(const SweepResult& r, std::ostream& out) {
    out << sweep_header << '\n';
    for (const SweepCell& c : r.cells) {
        std::string status = c.status;
        for (char& ch : status)
            if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
        out << to_string(r.param) << ',' << format_double(c.value) << ',' << c.cell_seed << ','
            << format_double(c.plateau_err_fro) << ',' << format_double(c.plateau_err_fro_sq) << ','
            << format_double(c.D_final) << ',' << status << '\n';
    }
}

inline void write_sweep_csv(const SweepResult& r, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    write_sweep_csv(r, out);
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline nlohmann::json to_json(const SweepResult& r) {
    nlohmann::json j;
    j["param"] = to_string(r.param);
    j["values"] = r.values;
    if (r.fit) {
        j["slope"] = r.fit->slope;
        j["intercept"] = r.fit->intercept;
        j["r2"] = r.fit->r2;
    } else {
        j["slope"] = nullptr;
        j["intercept"] = nullptr;
        j["note"] = r.fit_note;
    }
    return j;
}

} // namespace msense
