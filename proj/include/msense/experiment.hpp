#pragma once

#include <chrono>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "config.hpp"
#include "error.hpp"
#include "format.hpp"
#include "gradient.hpp"
#include "linalg.hpp"
#include "problem.hpp"
#include "subspace.hpp"

namespace msense {

enum class RunStatus { ok, diverged };

inline const char* to_string(RunStatus s) { return s == RunStatus::ok ? "ok" : "diverged"; }

struct Trajectory {
    ExperimentConfig config;
    double eta = 0.0;          // resolved step size
    double sigma1 = 0.0;
    double sigma_r = 0.0;
    DerivedScales scales;
    std::vector<IterateMetrics> metrics;
    std::vector<double> elapsed_ms;
    RunStatus status = RunStatus::ok;
    std::string message;
};

/// Divergence guard: err_spec above this multiple of sigma_1 stops the run.
inline constexpr double divergence_multiple = 1e6;

inline FactorState initial_factor(const ExperimentConfig& c, const GroundTruth& gt,
                                  const SensingSet* s) {
    switch (c.init.mode) {
    case InitMode::planted: return planted_init(gt, c.k, c.init.rho, c.seed);
    case InitMode::random: return random_init(c.d, c.k, c.init.scale, c.seed);
    case InitMode::spectral:
        if (!s) throw invalid_input("config field 'init.mode': spectral init needs the sample gradient mode");
        return spectral_init(*s, c.k);
    }
    throw invalid_input("config field 'init.mode': unknown");
}

inline void write_trajectory_csv(const Trajectory& traj, const std::string& path, bool include_timing = false);
inline void write_config_sidecar(const Trajectory& traj, const std::string& csv_path);

/// Builds the problem, runs FGD for config.iters steps and records metrics at t = 0..iters.
/// Divergence ends the run early with status `diverged` and the partial trajectory.
inline Trajectory run_experiment(const ExperimentConfig& config) {
    using clock = std::chrono::steady_clock;
    config.validate();
    const GroundTruth gt = generate_ground_truth(config.d, config.r, config.ds, config.dt_values(), config.seed);

    std::unique_ptr<SensingSet> sensing;
    if (config.gradient_mode == GradientMode::sample)
        sensing = std::make_unique<SensingSet>(gt, config.n, config.sigma, config.distribution, config.seed,
                                               SensingOptions{config.entry_variance, config.memory_mode});

    std::unique_ptr<SensingOperator> op;
    if (sensing && config.gradient_eval == GradientEval::gram) op = std::make_unique<SensingOperator>(*sensing);

    Trajectory traj;
    traj.config = config;
    traj.eta = config.eta ? *config.eta : theory_step_size(gt).eta;
    traj.sigma1 = gt.sigma1;
    traj.sigma_r = gt.sigma_r;
    traj.scales = derived_scales(gt, config.n, config.k, config.sigma);
    traj.metrics.reserve(config.iters + 1);
    traj.elapsed_ms.reserve(config.iters + 1);

    FactorState state = initial_factor(config, gt, sensing.get());
    const StepSize step{traj.eta, config.eta ? StepMode::explicit_value : StepMode::theory};
    const double limit = divergence_multiple * gt.sigma1;

    for (std::size_t t = 0; t <= config.iters; ++t) {
        const auto start = clock::now();
        if (!state.F.all_finite()) {
            traj.status = RunStatus::diverged;
            traj.message = "non-finite factor at iteration " + std::to_string(t);
            break;
        }
        const Matrix grad = op        ? sample_gradient(state.F, *op)
                            : sensing ? sample_gradient(state.F, *sensing)
                                      : population_gradient(state.F, gt);
        if (!grad.all_finite()) {
            traj.status = RunStatus::diverged;
            traj.message = "non-finite gradient at iteration " + std::to_string(t);
            break;
        }
        MetricsOptions mo;
        mo.t = t;
        mo.track_delta = config.track_delta && t % config.delta_every == 0;
        mo.grad_norm = frobenius_norm(grad);
        mo.floor_multiple = config.floor_multiple;
        if (mo.track_delta && op) mo.delta_norm = spectral_norm(deviation_matrix(state.F, gt, *op));
        IterateMetrics m = compute_metrics(state.F, gt, traj.scales, sensing.get(), mo);
        const bool blown = m.err_spec > limit;
        traj.metrics.push_back(m);
        if (blown) {
            traj.elapsed_ms.push_back(std::chrono::duration<double, std::milli>(clock::now() - start).count());
            traj.status = RunStatus::diverged;
            traj.message = "err_spec exceeded 1e6 * sigma_1 at iteration " + std::to_string(t);
            break;
        }
        if (t < config.iters) state = fgd_step(state, grad, step);
        traj.elapsed_ms.push_back(std::chrono::duration<double, std::milli>(clock::now() - start).count());
    }

    if (!config.output.empty()) {
        write_trajectory_csv(traj, config.output);
        write_config_sidecar(traj, config.output);
    }
    return traj;
}

inline constexpr const char* trajectory_header =
    "t,ss_err,st_norm,tt_norm,tt_err,D,A,err_spec,err_fro,grad_norm,delta_norm,elapsed_ms";

/// The elapsed_ms cell stays empty unless timing is requested, so that repeated runs of the
/// same config are byte-identical.
inline void write_trajectory_csv(const Trajectory& traj, std::ostream& out, bool include_timing = false) {
    out << trajectory_header << '\n';
    for (std::size_t i = 0; i < traj.metrics.size(); ++i) {
        const IterateMetrics& m = traj.metrics[i];
        out << m.t << ',' << format_double(m.ss_err) << ',' << format_double(m.st_norm) << ','
            << format_double(m.tt_norm) << ',' << format_double(m.tt_err) << ',' << format_double(m.D) << ','
            << format_double(m.A) << ',' << format_double(m.err_spec) << ',' << format_double(m.err_fro) << ','
            << format_double(m.grad_norm) << ',' << format_optional(m.delta_norm) << ',';
        if (include_timing && i < traj.elapsed_ms.size()) out << format_double(traj.elapsed_ms[i]);
        out << '\n';
    }
}

inline void write_trajectory_csv(const Trajectory& traj, const std::string& path, bool include_timing) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    write_trajectory_csv(traj, out, include_timing);
    if (!out) throw std::runtime_error("write failed: " + path);
}

/// `<csv>.config.json`: the config with the resolved step size, read back by `phases`.
inline void write_config_sidecar(const Trajectory& traj, const std::string& csv_path) {
    nlohmann::json j = config_to_json(traj.config);
    j["resolved_eta"] = traj.eta;
    j["sigma1"] = traj.sigma1;
    j["sigma_r"] = traj.sigma_r;
    j["eps_stat"] = traj.scales.eps_stat;
    j["eps_comp"] = traj.scales.eps_comp;
    j["status"] = to_string(traj.status);
    const std::string path = csv_path + ".config.json";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
}

struct ParsedTrajectory {
    std::vector<IterateMetrics> metrics;
    std::vector<std::optional<double>> elapsed_ms;
};

inline ParsedTrajectory parse_trajectory_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != trajectory_header)
        throw invalid_input("trajectory CSV: unexpected header");
    ParsedTrajectory out;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() != 12)
            throw invalid_input("trajectory CSV row " + std::to_string(row) + ": expected 12 cells");
        IterateMetrics m;
        const double t = parse_double(cells[0]);
        if (!(t >= 0.0) || t != std::floor(t))
            throw invalid_input("trajectory CSV row " + std::to_string(row) + ": bad t");
        m.t = static_cast<std::size_t>(t);
        m.ss_err = parse_double(cells[1]);
        m.st_norm = parse_double(cells[2]);
        m.tt_norm = parse_double(cells[3]);
        m.tt_err = parse_double(cells[4]);
        m.D = parse_double(cells[5]);
        m.A = parse_double(cells[6]);
        m.err_spec = parse_double(cells[7]);
        m.err_fro = parse_double(cells[8]);
        m.grad_norm = parse_double(cells[9]);
        if (!cells[10].empty()) m.delta_norm = parse_double(cells[10]);
        out.elapsed_ms.push_back(cells[11].empty() ? std::nullopt : std::optional<double>(parse_double(cells[11])));
        if (!out.metrics.empty() && m.t <= out.metrics.back().t)
            throw invalid_input("trajectory CSV row " + std::to_string(row) + ": t must increase");
        out.metrics.push_back(m);
    }
    return out;
}

inline ParsedTrajectory parse_trajectory_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw invalid_input("cannot read trajectory " + path);
    return parse_trajectory_csv(in);
}

} // namespace msense
