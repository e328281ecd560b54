// msense command-line front end.
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "msense/msense.hpp"

namespace {

using namespace msense;

constexpr int exit_ok = 0;
constexpr int exit_validation = 1;
constexpr int exit_numeric = 2;

std::vector<double> parse_values(const std::string& csv) {
    std::vector<double> out;
    for (auto cell : split(csv, ',')) {
        if (cell.empty()) throw invalid_input("empty entry in --values");
        out.push_back(parse_double(cell));
    }
    return out;
}

EnsembleSpec ensemble(const std::string& dist, const std::string& variance) {
    EnsembleSpec e;
    if (dist == "gaussian") e.distribution = Distribution::gaussian;
    else if (dist == "rademacher") e.distribution = Distribution::rademacher;
    else throw invalid_input("--distribution must be gaussian|rademacher");
    if (variance == "unit") e.variance = EntryVariance::unit;
    else if (variance == "isotropic") e.variance = EntryVariance::isotropic;
    else throw invalid_input("--variance must be unit|isotropic");
    return e;
}

SymMatrix random_symmetric(std::size_t d, std::uint64_t seed) {
    CounterRng rng(seed, Stream::operand);
    SymMatrix u(d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) u.set(i, j, rng.normal());
    return u;
}

int cmd_run(const std::string& config_path, const std::string& out, bool timing) {
    ExperimentConfig c = load_config(config_path);
    if (!out.empty()) c.output = out;
    const std::string target = c.output;
    c.output.clear();
    const Trajectory traj = run_experiment(c);
    if (target.empty()) {
        write_trajectory_csv(traj, std::cout, timing);
    } else {
        write_trajectory_csv(traj, target, timing);
        write_config_sidecar(traj, target);
    }
    if (traj.status == RunStatus::diverged) {
        std::cerr << "msense: run diverged: " << traj.message << " (partial trajectory written)\n";
        return exit_numeric;
    }
    return exit_ok;
}

int cmd_sweep(const std::string& config_path, const std::string& param, const std::string& values,
              const std::string& out, std::size_t replicates) {
    ExperimentConfig base = load_config(config_path);
    SweepOptions opts;
    opts.replicates = replicates;
    const SweepResult res = sweep(base, parse_sweep_param(param), parse_values(values), opts);
    write_sweep_csv(res, out);
    const nlohmann::json summary = to_json(res);
    std::ofstream js(out + ".summary.json", std::ios::binary);
    js << summary.dump(2) << '\n';
    std::cout << summary.dump(2) << '\n';
    return exit_ok;
}

int cmd_verify_pop(std::size_t trials, std::uint64_t seed) {
    const GroundTruth gt = generate_ground_truth(20, 3, {1.0, 0.9, 0.8}, std::vector<double>(17, 0.0), seed);
    const double eta = theory_step_size(gt).eta;
    std::array<std::size_t, 8> passed{};
    std::array<std::string, 8> names;
    std::array<double, 8> worst;
    worst.fill(std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < trials; ++i) {
        const Decomposition p = sample_region_point(gt, 4, derive_seed(seed, Stream::region, i));
        const ContractionReport rep = verify_population_contraction(p.S, p.T, gt, eta);
        for (std::size_t c = 0; c < 8; ++c) {
            names[c] = rep.checks[c].name;
            if (rep.checks[c].pass) ++passed[c];
            worst[c] = std::min(worst[c], rep.checks[c].slack());
        }
    }
    nlohmann::json j;
    j["trials"] = trials;
    for (std::size_t c = 0; c < 8; ++c)
        j["checks"][names[c]] = {{"passed", passed[c]}, {"min_slack", worst[c]}};
    std::cout << j.dump(2) << '\n';
    return exit_ok;
}

int cmd_verify_init(std::size_t trials, std::uint64_t seed, double rho) {
    const GroundTruth gt = generate_ground_truth(20, 3, {1.0, 0.9, 0.8}, std::vector<double>(17, 0.0), seed);
    std::size_t premise = 0, assumption = 0, lemma = 0;
    double worst = 0.0;
    for (std::size_t i = 0; i < trials; ++i) {
        const FactorState f = planted_init(gt, 4, rho, derive_seed(seed, Stream::trial, i));
        const InitReport r = check_initialization(f.F, gt, rho);
        premise += r.lemma_premise;
        assumption += r.assumption_ok;
        lemma += r.lemma_ok;
        worst = std::max(worst, std::max({r.ss0, r.tt0, r.st0}) / (rho * gt.sigma_r));
    }
    nlohmann::json j = {{"trials", trials},      {"rho", rho},         {"premise_held", premise},
                        {"assumption_ok", assumption}, {"lemma_ok", lemma}, {"max_norm_over_rho_sigma_r", worst}};
    std::cout << j.dump(2) << '\n';
    return exit_ok;
}

int cmd_conc(const std::string& which, std::size_t d, std::size_t n, std::size_t trials, std::uint64_t seed,
             double sigma, const EnsembleSpec& ens, const std::string& csv) {
    nlohmann::json j;
    if (which == "noise") {
        const MCReport r = mc_noise_term(d, sigma, n, trials, seed, ens);
        if (!csv.empty()) write_trials_csv(r, csv);
        j = to_json(r);
    } else if (which == "deviation") {
        const DeviationReport r = mc_sensing_deviation(random_symmetric(d, seed), n, trials, seed, ens);
        if (!csv.empty()) write_trials_csv(r.mc, csv);
        j = to_json(r);
    } else if (which == "moment") {
        j = to_json(mc_second_moment(random_symmetric(d, seed), trials, seed, ens));
    } else if (which == "asq") {
        j = to_json(mc_A_squared(d, trials, seed, ens));
    } else {
        throw invalid_input("conc: statistic must be noise|deviation|moment|asq");
    }
    std::cout << j.dump(2) << '\n';
    return exit_ok;
}

int cmd_phases(const std::string& traj_path, std::optional<double> eta_override, const std::string& head) {
    const ParsedTrajectory parsed = parse_trajectory_csv(traj_path);
    PhaseInputs in;
    std::ifstream side(traj_path + ".config.json");
    if (side) {
        nlohmann::json j = nlohmann::json::parse(side);
        in.eta = j.value("resolved_eta", 0.0);
        in.sigma = j.value("sigma", 0.0);
        in.sigma1 = j.value("sigma1", 1.0);
    }
    if (eta_override) in.eta = *eta_override;
    if (!(in.eta > 0.0)) throw invalid_input("phases: no step size (missing sidecar; pass --eta)");
    if (head == "ss_err") in.head_metric = HeadMetric::ss_err;
    else if (head == "err_fro") in.head_metric = HeadMetric::err_fro;
    else if (head == "err_spec") in.head_metric = HeadMetric::err_spec;
    else if (head == "D") in.head_metric = HeadMetric::D;
    else throw invalid_input("--head must be ss_err|err_fro|err_spec|D");
    std::cout << to_json(detect_phases(parsed.metrics, in)).dump(2) << '\n';
    return exit_ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Factorized gradient descent laboratory for over-parameterized matrix sensing"};
    app.require_subcommand(1);

    std::string config_path, out, param, values, traj_path, head = "ss_err", dist = "gaussian", variance = "unit";
    std::string csv;
    bool timing = false;
    std::size_t replicates = 1, trials = 100, d = 20, n = 1000;
    std::uint64_t seed = 1;
    double rho = 0.07, sigma = 1.0;
    std::optional<double> eta;

    auto* run = app.add_subcommand("run", "run one FGD experiment");
    run->add_option("--config", config_path, "JSON config")->required();
    run->add_option("--out", out, "trajectory CSV (default: config output, else stdout)");
    run->add_flag("--timing", timing, "fill the elapsed_ms column (breaks byte-identical reruns)");

    auto* sw = app.add_subcommand("sweep", "sweep one parameter");
    sw->add_option("--config", config_path, "JSON config")->required();
    sw->add_option("--param", param, "n|k|sigma|d")->required();
    sw->add_option("--values", values, "comma-separated, strictly increasing")->required();
    sw->add_option("--out", out, "sweep CSV")->required();
    sw->add_option("--replicates", replicates, "runs per grid value");

    auto* verify = app.add_subcommand("verify", "population contraction or initialization checks");
    verify->require_subcommand(1);
    auto* vpop = verify->add_subcommand("pop", "population contraction inequalities on region samples");
    vpop->add_option("--trials", trials);
    vpop->add_option("--seed", seed);
    auto* vinit = verify->add_subcommand("init", "initialization lemma on planted draws");
    vinit->add_option("--trials", trials);
    vinit->add_option("--seed", seed);
    vinit->add_option("--rho", rho);

    auto* conc = app.add_subcommand("conc", "Monte Carlo concentration checks");
    std::string which;
    conc->add_option("statistic", which, "noise|deviation|moment|asq")->required();
    conc->add_option("--d", d);
    conc->add_option("--n", n);
    conc->add_option("--trials", trials);
    conc->add_option("--seed", seed);
    conc->add_option("--sigma", sigma, "noise level (noise only)");
    conc->add_option("--distribution", dist, "gaussian|rademacher");
    conc->add_option("--variance", variance, "unit|isotropic");
    conc->add_option("--csv", csv, "per-trial CSV (noise, deviation)");

    auto* ph = app.add_subcommand("phases", "phase detection on a trajectory CSV");
    ph->add_option("--traj", traj_path, "trajectory CSV")->required();
    ph->add_option("--eta", eta, "step size (default: from <traj>.config.json)");
    ph->add_option("--head", head, "head metric: ss_err|err_fro|err_spec|D");

    auto* fig = app.add_subcommand("figures", "reproduce the figure trajectories and plots");
    fig->add_option("--out", out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_validation;
    }

    try {
        if (run->parsed()) return cmd_run(config_path, out, timing);
        if (sw->parsed()) return cmd_sweep(config_path, param, values, out, replicates);
        if (vpop->parsed()) return cmd_verify_pop(trials, seed);
        if (vinit->parsed()) return cmd_verify_init(trials, seed, rho);
        if (conc->parsed()) return cmd_conc(which, d, n, trials, seed, sigma, ensemble(dist, variance), csv);
        if (ph->parsed()) return cmd_phases(traj_path, eta, head);
        if (fig->parsed()) {
            for (const auto& p : reproduce_figures(out)) std::cout << p << '\n';
            return exit_ok;
        }
    } catch (const invalid_input& e) {
        std::cerr << "msense: " << e.what() << '\n';
        return exit_validation;
    } catch (const numeric_failure& e) {
        std::cerr << "msense: numeric failure: " << e.what() << " (residual " << e.residual() << ")\n";
        return exit_numeric;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "msense: " << e.what() << '\n';
        return exit_validation;
    } catch (const std::exception& e) {
        std::cerr << "msense: " << e.what() << '\n';
        return exit_validation;
    }
    return exit_validation;
}
