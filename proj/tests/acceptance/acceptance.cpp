// Acceptance suite: one pass/fail line per criterion.
//
//   acceptance [--criterion N] [--cli PATH]
//
// Exit 0 when every selected criterion passes, 1 on a failure, 77 when the only failures are
// the two documented in the README as defects of the stated claim (criteria 4 and 8, first part).
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "msense/msense.hpp"

namespace {

using namespace msense;
namespace fs = std::filesystem;

enum class Outcome { pass, fail, known_red };

struct Result {
    Outcome outcome = Outcome::fail;
    std::string detail;
};

std::string g_cli;

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ExperimentConfig desk_config(std::size_t k, std::size_t iters) {
    ExperimentConfig c;  // d=20, r=3, n=200, ds 1/0.9/0.8, dt zeros, sigma 0, eta 0.1, planted rho 0.07
    c.k = k;
    c.iters = iters;
    c.seed = 1;
    return c;
}

std::optional<std::size_t> first_below(const Trajectory& tr, double level) {
    for (const auto& m : tr.metrics)
        if (m.err_fro < level) return m.t;
    return std::nullopt;
}

// 1. exact-rank geometric convergence
Result criterion_1() {
    const auto t0 = std::chrono::steady_clock::now();
    const Trajectory tr = run_experiment(desk_config(3, 5000));
    const double secs = seconds_since(t0);
    const auto hit = first_below(tr, 1e-10);
    std::vector<double> t, e;
    for (const auto& m : tr.metrics) {
        t.push_back(static_cast<double>(m.t));
        e.push_back(m.err_fro);
    }
    const auto w = decreasing_window(e);
    double r2 = 0.0;
    if (w) r2 = log_linear_fit(t, e, w->first, w->second).r2;
    const bool ok = hit && r2 >= 0.99 && secs < 10.0;
    return {ok ? Outcome::pass : Outcome::fail,
            "err_fro<1e-10 at t=" + (hit ? std::to_string(*hit) : std::string("never")) +
                ", R2=" + fmt(r2) + " over t=[" + (w ? std::to_string(w->first) + "," + std::to_string(w->second) : "-") +
                "], runtime " + fmt(secs) + "s"};
}

// 2. over-parameterized slowdown
Result criterion_2() {
    const Trajectory k3 = run_experiment(desk_config(3, 5000));
    const Trajectory k4 = run_experiment(desk_config(4, 5000));
    const auto hit = first_below(k3, 1e-10);
    if (!hit) return {Outcome::fail, "k=3 run never reached 1e-10"};
    const double ratio = k4.metrics[*hit].err_fro / k3.metrics[*hit].err_fro;
    std::size_t dominated = 0, checked = 0;
    for (std::size_t i = k4.metrics.size() / 2; i < k4.metrics.size(); ++i) {
        ++checked;
        if (k4.metrics[i].tt_err >= 0.5 * k4.metrics[i].err_spec) ++dominated;
    }
    const bool ok = ratio >= 1e3 && dominated == checked;
    return {ok ? Outcome::pass : Outcome::fail,
            "at t=" + std::to_string(*hit) + " err_fro(k=4)/err_fro(k=3)=" + fmt(ratio) +
                "; tt_err>=0.5*err_spec on " + std::to_string(dominated) + "/" + std::to_string(checked) +
                " of the final half"};
}

// 3. sublinear envelope and recursion
Result criterion_3() {
    std::ostringstream detail;
    bool ok = true;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        ExperimentConfig c = desk_config(4, 20000);
        c.gradient_mode = GradientMode::population;
        c.eta.reset();  // theory step 1/(100 sigma_1)
        c.seed = seed;
        const Trajectory tr = run_experiment(c);
        const PhaseReport p = detect_phases(tr);
        const bool seed_ok = p.envelope_pass && p.recursion_passed == p.recursion_checked && p.recursion_checked > 0;
        ok = ok && seed_ok;
        detail << "pop seed " << seed << ": envelope " << p.envelope_passed << "/" << p.envelope_checked
               << ", recursion " << p.recursion_passed << "/" << p.recursion_checked << "; ";
    }
    ExperimentConfig s = desk_config(4, 3000);
    const Trajectory tr = run_experiment(s);
    const PhaseReport p = detect_phases(tr);
    ok = ok && p.recursion_pass_rate >= 0.95;
    detail << "sample run recursion pass-rate " << fmt(p.recursion_pass_rate) << " (" << p.recursion_passed << "/"
           << p.recursion_checked << ")";
    return {ok ? Outcome::pass : Outcome::fail, detail.str()};
}

// 4. population contraction inequalities
Result criterion_4() {
    const auto t0 = std::chrono::steady_clock::now();
    const GroundTruth gt = generate_ground_truth(20, 3, {1.0, 0.9, 0.8}, std::vector<double>(17, 0.0), 1);
    const double eta = theory_step_size(gt).eta;
    std::map<std::string, std::size_t> passed;
    std::vector<std::string> order;
    std::size_t all8 = 0;
    constexpr std::size_t trials = 100;
    for (std::size_t i = 0; i < trials; ++i) {
        const Decomposition p = sample_region_point(gt, 4, derive_seed(1, Stream::region, i));
        const ContractionReport rep = verify_population_contraction(p.S, p.T, gt, eta);
        if (rep.all_pass()) ++all8;
        for (const auto& c : rep.checks) {
            if (!passed.count(c.name)) order.push_back(c.name);
            passed[c.name] += c.pass;
        }
    }
    const double secs = seconds_since(t0);
    std::ostringstream d;
    d << all8 << "/" << trials << " samples pass all 8;";
    bool only_documented = true;
    for (const auto& name : order) {
        d << ' ' << name << '=' << passed[name];
        if (passed[name] != trials && name != "pop_b" && name != "more_a" && name != "more_b") only_documented = false;
    }
    d << "; runtime " << fmt(secs) << "s";
    if (all8 == trials && secs < 60.0) return {Outcome::pass, d.str()};
    if (only_documented && secs < 60.0) {
        d << " (failing inequalities are the ones shown false in the README)";
        return {Outcome::known_red, d.str()};
    }
    return {Outcome::fail, d.str()};
}

// 5. initialization lemma
Result criterion_5() {
    const GroundTruth gt = generate_ground_truth(20, 3, {1.0, 0.9, 0.8}, std::vector<double>(17, 0.0), 1);
    constexpr double rho = 0.07;
    std::size_t premise = 0, holds = 0;
    double worst = 0.0;
    for (std::size_t i = 0; i < 200; ++i) {
        const FactorState f = planted_init(gt, 4, rho, derive_seed(5, Stream::trial, i));
        const InitReport r = check_initialization(f.F, gt, rho);
        if (!r.lemma_premise) continue;
        ++premise;
        const double m = std::max({r.ss0, r.tt0, r.st0});
        worst = std::max(worst, m / (rho * gt.sigma_r));
        if (m <= rho * gt.sigma_r) ++holds;
    }
    const bool ok = premise == 200 && holds == 200;
    return {ok ? Outcome::pass : Outcome::fail,
            std::to_string(premise) + " draws met the premise, conclusion held in " + std::to_string(holds) +
                "; max norm / (rho sigma_r) = " + fmt(worst)};
}

// 6. statistical-error scaling
Result criterion_6() {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentConfig c;
    c.d = 10;
    c.r = 2;
    c.k = 3;
    c.sigma = 0.1;
    c.ds = {1.0, 0.9};
    c.eta = 0.1;
    // The plateau is reached only after the extra column has finished fitting the noise,
    // about 1/(eta * noise level) steps; 40000 covers n = 32000. The normal-operator
    // evaluation keeps that affordable.
    c.iters = 40000;
    c.gradient_eval = GradientEval::gram;
    c.seed = 6;
    SweepOptions opts;
    opts.replicates = 3;
    const SweepResult res = sweep(c, SweepParam::n, {2000, 8000, 32000}, opts);
    const double secs = seconds_since(t0);
    std::ostringstream d;
    for (const auto& cell : res.cells)
        if (cell.status != "ok") d << "cell n=" << cell.value << " " << cell.status << "; ";
    if (!res.fit) return {Outcome::fail, d.str() + "slope " + res.fit_note};
    const double slope = res.fit->slope;
    d << "slope " << fmt(slope) << " (R2 " << fmt(res.fit->r2) << "), runtime " << fmt(secs) << "s";
    const bool ok = std::abs(slope + 1.0) <= 0.3 && secs < 600.0;
    return {ok ? Outcome::pass : Outcome::fail, d.str()};
}

// 7. noise-term concentration
Result criterion_7() {
    std::vector<double> ns{100, 1000, 10000}, med;
    std::ostringstream d;
    bool ratios_ok = true;
    for (double n : ns) {
        const MCReport r = mc_noise_term(20, 1.0, static_cast<std::size_t>(n), 50, 7);
        med.push_back(r.median);
        ratios_ok = ratios_ok && r.ratio_median >= 0.5 && r.ratio_median <= 5.0;
        d << "n=" << n << " ratio " << fmt(r.ratio_median) << "; ";
    }
    const LinearFit f = loglog_fit(ns, med);
    d << "slope " << fmt(f.slope);
    const bool ok = ratios_ok && std::abs(f.slope + 0.5) <= 0.1;
    return {ok ? Outcome::pass : Outcome::fail, d.str()};
}

// 8. second-moment closed form and E[A^2]
Result criterion_8() {
    CounterRng rng(8, Stream::operand);
    SymMatrix u(5);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = i; j < 5; ++j) u.set(i, j, rng.normal());
    const MomentReport mom = mc_second_moment(u, 100000, 8);
    const MomentReport asq = mc_A_squared(20, 10000, 8);
    const bool a_ok = mom.max_abs_z_stated <= 3.0;
    const bool b_ok = asq.max_abs_z_stated <= 3.0;
    std::ostringstream d;
    d << "second moment vs stated form: max|z|=" << fmt(mom.max_abs_z_stated) << (a_ok ? " ok" : " FAIL")
      << " (exact Gaussian form: max|z|=" << fmt(*mom.max_abs_z_exact) << "); E[A^2] vs dI: max|z|="
      << fmt(asq.max_abs_z_stated) << (b_ok ? " ok" : " FAIL");
    if (a_ok && b_ok) return {Outcome::pass, d.str()};
    // The stated closed form is wrong for d > 1 (README). Only that part may be red, and only
    // while the exact form confirms the estimator.
    if (!a_ok && b_ok && *mom.max_abs_z_exact <= 4.0) return {Outcome::known_red, d.str()};
    return {Outcome::fail, d.str()};
}

// 9. gradient correctness
Result criterion_9() {
    std::size_t fd_ok = 0, id_ok = 0;
    double worst_rel = 0.0, worst_id = 0.0;
    for (std::uint64_t inst = 0; inst < 20; ++inst) {
        const std::size_t d = 4 + inst % 4, r = 1 + inst % 3, k = r + inst % 3;
        std::vector<double> ds;
        for (std::size_t i = 0; i < r; ++i) ds.push_back(1.0 - 0.1 * static_cast<double>(i));
        const GroundTruth gt = generate_ground_truth(d, r, ds, std::vector<double>(d - r, 0.0), 900 + inst);
        const SensingSet s(gt, 30 + 5 * inst, 0.1, inst % 2 ? Distribution::rademacher : Distribution::gaussian,
                           900 + inst);
        const Matrix F = random_init(d, k, 0.7, 900 + inst).F;
        const Matrix g = sample_gradient(F, s);
        bool inst_fd = true;
        constexpr double h = 1e-5;
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
                Matrix fp = F, fm = F;
                fp(i, j) += h;
                fm(i, j) -= h;
                const double fd = (sensing_loss(fp, s) - sensing_loss(fm, s)) / (2.0 * h);
                const double err = std::abs(fd - g(i, j));
                const double allowed = 1e-5 * std::abs(g(i, j)) + 1e-10;
                if (err > allowed) inst_fd = false;
                worst_rel = std::max(worst_rel, err / allowed);
            }
        }
        fd_ok += inst_fd;
        const Matrix lhs = g - population_gradient(F, gt);
        const Matrix rhs = deviation_matrix(F, gt, s).matrix() * F;
        const double id = frobenius_norm(lhs - rhs);
        worst_id = std::max(worst_id, id);
        id_ok += id < 1e-10;
    }
    const bool ok = fd_ok == 20 && id_ok == 20;
    return {ok ? Outcome::pass : Outcome::fail,
            "finite differences agree on " + std::to_string(fd_ok) + "/20 (worst error " + fmt(worst_rel) +
                " of tolerance); identity holds on " + std::to_string(id_ok) + "/20 (worst " + fmt(worst_id) + ")"};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

int sh(const std::string& cmd) { return std::system(cmd.c_str()); }

// 10. determinism
Result criterion_10() {
    if (g_cli.empty()) return {Outcome::fail, "no --cli given"};
    const fs::path dir = fs::temp_directory_path() / ("msense_acc10_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    const fs::path cfg = dir / "run.json";
    std::ofstream(cfg) << R"({"d": 12, "r": 2, "k": 3, "n": 150, "sigma": 0.05, "ds": [1.0, 0.8],
                             "eta": 0.1, "iters": 300, "seed": 42, "track_delta": true, "delta_every": 7})";
    const std::string cli = "\"" + g_cli + "\"";
    const int a = sh(cli + " run --config " + cfg.string() + " --out " + (dir / "a.csv").string());
    const int b = sh(cli + " run --config " + cfg.string() + " --out " + (dir / "b.csv").string());
    const bool runs_same = a == 0 && b == 0 && slurp(dir / "a.csv") == slurp(dir / "b.csv") &&
                           !slurp(dir / "a.csv").empty();
    const std::size_t max_threads = std::max<std::size_t>(4, std::thread::hardware_concurrency());
    const std::string sweep_args = " sweep --config " + cfg.string() + " --param n --values 60,120,240,480 --replicates 2";
    const int s1 = sh("MSENSE_THREADS=1 " + cli + sweep_args + " --out " + (dir / "s1.csv").string() + " > /dev/null");
    const int sN = sh("MSENSE_THREADS=" + std::to_string(max_threads) + " " + cli + sweep_args + " --out " +
                      (dir / "sN.csv").string() + " > /dev/null");
    const bool sweeps_same = s1 == 0 && sN == 0 && slurp(dir / "s1.csv") == slurp(dir / "sN.csv") &&
                             !slurp(dir / "s1.csv").empty();
    fs::remove_all(dir);
    return {runs_same && sweeps_same ? Outcome::pass : Outcome::fail,
            std::string("repeated run CSVs ") + (runs_same ? "identical" : "DIFFER") + "; sweep at 1 vs " +
                std::to_string(max_threads) + " threads " + (sweeps_same ? "identical" : "DIFFER")};
}

const std::vector<std::pair<std::string, std::function<Result()>>> criteria = {
    {"exact-rank geometric convergence", criterion_1},
    {"over-parameterized slowdown", criterion_2},
    {"sublinear envelope and recursion", criterion_3},
    {"population contraction inequalities", criterion_4},
    {"initialization lemma", criterion_5},
    {"statistical-error scaling", criterion_6},
    {"noise-term concentration", criterion_7},
    {"second-moment closed form and E[A^2]", criterion_8},
    {"gradient correctness", criterion_9},
    {"determinism", criterion_10},
};

} // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--criterion" && i + 1 < argc) only = std::atoi(argv[++i]);
        else if (a == "--cli" && i + 1 < argc) g_cli = argv[++i];
        else {
            std::cerr << "usage: acceptance [--criterion N] [--cli PATH]\n";
            return 2;
        }
    }
    bool any_fail = false, any_red = false;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i + 1);
        if (only != 0 && only != id) continue;
        Result r;
        try {
            r = criteria[i].second();
        } catch (const std::exception& e) {
            r = {Outcome::fail, std::string("exception: ") + e.what()};
        }
        const char* tag = r.outcome == Outcome::pass ? "PASS" : "FAIL";
        std::cout << "criterion " << id << " [" << tag << "] " << criteria[i].first << ": " << r.detail
                  << (r.outcome == Outcome::known_red ? " [known red]" : "") << std::endl;
        any_fail = any_fail || r.outcome == Outcome::fail;
        any_red = any_red || r.outcome == Outcome::known_red;
    }
    if (any_fail) return 1;
    return any_red ? 77 : 0;
}
