#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "experiment.hpp"
#include "stats.hpp"
#include "subspace.hpp"

namespace msense {

enum class HeadMetric { ss_err, err_fro, err_spec, D };

inline double head_value(const IterateMetrics& m, HeadMetric h) {
    switch (h) {
    case HeadMetric::ss_err: return m.ss_err;
    case HeadMetric::err_fro: return m.err_fro;
    case HeadMetric::err_spec: return m.err_spec;
    case HeadMetric::D: return m.D;
    }
    return m.ss_err;
}

struct PhaseInputs {
    double eta = 0.0;
    double sigma = 0.0;    // noise level of the run; selects D (0) or A (> 0) for the tail
    double sigma1 = 1.0;   // sets the rounding allowance of the recursion/envelope checks
    HeadMetric head_metric = HeadMetric::ss_err;
    double burn_in_fraction = 0.05;
    double tail_fraction = 0.5;
};

struct PhaseReport {
    bool head_applicable = false;
    std::size_t head_t0 = 0;
    std::size_t head_t1 = 0;
    double head_slope = 0.0;
    double head_r2 = 0.0;

    bool tail_applicable = false;
    std::string tail_metric;  // "D" or "A"
    double tail_c = 0.0;
    double tail_residual = 0.0;

    std::size_t recursion_checked = 0;
    std::size_t recursion_passed = 0;
    double recursion_pass_rate = 1.0;

    std::size_t envelope_checked = 0;
    std::size_t envelope_passed = 0;
    bool envelope_pass = true;
};

/// Absolute slack granted to the recursion and envelope checks for rounding in the metrics.
inline double rounding_allowance(double sigma1) { return 1e-12 * sigma1; }

/// First maximal run [lo, hi] (row indices) over which the series strictly decreases while
/// staying positive. nullopt when no two consecutive rows decrease.
inline std::optional<std::pair<std::size_t, std::size_t>> decreasing_window(const std::vector<double>& x) {
    std::size_t lo = 0;
    while (lo + 1 < x.size() && !(x[lo] > 0.0 && x[lo + 1] > 0.0 && x[lo + 1] < x[lo])) ++lo;
    if (lo + 1 >= x.size()) return std::nullopt;
    std::size_t hi = lo + 1;
    while (hi + 1 < x.size() && x[hi + 1] > 0.0 && x[hi + 1] < x[hi]) ++hi;
    return std::make_pair(lo, hi);
}

/// Least-squares fit of log(x) against t over rows [lo, hi].
inline LinearFit log_linear_fit(const std::vector<double>& t, const std::vector<double>& x, std::size_t lo,
                                std::size_t hi) {
    std::vector<double> tt, lx;
    for (std::size_t i = lo; i <= hi; ++i) {
        tt.push_back(t[i]);
        lx.push_back(std::log(x[i]));
    }
    return linear_fit(tt, lx);
}

namespace detail {

/// Chooses the head/tail boundary inside the decreasing window by maximizing the
/// size-weighted R^2 of a log-linear head and a log-log tail. Ties go to the later split.
inline std::size_t choose_split(const std::vector<double>& t, const std::vector<double>& x, std::size_t lo,
                                std::size_t hi) {
    const std::size_t len = hi - lo + 1;
    const std::size_t min_len = std::max<std::size_t>(5, len / 20);
    if (len < 2 * min_len) return hi;
    constexpr std::size_t grid = 20;
    double best = -1.0;
    std::size_t best_split = hi;
    for (std::size_t g = 0; g <= grid; ++g) {
        const std::size_t s = lo + min_len + (len - min_len - 1) * g / grid;
        const double nh = static_cast<double>(s - lo + 1);
        double score = log_linear_fit(t, x, lo, s).r2;
        if (hi - s + 1 >= min_len && t[s] > 0.0) {
            std::vector<double> lt, lx;
            for (std::size_t i = s; i <= hi; ++i) {
                lt.push_back(std::log(t[i]));
                lx.push_back(std::log(x[i]));
            }
            const double nt = static_cast<double>(hi - s + 1);
            score = (nh * score + nt * linear_fit(lt, lx).r2) / (nh + nt);
        }
        if (score >= best) {
            best = score;
            best_split = s;
        }
    }
    return best_split;
}

} // namespace detail

inline PhaseReport detect_phases(const std::vector<IterateMetrics>& m, const PhaseInputs& in) {
    if (m.size() < 50) throw invalid_input("detect_phases: trajectory needs at least 50 rows");
    if (!(in.eta > 0.0)) throw invalid_input("detect_phases: eta must be positive");

    PhaseReport rep;
    std::vector<double> t(m.size()), head(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        t[i] = static_cast<double>(m[i].t);
        head[i] = head_value(m[i], in.head_metric);
    }
    const auto [hmin, hmax] = std::minmax_element(head.begin(), head.end());
    const bool degenerate = *hmin == *hmax;

    if (!degenerate) {
        if (auto w = decreasing_window(head); w && w->second - w->first + 1 >= 3) {
            const std::size_t split = detail::choose_split(t, head, w->first, w->second);
            const LinearFit f = log_linear_fit(t, head, w->first, split);
            rep.head_applicable = true;
            rep.head_t0 = m[w->first].t;
            rep.head_t1 = m[split].t;
            rep.head_slope = f.slope;
            rep.head_r2 = f.r2;
        }
    }

    const bool noisy = in.sigma > 0.0;
    rep.tail_metric = noisy ? "A" : "D";
    const std::size_t tail_start = m.size() - static_cast<std::size_t>(std::ceil(in.tail_fraction * m.size()));
    double num = 0.0, den = 0.0, yy = 0.0;
    std::vector<double> tail;
    for (std::size_t i = tail_start; i < m.size(); ++i) {
        if (m[i].t == 0) continue;
        const double y = noisy ? m[i].A : m[i].D;
        const double tt = static_cast<double>(m[i].t);
        num += y / tt;
        den += 1.0 / (tt * tt);
        yy += y * y;
        tail.push_back(y);
    }
    const bool tail_constant = tail.empty() || *std::min_element(tail.begin(), tail.end()) ==
                                                   *std::max_element(tail.begin(), tail.end());
    if (!degenerate && !tail_constant && yy > 0.0 && den > 0.0) {
        rep.tail_applicable = true;
        rep.tail_c = num / den;
        double sse = 0.0;
        for (std::size_t i = tail_start; i < m.size(); ++i) {
            if (m[i].t == 0) continue;
            const double e = (noisy ? m[i].A : m[i].D) - rep.tail_c / static_cast<double>(m[i].t);
            sse += e * e;
        }
        rep.tail_residual = std::sqrt(sse / yy);
    }

    const double tol = rounding_allowance(in.sigma1);
    for (std::size_t i = 0; i + 1 < m.size(); ++i) {
        if (m[i + 1].t != m[i].t + 1 || !(m[i].A > 0.0)) continue;
        ++rep.recursion_checked;
        if (m[i + 1].A <= (1.0 - 0.5 * in.eta * m[i].A) * m[i].A + tol) ++rep.recursion_passed;
    }
    if (rep.recursion_checked > 0)
        rep.recursion_pass_rate = static_cast<double>(rep.recursion_passed) / static_cast<double>(rep.recursion_checked);

    const double a0 = m.front().A;
    const double burn = std::ceil(in.burn_in_fraction * static_cast<double>(m.back().t));
    for (const IterateMetrics& row : m) {
        const double tt = static_cast<double>(row.t);
        if (row.t == 0 || tt < burn) continue;
        const double bound = a0 > 0.0 ? 4.0 / (in.eta * tt + 4.0 / a0) : 0.0;
        ++rep.envelope_checked;
        if (row.A <= bound + tol) ++rep.envelope_passed;
    }
    rep.envelope_pass = rep.envelope_passed == rep.envelope_checked;
    return rep;
}

inline PhaseInputs phase_inputs(const Trajectory& traj, HeadMetric head = HeadMetric::ss_err) {
    PhaseInputs in;
    in.eta = traj.eta;
    in.sigma = traj.config.sigma;
    in.sigma1 = traj.sigma1;
    in.head_metric = head;
    return in;
}

inline PhaseReport detect_phases(const Trajectory& traj, HeadMetric head = HeadMetric::ss_err) {
    return detect_phases(traj.metrics, phase_inputs(traj, head));
}

inline nlohmann::json to_json(const PhaseReport& r) {
    nlohmann::json j;
    j["head"] = {{"applicable", r.head_applicable},
                 {"t0", r.head_t0},
                 {"t1", r.head_t1},
                 {"slope", r.head_slope},
                 {"r2", r.head_r2}};
    j["tail"] = {{"applicable", r.tail_applicable},
                 {"metric", r.tail_metric},
                 {"c", r.tail_c},
                 {"relative_residual", r.tail_residual}};
    j["recursion"] = {{"checked", r.recursion_checked},
                      {"passed", r.recursion_passed},
                      {"pass_rate", r.recursion_pass_rate}};
    j["envelope"] = {{"checked", r.envelope_checked}, {"passed", r.envelope_passed}, {"pass", r.envelope_pass}};
    return j;
}

/// Counts of verify_sample_contraction outcomes over consecutive rows with a tracked delta.
struct SampleContractionSummary {
    std::size_t pairs = 0;
    std::size_t hypothesis_held = 0;
    std::array<std::array<std::size_t, 4>, 3> counts{};  // [check][CheckStatus]
};

inline SampleContractionSummary summarize_sample_contraction(const Trajectory& traj) {
    const ExperimentConfig& c = traj.config;
    SampleContractionParams p;
    p.eta = traj.eta;
    p.sigma = c.sigma;
    p.n = c.n;
    p.d = c.d;
    p.k = c.k;
    p.sigma_r = traj.sigma_r;
    p.floor_multiple = c.floor_multiple;
    p.delta_d_coeff = c.delta_d_coeff;
    p.delta_sigma_coeff = c.delta_sigma_coeff;
    SampleContractionSummary s;
    for (std::size_t i = 0; i + 1 < traj.metrics.size(); ++i) {
        const IterateMetrics& a = traj.metrics[i];
        const IterateMetrics& b = traj.metrics[i + 1];
        if (!a.delta_norm || b.t != a.t + 1) continue;
        const SampleContractionReport r = verify_sample_contraction(a, b, traj.scales, p);
        ++s.pairs;
        if (r.hypothesis_held) ++s.hypothesis_held;
        for (std::size_t k = 0; k < r.checks.size(); ++k) ++s.counts[k][static_cast<std::size_t>(r.checks[k].status)];
    }
    return s;
}

} // namespace msense
