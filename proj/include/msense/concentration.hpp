#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "format.hpp"
#include "linalg.hpp"
#include "matrix.hpp"
#include "parallel.hpp"
#include "problem.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace msense {

struct EnsembleSpec {
    Distribution distribution = Distribution::gaussian;
    EntryVariance variance = EntryVariance::unit;
};

/// Per-trial values of one norm statistic and their summary against a reference rate.
struct MCReport {
    std::string statistic;
    std::size_t trials = 0;
    std::size_t samples_per_trial = 0;
    std::vector<double> values;
    double median = 0.0;
    double mean = 0.0;
    double std_error = 0.0;
    double reference_scale = 0.0;
    double ratio_median = 0.0;

    /// Fraction of trials whose value exceeds `threshold`. Descriptive only.
    double exceedance(double threshold) const {
        if (values.empty()) return 0.0;
        const auto hits = std::count_if(values.begin(), values.end(),
                                        [&](double v) { return v > threshold; });
        return static_cast<double>(hits) / static_cast<double>(values.size());
    }
};

namespace detail {

inline void summarize(MCReport& rep) {
    rep.median = median(rep.values);
    rep.mean = mean(rep.values);
    rep.std_error = standard_error(rep.values);
    rep.ratio_median = rep.reference_scale > 0.0 ? rep.median / rep.reference_scale : 0.0;
}

inline std::uint64_t trial_seed(std::uint64_t seed, std::size_t trial) {
    return derive_seed(seed, Stream::trial, trial);
}

/// sum_{i in [lo,hi)} f(i), accumulated with the same fixed pairwise tree as the gradient.
template <class Fn>
void pairwise_matrix_sum(std::size_t lo, std::size_t hi, Fn& f, Matrix& out) {
    constexpr std::size_t leaf = 16;
    if (hi - lo <= leaf) {
        for (std::size_t i = lo; i < hi; ++i) f(i, out);
        return;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    Matrix right(out.rows(), out.cols());
    pairwise_matrix_sum(lo, mid, f, out);
    pairwise_matrix_sum(mid, hi, f, right);
    out += right;
}

inline void require_counts(std::size_t n, std::size_t trials, const char* op) {
    if (n == 0 || trials == 0) throw invalid_input(std::string(op) + ": counts must be positive");
}

} // namespace detail

/// E[<A,U>A] for the chosen entry variance: diag(U) + 2v offdiag(U).
inline Matrix sensing_expectation(const SymMatrix& U, EntryVariance variance) {
    const double v = offdiag_variance(variance);
    Matrix b = U.matrix();
    for (std::size_t i = 0; i < b.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j)
            if (i != j) b(i, j) *= 2.0 * v;
    return b;
}

/// ||(1/n) sum_i eps_i A_i|| against sqrt(d sigma^2 / n), fresh draws per trial.
inline MCReport mc_noise_term(std::size_t d, double sigma, std::size_t n, std::size_t trials,
                              std::uint64_t seed, EnsembleSpec ens = {}) {
    detail::require_counts(n, trials, "mc_noise_term");
    if (d == 0) throw invalid_input("mc_noise_term: d must be positive");
    if (!(sigma >= 0.0) || !std::isfinite(sigma))
        throw invalid_input("mc_noise_term: sigma must be finite and >= 0");

    MCReport rep;
    rep.statistic = "noise_term";
    rep.trials = trials;
    rep.samples_per_trial = n;
    rep.values.assign(trials, 0.0);
    rep.reference_scale = std::sqrt(static_cast<double>(d) * sigma * sigma / static_cast<double>(n));

    parallel_for(trials, [&](std::size_t t) {
        const std::uint64_t ts = detail::trial_seed(seed, t);
        std::vector<double> eps(n);
        CounterRng noise(ts, Stream::noise);
        for (double& e : eps) e = sigma * noise.normal();
        auto term = [&](std::size_t i, Matrix& acc) {
            const SymMatrix a = draw_sensing_matrix(d, ts, i, ens.distribution, ens.variance);
            acc.add_scaled(a.matrix(), eps[i]);
        };
        Matrix acc(d, d);
        detail::pairwise_matrix_sum(0, n, term, acc);
        acc *= 1.0 / static_cast<double>(n);
        rep.values[t] = spectral_norm(SymMatrix(std::move(acc)));
    });
    detail::summarize(rep);
    return rep;
}

struct DeviationReport {
    MCReport mc;
    Matrix mean;       // average of <A,U>A over trials * n draws
    Matrix std_error;  // per-entry standard error of that average
    Matrix expected;   // sensing_expectation(U, variance)
};

/// ||(1/n) sum_i (<A_i,U>A_i - U)|| against sqrt(d log d / n) ||U||_F.
inline DeviationReport mc_sensing_deviation(const SymMatrix& U, std::size_t n, std::size_t trials,
                                            std::uint64_t seed, EnsembleSpec ens = {}) {
    detail::require_counts(n, trials, "mc_sensing_deviation");
    const double u_fro = frobenius_norm(U.matrix());
    if (!(u_fro > 0.0)) throw invalid_input("mc_sensing_deviation: U must be nonzero");
    const std::size_t d = U.dim();

    DeviationReport out;
    MCReport& rep = out.mc;
    rep.statistic = "sensing_deviation";
    rep.trials = trials;
    rep.samples_per_trial = n;
    rep.values.assign(trials, 0.0);
    const double dd = static_cast<double>(d);
    rep.reference_scale = std::sqrt(dd * std::log(std::max(dd, 2.0)) / static_cast<double>(n)) * u_fro;

    std::vector<Matrix> sums(trials), squares(trials);
    parallel_for(trials, [&](std::size_t t) {
        const std::uint64_t ts = detail::trial_seed(seed, t);
        Matrix sum(d, d), sq(d, d);
        auto term = [&](std::size_t i, Matrix& acc) {
            const SymMatrix a = draw_sensing_matrix(d, ts, i, ens.distribution, ens.variance);
            acc.add_scaled(a.matrix(), inner_product(a, U));
        };
        detail::pairwise_matrix_sum(0, n, term, sum);
        auto term_sq = [&](std::size_t i, Matrix& acc) {
            const SymMatrix a = draw_sensing_matrix(d, ts, i, ens.distribution, ens.variance);
            const double w = inner_product(a, U);
            const auto src = a.matrix().data();
            auto dst = acc.data();
            for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += (w * src[e]) * (w * src[e]);
        };
        detail::pairwise_matrix_sum(0, n, term_sq, sq);
        Matrix avg = sum * (1.0 / static_cast<double>(n));
        avg -= U.matrix();
        rep.values[t] = spectral_norm(SymMatrix(std::move(avg)));
        sums[t] = std::move(sum);
        squares[t] = std::move(sq);
    });
    detail::summarize(rep);

    const double total = static_cast<double>(n) * static_cast<double>(trials);
    Matrix s(d, d), q(d, d);
    for (std::size_t t = 0; t < trials; ++t) {
        s += sums[t];
        q += squares[t];
    }
    out.mean = s * (1.0 / total);
    out.std_error = Matrix(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double m = out.mean(i, j);
            const double var = total > 1.0 ? std::max(0.0, (q(i, j) - total * m * m) / (total - 1.0)) : 0.0;
            out.std_error(i, j) = std::sqrt(var / total);
        }
    }
    out.expected = sensing_expectation(U, ens.variance);
    return out;
}

/// Monte Carlo estimate of a matrix-valued moment compared against closed forms.
struct MomentReport {
    std::string statistic;
    std::size_t trials = 0;
    Matrix estimate;
    Matrix std_error;
    Matrix stated_form;
    Matrix stated_z;
    double max_abs_z_stated = 0.0;
    std::optional<Matrix> exact_form;
    std::optional<Matrix> exact_z;
    std::optional<double> max_abs_z_exact;
};

namespace detail {

inline Matrix z_scores(const Matrix& est, const Matrix& se, const Matrix& form, double& max_abs) {
    Matrix z(est.rows(), est.cols());
    max_abs = 0.0;
    for (std::size_t i = 0; i < est.rows(); ++i) {
        for (std::size_t j = 0; j < est.cols(); ++j) {
            const double diff = est(i, j) - form(i, j);
            double v = 0.0;
            if (se(i, j) > 0.0) {
                v = diff / se(i, j);
            } else if (std::abs(diff) > 1e-12 * std::max(1.0, std::abs(form(i, j)))) {
                v = std::copysign(std::numeric_limits<double>::infinity(), diff);
            }
            z(i, j) = v;
            max_abs = std::max(max_abs, std::abs(v));
        }
    }
    return z;
}

/// Mean and standard error of g(A_j) over `trials` independent draws, chunked so the sum
/// order is fixed by draw index regardless of the worker count.
template <class Fn>
void moment_estimate(std::size_t d, std::size_t trials, std::uint64_t seed, EnsembleSpec ens,
                     Fn g, Matrix& mean_out, Matrix& se_out) {
    constexpr std::size_t chunk = 1024;
    const std::size_t chunks = (trials + chunk - 1) / chunk;
    std::vector<Matrix> sums(chunks), squares(chunks);
    parallel_for(chunks, [&](std::size_t c) {
        Matrix s(d, d), q(d, d);
        const std::size_t hi = std::min(trials, (c + 1) * chunk);
        for (std::size_t j = c * chunk; j < hi; ++j) {
            const SymMatrix a = draw_sensing_matrix(d, seed, j, ens.distribution, ens.variance);
            const Matrix z = g(a);
            s += z;
            const auto src = z.data();
            auto dst = q.data();
            for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += src[e] * src[e];
        }
        sums[c] = std::move(s);
        squares[c] = std::move(q);
    });
    Matrix s(d, d), q(d, d);
    for (std::size_t c = 0; c < chunks; ++c) {
        s += sums[c];
        q += squares[c];
    }
    const double n = static_cast<double>(trials);
    mean_out = s * (1.0 / n);
    se_out = Matrix(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double m = mean_out(i, j);
            const double var = n > 1.0 ? std::max(0.0, (q(i, j) - n * m * m) / (n - 1.0)) : 0.0;
            se_out(i, j) = std::sqrt(var / n);
        }
    }
}

} // namespace detail

/// The closed form stated for the diagonal of E[(<A,U>A - U)^2]: ||U||_F^2 + 2U_mm^2 - sum_j U_mj^2,
/// zero off the diagonal.
inline Matrix second_moment_stated_form(const SymMatrix& U) {
    const std::size_t d = U.dim();
    const double fro2 = std::pow(frobenius_norm(U.matrix()), 2);
    Matrix out(d, d);
    for (std::size_t m = 0; m < d; ++m) {
        double row = 0.0;
        for (std::size_t j = 0; j < d; ++j) row += U(m, j) * U(m, j);
        out(m, m) = fro2 + 2.0 * U(m, m) * U(m, m) - row;
    }
    return out;
}

/// Exact E[(<A,U>A - U)^2] for Gaussian entries (Isserlis), off-diagonal variance v:
/// s^2 tau I + 2B^2 - BU - UB + U^2 with B = E[<A,U>A], tau = 1 + (d-1)v and
/// s^2 = Var<A,U> = sum_a U_aa^2 + 2v sum_{a!=b} U_ab^2.
inline Matrix second_moment_gaussian_form(const SymMatrix& U, EntryVariance variance) {
    const std::size_t d = U.dim();
    const double v = offdiag_variance(variance);
    double s2 = 0.0;
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) s2 += (a == b ? 1.0 : 2.0 * v) * U(a, b) * U(a, b);
    const double tau = 1.0 + static_cast<double>(d - 1) * v;
    const Matrix B = sensing_expectation(U, variance);
    const Matrix& u = U.matrix();
    Matrix out = Matrix::identity(d) * (s2 * tau);
    out.add_scaled(B * B, 2.0);
    out -= B * u;
    out -= u * B;
    out += u * u;
    return out;
}

inline MomentReport mc_second_moment(const SymMatrix& U, std::size_t trials, std::uint64_t seed,
                                     EnsembleSpec ens = {}) {
    if (trials < 2) throw invalid_input("mc_second_moment: need at least 2 trials");
    const std::size_t d = U.dim();
    MomentReport rep;
    rep.statistic = "second_moment";
    rep.trials = trials;
    detail::moment_estimate(d, trials, seed, ens,
                            [&](const SymMatrix& a) {
                                Matrix m = a.matrix() * inner_product(a, U);
                                m -= U.matrix();
                                return m * m;
                            },
                            rep.estimate, rep.std_error);
    rep.stated_form = second_moment_stated_form(U);
    rep.stated_z = detail::z_scores(rep.estimate, rep.std_error, rep.stated_form, rep.max_abs_z_stated);
    if (ens.distribution == Distribution::gaussian) {
        rep.exact_form = second_moment_gaussian_form(U, ens.variance);
        double mz = 0.0;
        rep.exact_z = detail::z_scores(rep.estimate, rep.std_error, *rep.exact_form, mz);
        rep.max_abs_z_exact = mz;
    }
    return rep;
}

/// E[A^2] against d I. Exact for any unit-variance ensemble is (1 + (d-1)v) I.
inline MomentReport mc_A_squared(std::size_t d, std::size_t trials, std::uint64_t seed,
                                 EnsembleSpec ens = {}) {
    if (d == 0) throw invalid_input("mc_A_squared: d must be positive");
    if (trials < 2) throw invalid_input("mc_A_squared: need at least 2 trials");
    MomentReport rep;
    rep.statistic = "A_squared";
    rep.trials = trials;
    detail::moment_estimate(d, trials, seed, ens,
                            [](const SymMatrix& a) { return gram_rows(a.matrix()); },
                            rep.estimate, rep.std_error);
    rep.stated_form = Matrix::identity(d) * static_cast<double>(d);
    rep.stated_z = detail::z_scores(rep.estimate, rep.std_error, rep.stated_form, rep.max_abs_z_stated);
    const double tau = 1.0 + static_cast<double>(d - 1) * offdiag_variance(ens.variance);
    rep.exact_form = Matrix::identity(d) * tau;
    double mz = 0.0;
    rep.exact_z = detail::z_scores(rep.estimate, rep.std_error, *rep.exact_form, mz);
    rep.max_abs_z_exact = mz;
    return rep;
}

// ---- serialization ----

inline nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline nlohmann::json to_json(const MCReport& r) {
    return {{"statistic", r.statistic},
            {"trials", r.trials},
            {"samples_per_trial", r.samples_per_trial},
            {"median", r.median},
            {"mean", r.mean},
            {"std_error", r.std_error},
            {"reference_scale", r.reference_scale},
            {"ratio_median", r.ratio_median}};
}

inline nlohmann::json to_json(const DeviationReport& r) {
    nlohmann::json j = to_json(r.mc);
    j["mean_matrix"] = matrix_to_json(r.mean);
    j["mean_std_error"] = matrix_to_json(r.std_error);
    j["expected"] = matrix_to_json(r.expected);
    return j;
}

inline nlohmann::json to_json(const MomentReport& r) {
    nlohmann::json j = {{"statistic", r.statistic},
                        {"trials", r.trials},
                        {"estimate", matrix_to_json(r.estimate)},
                        {"std_error", matrix_to_json(r.std_error)},
                        {"stated_form", matrix_to_json(r.stated_form)},
                        {"max_abs_z_stated", r.max_abs_z_stated}};
    if (r.exact_form) {
        j["exact_form"] = matrix_to_json(*r.exact_form);
        j["max_abs_z_exact"] = *r.max_abs_z_exact;
    }
    return j;
}

/// One row per trial: `trial,value`.
inline void write_trials_csv(const MCReport& r, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "trial,value\n";
    for (std::size_t t = 0; t < r.values.size(); ++t)
        out << t << ',' << format_double(r.values[t]) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

} // namespace msense
