#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "error.hpp"
#include "gradient.hpp"
#include "linalg.hpp"
#include "matrix.hpp"
#include "problem.hpp"
#include "rng.hpp"

namespace msense {

/// F = U S + V T with S = U^T F (r x k) and T = V^T F ((d - r) x k).
struct Decomposition {
    Matrix S;
    Matrix T;
};

inline Decomposition decompose(const Matrix& F, const GroundTruth& gt) {
    detail::require_factor_rows(F, gt.d, "decompose");
    return {gt.U.transpose() * F, gt.V.transpose() * F};
}

inline Matrix recompose(const GroundTruth& gt, const Decomposition& dec) {
    Matrix F = gt.U * dec.S;
    if (!gt.V.empty()) F += gt.V * dec.T;
    return F;
}

/// Statistical and computational error scales.
struct DerivedScales {
    double eps_stat = 0.0;  // kappa * sqrt(d log d / n) * sigma
    double eps_comp = 0.0;  // sqrt(k kappa^2 d log d / n) * sigma_r
};

inline DerivedScales derived_scales(const GroundTruth& gt, std::size_t n, std::size_t k,
                                    double sigma) {
    if (n == 0) throw invalid_input("derived_scales: n must be positive");
    const double d = static_cast<double>(gt.d);
    const double rate = std::sqrt(d * std::log(d) / static_cast<double>(n));
    return {gt.kappa * rate * sigma,
            std::sqrt(static_cast<double>(k)) * gt.kappa * rate * gt.sigma_r};
}

struct IterateMetrics {
    std::size_t t = 0;
    double ss_err = 0.0;   // ||S S^T - D_S||
    double st_norm = 0.0;  // ||S T^T||
    double tt_norm = 0.0;  // ||T T^T||
    double tt_err = 0.0;   // ||T T^T - D_T||
    double D = 0.0;
    double A = 0.0;
    double err_spec = 0.0;
    double err_fro = 0.0;
    std::optional<double> delta_norm;
    double grad_norm = 0.0;
};

struct MetricsOptions {
    std::size_t t = 0;
    bool track_delta = false;
    /// Frobenius norm of the gradient already computed by the caller. When absent the
    /// sample gradient (or population gradient without a sensing set) is evaluated.
    std::optional<double> grad_norm;
    /// ||Delta|| already computed by the caller; used instead of evaluating it here.
    std::optional<double> delta_norm;
    double floor_multiple = 50.0;
};

namespace detail {

inline double sym_spectral(const Matrix& m) { return spectral_norm(SymMatrix(m)); }

inline bool all_zero(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

inline double tt_error(const Matrix& T, const std::vector<double>& dt) {
    if (T.rows() == 0) return 0.0;
    Matrix ttT = gram_rows(T);
    for (std::size_t i = 0; i < dt.size(); ++i) ttT(i, i) -= dt[i];
    return sym_spectral(ttT);
}

inline double ss_error(const Matrix& S, const std::vector<double>& ds) {
    Matrix ssT = gram_rows(S);
    for (std::size_t i = 0; i < ds.size(); ++i) ssT(i, i) -= ds[i];
    return sym_spectral(ssT);
}

} // namespace detail

inline IterateMetrics compute_metrics(const Matrix& F, const GroundTruth& gt,
                                      const DerivedScales& scales, const SensingSet* s,
                                      const MetricsOptions& opts = {}) {
    if (opts.track_delta && s == nullptr && !opts.delta_norm)
        throw invalid_input("compute_metrics: delta tracking requires a sensing set");
    const Decomposition dec = decompose(F, gt);

    IterateMetrics m;
    m.t = opts.t;
    m.ss_err = detail::ss_error(dec.S, gt.ds);
    m.st_norm = dec.T.rows() == 0 ? 0.0 : spectral_norm(mul_transposed(dec.S, dec.T));
    m.tt_norm = dec.T.rows() == 0 ? 0.0 : spectral_norm(dec.T);
    m.tt_norm *= m.tt_norm;
    m.tt_err = detail::all_zero(gt.dt) ? m.tt_norm : detail::tt_error(dec.T, gt.dt);
    m.D = std::max({m.ss_err, m.tt_norm, m.st_norm});
    m.A = std::max(0.0, m.D - opts.floor_multiple * scales.eps_stat);

    const Matrix err = gram_rows(F) - gt.xstar.matrix();
    m.err_spec = detail::sym_spectral(err);
    m.err_fro = frobenius_norm(err);

    if (opts.track_delta)
        m.delta_norm = opts.delta_norm ? *opts.delta_norm : spectral_norm(deviation_matrix(F, gt, *s));
    if (opts.grad_norm) {
        m.grad_norm = *opts.grad_norm;
    } else {
        m.grad_norm = frobenius_norm(s ? sample_gradient(F, *s) : population_gradient(F, gt));
    }
    return m;
}

/// Padded exact factor U [diag(sqrt(ds)) 0] of width k.
inline Matrix exact_factor(const GroundTruth& gt, std::size_t k) {
    Matrix F(gt.d, k);
    const std::size_t cols = std::min(k, gt.r);
    for (std::size_t i = 0; i < gt.d; ++i)
        for (std::size_t j = 0; j < cols; ++j) F(i, j) = gt.U(i, j) * std::sqrt(gt.ds[j]);
    return F;
}

inline double init_error(const Matrix& F, const GroundTruth& gt) {
    return detail::sym_spectral(gram_rows(F) - gt.xstar.matrix());
}

/// F0 = exact factor + c P with P Gaussian and c chosen by bisection so that
/// ||F0 F0^T - X*|| = 0.7 rho sigma_r u, u ~ Uniform(0.5, 1]. The returned point sits on
/// the feasible side of the bisection, so the initialization assumption always holds.
inline FactorState planted_init(const GroundTruth& gt, std::size_t k, double rho,
                                std::uint64_t seed) {
    if (k < gt.r)
        throw invalid_input("planted_init: k must be >= r (got k=" + std::to_string(k) +
                            ", r=" + std::to_string(gt.r) + ")");
    if (!(rho > 0.0 && rho <= 0.07)) throw invalid_input("planted_init: rho must lie in (0, 0.07]");

    CounterRng u_rng(seed, Stream::init);
    const double u = 0.5 + 0.5 * u_rng.uniform_open_low();
    const double target = 0.7 * rho * gt.sigma_r * u;

    const Matrix base = exact_factor(gt, k);
    Matrix P(gt.d, k);
    CounterRng p_rng(seed, Stream::perturbation);
    for (double& v : P.data()) v = p_rng.normal();

    auto error_at = [&](double c) {
        Matrix F = base;
        F.add_scaled(P, c);
        return init_error(F, gt);
    };
    if (error_at(0.0) > target)
        throw invalid_input("planted_init: ||D_T|| already exceeds the target radius");

    double lo = 0.0;
    double hi = 1e-3;
    while (error_at(hi) <= target) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e6) throw numeric_failure("planted_init: could not bracket the target", hi);
    }
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (error_at(mid) <= target ? lo : hi) = mid;
    }
    Matrix F = base;
    F.add_scaled(P, lo);
    return {std::move(F), 0};
}

/// F0 from the top-k algebraic eigenpairs of (1/n) sum_i y_i A_i, negative parts clipped.
inline FactorState spectral_init(const SensingSet& s, std::size_t k) {
    if (k < 1 || k > s.dim()) throw invalid_input("spectral_init: need 1 <= k <= d");
    const auto y = s.observations();
    const double inv_n = 1.0 / static_cast<double>(s.n());
    const SymMatrix m =
        weighted_sensing_sum(s, [&](std::size_t i, const SymMatrix&) { return y[i] * inv_n; });
    const EigenPairs eig = sym_eig(m);
    std::vector<std::size_t> order(eig.values.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return eig.values[a] > eig.values[b]; });
    Matrix F(s.dim(), k);
    for (std::size_t j = 0; j < k; ++j) {
        const double lambda = eig.values[order[j]];
        if (!(lambda > 0.0)) continue;
        const double root = std::sqrt(lambda);
        for (std::size_t i = 0; i < s.dim(); ++i) F(i, j) = eig.vectors(i, order[j]) * root;
    }
    return {std::move(F), 0};
}

inline FactorState random_init(std::size_t d, std::size_t k, double scale, std::uint64_t seed) {
    if (!(scale > 0.0) || !std::isfinite(scale))
        throw invalid_input("random_init: scale must be positive");
    if (d == 0 || k == 0) throw invalid_input("random_init: empty shape");
    Matrix F(d, k);
    CounterRng rng(seed, Stream::init, 1);
    for (double& v : F.data()) v = scale * rng.normal();
    return {std::move(F), 0};
}

struct InitReport {
    double lhs = 0.0;  // ||F0 F0^T - X*||
    double ss0 = 0.0;  // ||D_S - S0 S0^T||
    double tt0 = 0.0;  // ||D_T - T0 T0^T||
    double st0 = 0.0;  // ||S0 T0^T||
    double rho = 0.0;
    bool lemma_premise = false;  // lhs <= 0.7 rho sigma_r
    bool assumption_ok = false;  // lhs <= rho sigma_r
    bool lemma_ok = false;       // premise implies max(ss0, tt0, st0) <= rho sigma_r
};

inline InitReport check_initialization(const Matrix& F0, const GroundTruth& gt, double rho) {
    if (!(rho > 0.0)) throw invalid_input("check_initialization: rho must be positive");
    const Decomposition dec = decompose(F0, gt);
    InitReport rep;
    rep.rho = rho;
    rep.lhs = init_error(F0, gt);
    rep.ss0 = detail::ss_error(dec.S, gt.ds);
    rep.tt0 = detail::tt_error(dec.T, gt.dt);
    rep.st0 = dec.T.rows() == 0 ? 0.0 : spectral_norm(mul_transposed(dec.S, dec.T));
    const double radius = rho * gt.sigma_r;
    rep.lemma_premise = rep.lhs <= 0.7 * radius;
    rep.assumption_ok = rep.lhs <= radius;
    rep.lemma_ok = !rep.lemma_premise || std::max({rep.ss0, rep.tt0, rep.st0}) <= radius;
    return rep;
}

struct InequalityCheck {
    std::string name;
    double lhs = 0.0;
    double rhs = 0.0;
    bool pass = false;

    double slack() const noexcept { return rhs - lhs; }
};

/// Two-sided evaluation of the eight one-step population inequalities.
/// Order: pop_a..pop_d (contraction), more_a..more_d (non-expansion).
struct ContractionReport {
    std::array<InequalityCheck, 8> checks;

    bool all_pass() const noexcept {
        return std::all_of(checks.begin(), checks.end(),
                           [](const InequalityCheck& c) { return c.pass; });
    }
};

/// Region of the population lemmas: all three decomposed errors within 0.1 sigma_r.
inline bool in_contraction_region(const Matrix& S, const Matrix& T, const GroundTruth& gt) {
    const double bound = 0.1 * gt.sigma_r;
    if (detail::ss_error(S, gt.ds) > bound) return false;
    if (detail::tt_error(T, gt.dt) > bound) return false;
    if (T.rows() > 0 && spectral_norm(mul_transposed(S, T)) > bound) return false;
    return true;
}

inline ContractionReport verify_population_contraction(const Matrix& S, const Matrix& T,
                                                       const GroundTruth& gt, double eta) {
    if (S.rows() != gt.r || T.rows() != gt.d - gt.r || S.cols() != T.cols())
        throw invalid_input("verify_population_contraction: shapes do not match ground truth");
    if (S.cols() < gt.r)
        throw invalid_input("verify_population_contraction: k < r is outside the lemma");
    if (!(eta >= 0.0) || eta > (1.0 + 1e-12) / (100.0 * gt.sigma1))
        throw invalid_input("verify_population_contraction: eta must lie in [0, 1/(100 sigma_1)]");
    if (!in_contraction_region(S, T, gt))
        throw invalid_input("verify_population_contraction: (S, T) outside the 0.1 sigma_r region");

    const Matrix mu = op_MU(S, T, gt.ds, eta);
    const Matrix mv = op_MV(T, S, gt.dt, eta);
    const double sr = gt.sigma_r;
    const double dt_norm = gt.sigma_r_plus_1;

    const double ss = detail::ss_error(S, gt.ds);
    const double st = T.rows() == 0 ? 0.0 : spectral_norm(mul_transposed(S, T));
    double tt = T.rows() == 0 ? 0.0 : spectral_norm(T);
    tt *= tt;
    const double tt_err = detail::tt_error(T, gt.dt);

    // ||I - 2 eta T T^T||
    double shrink = 1.0;
    if (T.rows() > 0) {
        Matrix m = Matrix::identity(T.rows());
        m.add_scaled(gram_rows(T), -2.0 * eta);
        shrink = detail::sym_spectral(m);
    }

    auto sym_minus_diag = [](Matrix m, const std::vector<double>& diag) {
        for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) -= diag[i];
        return m;
    };
    auto rect_norm = [](const Matrix& m) { return m.empty() ? 0.0 : spectral_norm(m); };
    // D_S - M_U(S) S^T is not symmetric in general.
    Matrix ds_minus_mu_sT = Matrix::diagonal(gt.ds) - mul_transposed(mu, S);

    ContractionReport rep;
    rep.checks = {{
        {"pop_a", detail::sym_spectral(sym_minus_diag(gram_rows(mu), gt.ds)),
         (1.0 - eta * sr) * ss + 3.0 * eta * st * st},
        {"pop_b", rect_norm(mul_transposed(mu, mv)), st * (1.0 - eta * sr)},
        {"pop_c", mv.rows() == 0 ? 0.0 : detail::sym_spectral(gram_rows(mv)),
         tt * (1.0 - eta * tt + 2.0 * eta * dt_norm)},
        {"pop_d", detail::tt_error(mv, gt.dt), tt_err * shrink + 3.0 * eta * st * st},
        {"more_a", rect_norm(ds_minus_mu_sT), (1.0 - eta * sr) * ss + eta * st * st},
        {"more_b", rect_norm(mul_transposed(mu, T)), st},
        {"more_c", rect_norm(mul_transposed(mv, S)), st},
        {"more_d", rect_norm(mul_transposed(mv, T)), tt + eta * st * st},
    }};
    for (auto& c : rep.checks) c.pass = c.lhs <= c.rhs + 1e-9 * sr;
    return rep;
}

/// Draws (S, T) from the exact factor plus a Gaussian perturbation of F with a uniformly
/// random scale in (0, max_scale], rejecting draws outside the contraction region.
inline Decomposition sample_region_point(const GroundTruth& gt, std::size_t k,
                                         std::uint64_t seed, double max_scale = 0.1,
                                         std::size_t max_tries = 100000) {
    if (k < gt.r) throw invalid_input("sample_region_point: k must be >= r");
    const Matrix base = exact_factor(gt, k);
    for (std::size_t attempt = 0; attempt < max_tries; ++attempt) {
        CounterRng rng(seed, Stream::region, attempt);
        const double c = max_scale * rng.uniform_open_low();
        Matrix F = base;
        for (double& v : F.data()) v += c * rng.normal();
        Decomposition dec = decompose(F, gt);
        if (in_contraction_region(dec.S, dec.T, gt)) return dec;
    }
    throw numeric_failure("sample_region_point: rejection sampling exhausted", 0.0);
}

struct SampleContractionParams {
    double eta = 0.0;
    double sigma = 0.0;
    std::size_t n = 1;
    std::size_t d = 1;
    std::size_t k = 1;
    double sigma_r = 1.0;
    double floor_multiple = 50.0;
    double delta_d_coeff = 10.0;
    double delta_sigma_coeff = 4.0;
};

enum class CheckStatus { pass, violation, vacuous, not_applicable };

inline const char* to_string(CheckStatus s) {
    switch (s) {
    case CheckStatus::pass: return "pass";
    case CheckStatus::violation: return "violation";
    case CheckStatus::vacuous: return "vacuous";
    case CheckStatus::not_applicable: return "not_applicable";
    }
    return "?";
}

struct SampleCheck {
    std::string name;
    double lhs = 0.0;
    double rhs = 0.0;
    bool pass = false;
    bool hypothesis_held = false;
    CheckStatus status = CheckStatus::not_applicable;
};

/// One-step finite-sample contraction: the signal-block bound, the cross-term bound and the
/// shifted recursion on D_t - floor, each tagged with whether the Delta hypothesis held.
struct SampleContractionReport {
    double delta_norm = 0.0;
    double delta_bound = 0.0;
    bool hypothesis_held = false;
    std::array<SampleCheck, 3> checks;
};

inline SampleContractionReport verify_sample_contraction(const IterateMetrics& before,
                                                         const IterateMetrics& after,
                                                         const DerivedScales& scales,
                                                         const SampleContractionParams& p) {
    if (!before.delta_norm)
        throw invalid_input("verify_sample_contraction: metrics lack delta_norm");
    if (after.t != before.t + 1)
        throw invalid_input("verify_sample_contraction: metrics are not consecutive");

    const double d = static_cast<double>(p.d);
    const double rate = std::sqrt(d * std::log(d) / static_cast<double>(p.n));
    const double k_rate = std::sqrt(static_cast<double>(p.k)) * rate;

    SampleContractionReport rep;
    rep.delta_norm = *before.delta_norm;
    rep.delta_bound = p.delta_d_coeff * k_rate * before.D + p.delta_sigma_coeff * rate * p.sigma;
    rep.hypothesis_held = rep.delta_norm <= rep.delta_bound;

    const double slack = k_rate * before.D + 0.4 * rate * p.sigma;
    const double floor = p.floor_multiple * scales.eps_stat;
    const double shifted = before.D - floor;

    rep.checks[0] = {"signal", after.ss_err,
                     (1.0 - 0.7 * p.eta * p.sigma_r) * before.ss_err + slack};
    rep.checks[1] = {"cross", after.st_norm, (1.0 - p.eta * p.sigma_r) * before.st_norm + slack};
    rep.checks[2] = {"recursion", after.D - floor, (1.0 - 0.5 * p.eta * shifted) * shifted};

    for (std::size_t i = 0; i < rep.checks.size(); ++i) {
        SampleCheck& c = rep.checks[i];
        c.hypothesis_held = rep.hypothesis_held;
        c.pass = c.lhs <= c.rhs;
        // The lemma only speaks while D_t is above the statistical floor.
        if (!(shifted > 0.0)) {
            c.status = CheckStatus::not_applicable;
        } else if (c.pass) {
            c.status = CheckStatus::pass;
        } else {
            c.status = c.hypothesis_held ? CheckStatus::violation : CheckStatus::vacuous;
        }
    }
    return rep;
}

} // namespace msense
