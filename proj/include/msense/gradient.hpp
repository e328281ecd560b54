#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "matrix.hpp"
#include "problem.hpp"

namespace msense {

/// Current factor F (d x k) and the number of steps taken to reach it.
struct FactorState {
    Matrix F;
    std::size_t iter = 0;
};

enum class StepMode { explicit_value, theory };

struct StepSize {
    double eta = 0.0;
    StepMode mode = StepMode::explicit_value;

    static StepSize explicit_step(double eta) {
        if (!(eta > 0.0) || !std::isfinite(eta))
            throw invalid_input("step size must be a positive finite number");
        return {eta, StepMode::explicit_value};
    }
};

/// eta = 1 / (100 sigma_1)
inline StepSize theory_step_size(const GroundTruth& gt) {
    if (!(gt.sigma1 > 0.0)) throw invalid_input("theory step size needs sigma_1 > 0");
    return {1.0 / (100.0 * gt.sigma1), StepMode::theory};
}

namespace detail {

inline void require_factor_rows(const Matrix& F, std::size_t d, const char* op) {
    if (F.rows() != d || F.cols() == 0)
        throw invalid_input(std::string(op) + ": factor is " + F.shape_string() +
                            ", expected " + std::to_string(d) + " rows");
}

/// (1/n) sum_i (<A_i, F F^T> - y_i) A_i
inline SymMatrix residual_weighted_sum(const Matrix& F, const SensingSet& s) {
    const SymMatrix ffT(gram_rows(F));
    const auto y = s.observations();
    const double inv_n = 1.0 / static_cast<double>(s.n());
    return weighted_sensing_sum(s, [&](std::size_t i, const SymMatrix& a) {
        return (inner_product(a, ffT) - y[i]) * inv_n;
    });
}

} // namespace detail

/// Gradient of L(F) = (1/4n) sum_i (y_i - <A_i, F F^T>)^2. Scalar residuals first, then the
/// weighted matrix sum, then one product with F.
inline Matrix sample_gradient(const Matrix& F, const SensingSet& s) {
    detail::require_factor_rows(F, s.dim(), "sample_gradient");
    return detail::residual_weighted_sum(F, s).matrix() * F;
}

/// Precomputed normal operator of a sensing set. With a_i the upper triangle of A_i (row-major,
/// diagonal included) and x the upper triangle of X weighted 1 on the diagonal and 2 off it,
/// the upper triangle of (1/n) sum_i (<A_i, X> - y_i) A_i is H x - b, where
/// H = (1/n) sum_i a_i a_i^T and b = (1/n) sum_i y_i a_i. A gradient then costs O(d^4)
/// instead of O(n d^2); the two agree up to rounding.
class SensingOperator {
public:
    explicit SensingOperator(const SensingSet& s)
        : d_(s.dim()), p_(d_ * (d_ + 1) / 2), h_(p_, p_), b_(p_, 0.0) {
        Matrix hb(p_, p_ + 1);
        accumulate(s, 0, s.n(), hb);
        const double inv_n = 1.0 / static_cast<double>(s.n());
        for (std::size_t u = 0; u < p_; ++u) {
            for (std::size_t v = u; v < p_; ++v) h_(u, v) = h_(v, u) = hb(u, v) * inv_n;
            b_[u] = hb(u, p_) * inv_n;
        }
    }

    std::size_t dim() const noexcept { return d_; }

    /// (1/n) sum_i (<A_i, F F^T> - y_i) A_i
    SymMatrix residual_weighted_sum(const Matrix& F) const {
        detail::require_factor_rows(F, d_, "SensingOperator");
        const Matrix x = gram_rows(F);
        std::vector<double> xv(p_);
        for (std::size_t i = 0, u = 0; i < d_; ++i)
            for (std::size_t j = i; j < d_; ++j, ++u) xv[u] = (i == j ? 1.0 : 2.0) * x(i, j);
        SymMatrix out(d_);
        for (std::size_t i = 0, u = 0; i < d_; ++i) {
            for (std::size_t j = i; j < d_; ++j, ++u) {
                double acc = 0.0;
                for (std::size_t v = 0; v < p_; ++v) acc += h_(u, v) * xv[v];
                out.set(i, j, acc - b_[u]);
            }
        }
        return out;
    }

private:
    // Upper triangle of sum a a^T in columns [0, p), sum y a in column p; pairwise over samples.
    void accumulate(const SensingSet& s, std::size_t lo, std::size_t hi, Matrix& out) const {
        constexpr std::size_t leaf = 16;
        if (hi - lo > leaf) {
            const std::size_t mid = lo + (hi - lo) / 2;
            Matrix right(out.rows(), out.cols());
            accumulate(s, lo, mid, out);
            accumulate(s, mid, hi, right);
            out += right;
            return;
        }
        const auto y = s.observations();
        std::vector<double> a(p_);
        s.visit(lo, hi, [&](std::size_t i, const SymMatrix& m) {
            for (std::size_t r = 0, u = 0; r < d_; ++r)
                for (std::size_t c = r; c < d_; ++c, ++u) a[u] = m(r, c);
            for (std::size_t u = 0; u < p_; ++u) {
                for (std::size_t v = u; v < p_; ++v) out(u, v) += a[u] * a[v];
                out(u, p_) += y[i] * a[u];
            }
        });
    }

    std::size_t d_;
    std::size_t p_;
    Matrix h_;
    std::vector<double> b_;
};

inline Matrix sample_gradient(const Matrix& F, const SensingOperator& op) {
    return op.residual_weighted_sum(F).matrix() * F;
}

inline double sensing_loss(const Matrix& F, const SensingSet& s) {
    detail::require_factor_rows(F, s.dim(), "sensing_loss");
    const SymMatrix ffT(gram_rows(F));
    const auto y = s.observations();
    double acc = 0.0;
    s.visit(0, s.n(), [&](std::size_t i, const SymMatrix& a) {
        const double e = y[i] - inner_product(a, ffT);
        acc += e * e;
    });
    return acc / (4.0 * static_cast<double>(s.n()));
}

/// Expected gradient under the isotropic ensemble: (F F^T - X*) F.
inline Matrix population_gradient(const Matrix& F, const GroundTruth& gt) {
    detail::require_factor_rows(F, gt.d, "population_gradient");
    return (gram_rows(F) - gt.xstar.matrix()) * F;
}

/// Delta = (1/n) sum_i (<A_i, F F^T> - y_i) A_i - (F F^T - X*), so that
/// sample_gradient - population_gradient = Delta * F exactly.
inline SymMatrix deviation_matrix(const Matrix& F, const GroundTruth& gt, const SensingSet& s) {
    detail::require_factor_rows(F, gt.d, "deviation_matrix");
    if (s.dim() != gt.d) throw invalid_input("deviation_matrix: sensing/ground-truth mismatch");
    SymMatrix delta = detail::residual_weighted_sum(F, s);
    delta -= SymMatrix(gram_rows(F));
    delta += gt.xstar;
    return delta;
}

inline SymMatrix deviation_matrix(const Matrix& F, const GroundTruth& gt, const SensingOperator& op) {
    detail::require_factor_rows(F, gt.d, "deviation_matrix");
    if (op.dim() != gt.d) throw invalid_input("deviation_matrix: sensing/ground-truth mismatch");
    SymMatrix delta = op.residual_weighted_sum(F);
    delta -= SymMatrix(gram_rows(F));
    delta += gt.xstar;
    return delta;
}

inline FactorState fgd_step(const FactorState& state, const Matrix& grad, StepSize step) {
    state.F.require_same_shape(grad, "fgd_step");
    FactorState next{state.F, state.iter + 1};
    next.F.add_scaled(grad, -step.eta);
    return next;
}

/// M_U(S) = S - eta (S S^T S + S T^T T - D_S S)
inline Matrix op_MU(const Matrix& S, const Matrix& T, std::span<const double> ds, double eta) {
    if (S.cols() != T.cols() || ds.size() != S.rows())
        throw invalid_input("op_MU: inconsistent shapes S=" + S.shape_string() +
                            " T=" + T.shape_string());
    Matrix drift = S * gram_cols(S);
    drift += S * gram_cols(T);
    drift -= scale_rows(ds, S);
    Matrix out = S;
    out.add_scaled(drift, -eta);
    return out;
}

/// M_V(T) = T - eta (T T^T T + T S^T S - D_T T)
inline Matrix op_MV(const Matrix& T, const Matrix& S, std::span<const double> dt, double eta) {
    if (S.cols() != T.cols() || dt.size() != T.rows())
        throw invalid_input("op_MV: inconsistent shapes T=" + T.shape_string() +
                            " S=" + S.shape_string());
    Matrix drift = T * gram_cols(T);
    drift += T * gram_cols(S);
    drift -= scale_rows(dt, T);
    Matrix out = T;
    out.add_scaled(drift, -eta);
    return out;
}

} // namespace msense
