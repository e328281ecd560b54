#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "error.hpp"
#include "matrix.hpp"

namespace msense {

/// Eigenvalues ordered by descending absolute value, with matching orthonormal
/// eigenvectors stored as the columns of `vectors`.
struct EigenPairs {
    std::vector<double> values;
    Matrix vectors;
};

namespace detail {

inline void require_finite(const Matrix& m, const char* op) {
    if (!m.all_finite()) throw invalid_input(std::string(op) + ": non-finite entries");
}

inline double off_diagonal_norm(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
}

inline double frobenius(const Matrix& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return std::sqrt(s);
}

struct JacobiResult {
    std::vector<double> diag;
    Matrix vectors;
};

// Cyclic Jacobi: sweep every (p, q) pair until the off-diagonal Frobenius norm falls
// below tolerance * ||M||_F.
inline JacobiResult cyclic_jacobi(Matrix a, bool want_vectors) {
    constexpr double tolerance = 1e-13;
    constexpr int max_sweeps = 100;

    const std::size_t n = a.rows();
    JacobiResult out;
    if (want_vectors) out.vectors = Matrix::identity(n);

    const double scale = frobenius(a);
    if (scale > 0.0) {
        int sweep = 0;
        double off = off_diagonal_norm(a);
        while (off > tolerance * scale) {
            if (sweep++ == max_sweeps)
                throw numeric_failure("Jacobi eigensolver did not converge", off / scale);
            for (std::size_t p = 0; p + 1 < n; ++p) {
                for (std::size_t q = p + 1; q < n; ++q) {
                    const double apq = a(p, q);
                    if (std::abs(apq) < 1e-300) continue;
                    const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                    const double t = std::copysign(1.0, theta) /
                                     (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                    const double c = 1.0 / std::sqrt(t * t + 1.0);
                    const double s = t * c;
                    for (std::size_t k = 0; k < n; ++k) {
                        if (k == p || k == q) continue;
                        const double akp = a(k, p);
                        const double akq = a(k, q);
                        const double np = c * akp - s * akq;
                        const double nq = s * akp + c * akq;
                        a(k, p) = np;
                        a(p, k) = np;
                        a(k, q) = nq;
                        a(q, k) = nq;
                    }
                    a(p, p) -= t * apq;
                    a(q, q) += t * apq;
                    a(p, q) = 0.0;
                    a(q, p) = 0.0;
                    if (want_vectors) {
                        Matrix& v = out.vectors;
                        for (std::size_t k = 0; k < n; ++k) {
                            const double vkp = v(k, p);
                            const double vkq = v(k, q);
                            v(k, p) = c * vkp - s * vkq;
                            v(k, q) = s * vkp + c * vkq;
                        }
                    }
                }
            }
            off = off_diagonal_norm(a);
        }
    }
    out.diag.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.diag[i] = a(i, i);
    return out;
}

} // namespace detail

/// Eigen-decomposition of a symmetric matrix, ordered by descending |eigenvalue|.
inline EigenPairs sym_eig(const SymMatrix& m) {
    detail::require_finite(m.matrix(), "sym_eig");
    auto jr = detail::cyclic_jacobi(m.matrix(), true);
    const std::size_t n = jr.diag.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(jr.diag[a]) > std::abs(jr.diag[b]);
    });
    EigenPairs out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (std::size_t c = 0; c < n; ++c) {
        out.values[c] = jr.diag[order[c]];
        for (std::size_t r = 0; r < n; ++r) out.vectors(r, c) = jr.vectors(r, order[c]);
    }
    return out;
}

/// Eigenvalues only, unordered. Cheaper than sym_eig when vectors are not needed.
inline std::vector<double> sym_eigenvalues(const SymMatrix& m) {
    detail::require_finite(m.matrix(), "sym_eigenvalues");
    return detail::cyclic_jacobi(m.matrix(), false).diag;
}

inline double frobenius_norm(const Matrix& m) {
    detail::require_finite(m, "frobenius_norm");
    return detail::frobenius(m);
}

inline double spectral_norm(const SymMatrix& m) {
    double best = 0.0;
    for (double v : sym_eigenvalues(m)) best = std::max(best, std::abs(v));
    return best;
}

/// Largest singular value, via the eigenvalues of the smaller Gram matrix.
inline double spectral_norm(const Matrix& m) {
    detail::require_finite(m, "spectral_norm");
    if (m.empty()) return 0.0;
    const Matrix g = m.rows() <= m.cols() ? gram_rows(m) : gram_cols(m);
    double best = 0.0;
    for (double v : detail::cyclic_jacobi(g, false).diag) best = std::max(best, v);
    return std::sqrt(best);
}

/// Orthonormal basis for the column space of m (Gram-Schmidt with one reorthogonalization
/// pass). Columns are processed left to right, so column j of the output spans the same
/// flag as the first j+1 input columns.
inline Matrix orthonormalize(const Matrix& m) {
    detail::require_finite(m, "orthonormalize");
    constexpr double rank_tolerance = 1e-10;
    if (m.cols() > m.rows())
        throw invalid_input("orthonormalize: more columns than rows (" + m.shape_string() + ")");
    const std::size_t rows = m.rows();
    Matrix q(rows, m.cols());
    std::vector<double> v(rows);
    for (std::size_t j = 0; j < m.cols(); ++j) {
        for (std::size_t i = 0; i < rows; ++i) v[i] = m(i, j);
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t p = 0; p < j; ++p) {
                double proj = 0.0;
                for (std::size_t i = 0; i < rows; ++i) proj += q(i, p) * v[i];
                for (std::size_t i = 0; i < rows; ++i) v[i] -= proj * q(i, p);
            }
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (!(norm > rank_tolerance))
            throw invalid_input("orthonormalize: input is rank deficient at column " +
                                std::to_string(j));
        for (std::size_t i = 0; i < rows; ++i) q(i, j) = v[i] / norm;
    }
    return q;
}

} // namespace msense
