#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"

namespace msense {

/// Dense row-major real matrix. Also serves as the rectangular matrix type.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    Matrix(std::initializer_list<std::initializer_list<double>> init) {
        rows_ = init.size();
        cols_ = rows_ ? init.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& row : init) {
            if (row.size() != cols_) throw invalid_input("ragged matrix initializer");
            data_.insert(data_.end(), row.begin(), row.end());
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Matrix diagonal(std::span<const double> diag) {
        Matrix m(diag.size(), diag.size());
        for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const noexcept { return {data_.data() + i * cols_, cols_}; }

    bool all_finite() const noexcept {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    Matrix transpose() const {
        Matrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    Matrix& operator+=(const Matrix& o) {
        require_same_shape(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Matrix& operator-=(const Matrix& o) {
        require_same_shape(o, "-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Matrix& operator*=(double s) noexcept {
        for (double& v : data_) v *= s;
        return *this;
    }

    /// this += s * o
    Matrix& add_scaled(const Matrix& o, double s) {
        require_same_shape(o, "add_scaled");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * o.data_[i];
        return *this;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

    void require_same_shape(const Matrix& o, const char* op) const {
        if (rows_ != o.rows_ || cols_ != o.cols_)
            throw invalid_input(std::string("shape mismatch in ") + op + ": " + shape_string() +
                                " vs " + o.shape_string());
    }

    std::string shape_string() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
inline Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
inline Matrix operator*(Matrix a, double s) { return a *= s; }
inline Matrix operator*(double s, Matrix a) { return a *= s; }

inline Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw invalid_input("shape mismatch in product: " + a.shape_string() + " * " +
                            b.shape_string());
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto crow = c.row(i);
        for (std::size_t p = 0; p < a.cols(); ++p) {
            const double aip = a(i, p);
            if (aip == 0.0) continue;
            auto brow = b.row(p);
            for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aip * brow[j];
        }
    }
    return c;
}

/// a * a^T, symmetric by construction.
inline Matrix gram_rows(const Matrix& a) {
    Matrix g(a.rows(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ri = a.row(i);
        for (std::size_t j = i; j < a.rows(); ++j) {
            auto rj = a.row(j);
            double s = 0.0;
            for (std::size_t p = 0; p < a.cols(); ++p) s += ri[p] * rj[p];
            g(i, j) = s;
            g(j, i) = s;
        }
    }
    return g;
}

/// a^T * a, symmetric by construction.
inline Matrix gram_cols(const Matrix& a) { return gram_rows(a.transpose()); }

/// a * b^T
inline Matrix mul_transposed(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols())
        throw invalid_input("shape mismatch in a*b^T: " + a.shape_string() + " vs " +
                            b.shape_string());
    Matrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto ri = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            auto rj = b.row(j);
            double s = 0.0;
            for (std::size_t p = 0; p < a.cols(); ++p) s += ri[p] * rj[p];
            c(i, j) = s;
        }
    }
    return c;
}

/// diag(d) * m, i.e. row i scaled by d[i].
inline Matrix scale_rows(std::span<const double> d, Matrix m) {
    if (d.size() != m.rows()) throw invalid_input("diagonal length does not match rows");
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (double& v : m.row(i)) v *= d[i];
    return m;
}

/// Entrywise sum of products.
inline double dot(const Matrix& a, const Matrix& b) {
    a.require_same_shape(b, "dot");
    double s = 0.0;
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

/// Symmetric matrix. Construction symmetrizes asymmetry up to 1e-12 (absolute) and
/// rejects anything larger.
class SymMatrix {
public:
    static constexpr double symmetry_tolerance = 1e-12;

    SymMatrix() = default;
    explicit SymMatrix(std::size_t dim) : m_(dim, dim) {}

    explicit SymMatrix(Matrix m) : m_(std::move(m)) {
        if (m_.rows() != m_.cols())
            throw invalid_input("symmetric matrix must be square, got " + m_.shape_string());
        const std::size_t n = m_.rows();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const double a = m_(i, j);
                const double b = m_(j, i);
                if (!(std::abs(a - b) <= symmetry_tolerance))
                    throw invalid_input("matrix is not symmetric at (" + std::to_string(i) +
                                        "," + std::to_string(j) + ")");
                const double mid = 0.5 * (a + b);
                m_(i, j) = mid;
                m_(j, i) = mid;
            }
        }
    }

    static SymMatrix identity(std::size_t n) { return SymMatrix(Matrix::identity(n)); }
    static SymMatrix diagonal(std::span<const double> diag) {
        return SymMatrix(Matrix::diagonal(diag));
    }

    std::size_t dim() const noexcept { return m_.rows(); }
    double operator()(std::size_t i, std::size_t j) const noexcept { return m_(i, j); }

    /// Writes both (i,j) and (j,i).
    void set(std::size_t i, std::size_t j, double v) noexcept {
        m_(i, j) = v;
        m_(j, i) = v;
    }

    const Matrix& matrix() const noexcept { return m_; }
    operator const Matrix&() const noexcept { return m_; }

    SymMatrix& operator+=(const SymMatrix& o) {
        m_ += o.m_;
        return *this;
    }
    SymMatrix& operator-=(const SymMatrix& o) {
        m_ -= o.m_;
        return *this;
    }
    SymMatrix& operator*=(double s) noexcept {
        m_ *= s;
        return *this;
    }
    SymMatrix& add_scaled(const SymMatrix& o, double s) {
        m_.add_scaled(o.m_, s);
        return *this;
    }

    friend bool operator==(const SymMatrix&, const SymMatrix&) = default;

private:
    Matrix m_;
};

inline SymMatrix operator+(SymMatrix a, const SymMatrix& b) { return a += b; }
inline SymMatrix operator-(SymMatrix a, const SymMatrix& b) { return a -= b; }
inline SymMatrix operator*(SymMatrix a, double s) { return a *= s; }
inline SymMatrix operator*(double s, SymMatrix a) { return a *= s; }

} // namespace msense
