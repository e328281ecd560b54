#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "linalg.hpp"
#include "matrix.hpp"
#include "rng.hpp"

namespace msense {

enum class Distribution { gaussian, rademacher };

/// Variance convention for the sensing entries. `unit`: every upper-triangle entry
/// (diagonal included) has variance 1. `isotropic`: diagonal variance 1, off-diagonal
/// variance 1/2, the normalization under which E[<A,B>A] = B for symmetric B.
enum class EntryVariance { unit, isotropic };

enum class MemoryMode { dense, regenerate };

inline const char* to_string(Distribution d) {
    return d == Distribution::gaussian ? "gaussian" : "rademacher";
}
inline const char* to_string(EntryVariance v) {
    return v == EntryVariance::unit ? "unit" : "isotropic";
}
inline const char* to_string(MemoryMode m) {
    return m == MemoryMode::dense ? "dense" : "regenerate";
}

inline double offdiag_variance(EntryVariance v) {
    return v == EntryVariance::unit ? 1.0 : 0.5;
}

struct GroundTruth {
    std::size_t d = 0;
    std::size_t r = 0;
    Matrix U;                 // d x r
    Matrix V;                 // d x (d - r)
    std::vector<double> ds;   // signal spectrum, descending
    std::vector<double> dt;   // residual spectrum, descending |.|
    SymMatrix xstar;
    double sigma1 = 0.0;
    double sigma_r = 0.0;
    double sigma_r_plus_1 = 0.0;
    double kappa = 1.0;
};

inline double inner_product(const SymMatrix& a, const SymMatrix& x) {
    if (a.dim() != x.dim())
        throw invalid_input("inner_product: dimension mismatch " + std::to_string(a.dim()) +
                            " vs " + std::to_string(x.dim()));
    return dot(a.matrix(), x.matrix());
}

/// U diag(ds) U^T + V diag(dt) V^T, assembled on the upper triangle and mirrored.
inline SymMatrix assemble_xstar(const Matrix& U, std::span<const double> ds, const Matrix& V,
                                std::span<const double> dt) {
    const std::size_t d = U.rows();
    SymMatrix x(d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i; j < d; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < ds.size(); ++c) s += U(i, c) * ds[c] * U(j, c);
            for (std::size_t c = 0; c < dt.size(); ++c) s += V(i, c) * dt[c] * V(j, c);
            x.set(i, j, s);
        }
    }
    return x;
}

inline GroundTruth generate_ground_truth(std::size_t d, std::size_t r, std::vector<double> ds,
                                         std::vector<double> dt, std::uint64_t seed) {
    if (r < 1 || r > d)
        throw invalid_input("ground truth: need 1 <= r <= d, got r=" + std::to_string(r) +
                            ", d=" + std::to_string(d));
    if (ds.size() != r) throw invalid_input("ground truth: ds must have r entries");
    if (dt.size() != d - r) throw invalid_input("ground truth: dt must have d - r entries");
    for (std::size_t i = 0; i < r; ++i) {
        if (!(ds[i] > 0.0) || !std::isfinite(ds[i]))
            throw invalid_input("ground truth: ds entries must be positive");
        if (i > 0 && ds[i] > ds[i - 1])
            throw invalid_input("ground truth: ds must be descending");
    }
    for (double v : dt)
        if (!std::isfinite(v)) throw invalid_input("ground truth: dt entries must be finite");
    std::stable_sort(dt.begin(), dt.end(),
                     [](double a, double b) { return std::abs(a) > std::abs(b); });
    const double tail = dt.empty() ? 0.0 : std::abs(dt.front());
    if (!(tail < ds.back()))
        throw invalid_input("ground truth: spectral gap violated, max|dt| must be < ds[r-1]");

    CounterRng rng(seed, Stream::basis);
    Matrix g(d, d);
    for (double& v : g.data()) v = rng.normal();
    const Matrix q = orthonormalize(g);

    GroundTruth gt;
    gt.d = d;
    gt.r = r;
    gt.U = Matrix(d, r);
    gt.V = Matrix(d, d - r);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < r; ++j) gt.U(i, j) = q(i, j);
        for (std::size_t j = r; j < d; ++j) gt.V(i, j - r) = q(i, j);
    }
    gt.ds = std::move(ds);
    gt.dt = std::move(dt);
    gt.xstar = assemble_xstar(gt.U, gt.ds, gt.V, gt.dt);
    gt.sigma1 = gt.ds.front();
    gt.sigma_r = gt.ds.back();
    gt.sigma_r_plus_1 = tail;
    gt.kappa = gt.sigma1 / gt.sigma_r;
    return gt;
}

/// The i-th sensing matrix of the ensemble keyed by `seed`. Entries are drawn over the
/// upper triangle in row-major order and mirrored.
inline SymMatrix draw_sensing_matrix(std::size_t d, std::uint64_t seed, std::uint64_t index,
                                     Distribution dist, EntryVariance variance) {
    CounterRng rng(seed, Stream::sensing, index);
    const double off_scale = std::sqrt(offdiag_variance(variance));
    SymMatrix a(d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i; j < d; ++j) {
            const double z = dist == Distribution::gaussian ? rng.normal() : rng.rademacher();
            a.set(i, j, i == j ? z : off_scale * z);
        }
    }
    return a;
}

struct SensingOptions {
    EntryVariance variance = EntryVariance::unit;
    MemoryMode memory = MemoryMode::dense;
};

/// n symmetric sensing matrices with observations y_i = <A_i, X*> + eps_i.
class SensingSet {
public:
    SensingSet(const GroundTruth& gt, std::size_t n, double sigma, Distribution dist,
               std::uint64_t seed, SensingOptions opts = {})
        : d_(gt.d), sigma_(sigma), dist_(dist), seed_(seed), opts_(opts) {
        if (n < 1) throw invalid_input("sensing: n must be >= 1");
        if (!(sigma >= 0.0) || !std::isfinite(sigma))
            throw invalid_input("sensing: sigma must be finite and >= 0");
        observations_.resize(n);
        noise_.resize(n);
        CounterRng noise_rng(seed, Stream::noise);
        if (opts_.memory == MemoryMode::dense) matrices_.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            SymMatrix a = draw_sensing_matrix(d_, seed_, i, dist_, opts_.variance);
            noise_[i] = sigma > 0.0 ? sigma * noise_rng.normal() : 0.0;
            observations_[i] = inner_product(a, gt.xstar) + noise_[i];
            if (opts_.memory == MemoryMode::dense) matrices_.push_back(std::move(a));
        }
    }

    std::size_t n() const noexcept { return observations_.size(); }
    std::size_t dim() const noexcept { return d_; }
    double sigma() const noexcept { return sigma_; }
    Distribution distribution() const noexcept { return dist_; }
    std::uint64_t seed() const noexcept { return seed_; }
    EntryVariance entry_variance() const noexcept { return opts_.variance; }
    MemoryMode memory_mode() const noexcept { return opts_.memory; }
    std::span<const double> observations() const noexcept { return observations_; }
    std::span<const double> noise() const noexcept { return noise_; }

    /// A_i, either stored or regenerated from (seed, i).
    SymMatrix matrix(std::size_t i) const {
        if (opts_.memory == MemoryMode::dense) return matrices_[i];
        return draw_sensing_matrix(d_, seed_, i, dist_, opts_.variance);
    }

    /// Calls f(i, A_i) for i in [lo, hi) without copying stored matrices.
    template <class Fn>
    void visit(std::size_t lo, std::size_t hi, Fn&& f) const {
        for (std::size_t i = lo; i < hi; ++i) {
            if (opts_.memory == MemoryMode::dense) {
                f(i, matrices_[i]);
            } else {
                const SymMatrix a = draw_sensing_matrix(d_, seed_, i, dist_, opts_.variance);
                f(i, a);
            }
        }
    }

private:
    std::size_t d_;
    double sigma_;
    Distribution dist_;
    std::uint64_t seed_;
    SensingOptions opts_;
    std::vector<SymMatrix> matrices_;
    std::vector<double> observations_;
    std::vector<double> noise_;
};

inline SensingSet generate_sensing(const GroundTruth& gt, std::size_t n, double sigma,
                                   Distribution dist, std::uint64_t seed,
                                   SensingOptions opts = {}) {
    return SensingSet(gt, n, sigma, dist, seed, opts);
}

namespace detail {

template <class WeightFn>
void pairwise_weighted_sum(const SensingSet& s, std::size_t lo, std::size_t hi, WeightFn& w,
                           Matrix& out) {
    constexpr std::size_t leaf = 16;
    if (hi - lo <= leaf) {
        s.visit(lo, hi, [&](std::size_t i, const SymMatrix& a) {
            const double wi = w(i, a);
            if (wi != 0.0) out.add_scaled(a.matrix(), wi);
        });
        return;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    Matrix right(out.rows(), out.cols());
    pairwise_weighted_sum(s, lo, mid, w, out);
    pairwise_weighted_sum(s, mid, hi, w, right);
    out += right;
}

} // namespace detail

/// sum_i w(i, A_i) * A_i with a fixed pairwise reduction tree over sample indices, so the
/// result does not depend on how the work might be split.
template <class WeightFn>
SymMatrix weighted_sensing_sum(const SensingSet& s, WeightFn w) {
    Matrix acc(s.dim(), s.dim());
    detail::pairwise_weighted_sum(s, 0, s.n(), w, acc);
    return SymMatrix(std::move(acc));
}

} // namespace msense
