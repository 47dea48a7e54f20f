#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "mta/errors.hpp"
#include "mta/mirror.hpp"
#include "mta/parallel.hpp"
#include "mta/rng.hpp"
#include "mta/types.hpp"

namespace mta {

/// Kernel bandwidth policy: median pairwise distance by default (1.0 when the
/// median is zero), or a fixed positive value.
struct BandwidthRule {
    double fixed = 0.0;  // <= 0 means median heuristic

    static BandwidthRule median_heuristic() { return BandwidthRule{0.0}; }
    static BandwidthRule fixed_value(double bw) { return BandwidthRule{bw}; }
};

/// Marginal p-values for one method, tagged with its name.
struct PValueVector {
    Vector p;
    std::string method_tag;
};

namespace detail {

inline bool is_constant(const Vector& v) {
    return v.size() == 0 || (v.array() == v(0)).all();
}

inline double median_pairwise_distance(const Vector& v) {
    const Index n = v.size();
    std::vector<double> d;
    d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) d.push_back(std::abs(v(i) - v(j)));
    auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    return *mid;
}

inline double bandwidth_for(const Vector& v, const BandwidthRule& rule) {
    if (rule.fixed > 0.0) return rule.fixed;
    const double med = median_pairwise_distance(v);
    return med > 0.0 ? med : 1.0;
}

inline Matrix gaussian_kernel(const Vector& v, double bw) {
    const Index n = v.size();
    const double inv = 1.0 / (2.0 * bw * bw);
    Matrix K(n, n);
    for (Index i = 0; i < n; ++i) {
        K(i, i) = 1.0;
        for (Index j = i + 1; j < n; ++j) {
            const double d = v(i) - v(j);
            K(i, j) = K(j, i) = std::exp(-d * d * inv);
        }
    }
    return K;
}

inline void double_center(Matrix& K) {
    const Vector row_means = K.rowwise().mean();
    const double grand = row_means.mean();
    K.colwise() -= row_means;
    K.rowwise() -= row_means.transpose();
    K.array() += grand;
}

/// Greedy pivoted Cholesky of a PSD matrix presented by a column generator:
/// returns G with  A ~= G G'  and residual trace at most `tol`. Only O(n*rank)
/// entries of A are ever materialized.
inline Matrix pivoted_cholesky(Index n, const std::function<void(Index, Vector&)>& column,
                               Vector diag, double tol, Index max_rank) {
    Matrix G(n, std::min(n, max_rank));
    Vector col(n);
    Index r = 0;
    double remaining = diag.sum();
    while (r < G.cols() && remaining > tol) {
        Index pivot = 0;
        diag.maxCoeff(&pivot);
        if (diag(pivot) <= 0.0) break;
        column(pivot, col);
        if (r > 0)
            col.noalias() -= G.leftCols(r) * G.row(pivot).head(r).transpose();
        const double root = std::sqrt(diag(pivot));
        G.col(r) = col / root;
        diag -= G.col(r).cwiseAbs2();
        diag = diag.cwiseMax(0.0);
        remaining = diag.sum();
        ++r;
    }
    return G.leftCols(r);
}

/// Low-rank factor of the doubly centered kernel matrix HLH for the values in
/// `v`, built without storing the full kernel.
inline Matrix centered_kernel_factor(const Vector& v, double bw, double tol) {
    const Index n = v.size();
    const double inv = 1.0 / (2.0 * bw * bw);
    Vector row_means = Vector::Zero(n);
    for (Index i = 0; i < n; ++i) {
        row_means(i) += 1.0;
        for (Index j = i + 1; j < n; ++j) {
            const double d = v(i) - v(j);
            const double k = std::exp(-d * d * inv);
            row_means(i) += k;
            row_means(j) += k;
        }
    }
    row_means /= static_cast<double>(n);
    const double grand = row_means.mean();

    Vector diag(n);
    for (Index i = 0; i < n; ++i) diag(i) = std::max(1.0 - 2.0 * row_means(i) + grand, 0.0);
    auto column = [&](Index c, Vector& out) {
        for (Index a = 0; a < n; ++a) {
            const double d = v(a) - v(c);
            out(a) = std::exp(-d * d * inv) - row_means(a) - row_means(c) + grand;
        }
    };
    return pivoted_cholesky(n, column, std::move(diag), tol, std::min<Index>(n, 384));
}

/// Low-rank factor of the (uncentered) Gaussian kernel matrix.
inline Matrix kernel_factor(const Vector& v, double bw, double tol) {
    const Index n = v.size();
    const double inv = 1.0 / (2.0 * bw * bw);
    auto column = [&](Index c, Vector& out) {
        for (Index a = 0; a < n; ++a) {
            const double d = v(a) - v(c);
            out(a) = std::exp(-d * d * inv);
        }
    };
    return pivoted_cholesky(n, column, Vector::Ones(n), tol, std::min<Index>(n, 384));
}

}  // namespace detail

/// Biased HSIC V-statistic trace(K H L H)/n^2 with Gaussian kernels and
/// median-heuristic bandwidths. Computed as <HKH, HLH> so swapping the
/// arguments produces the bitwise-identical value. Constant input gives 0.
inline double hsic_statistic(const Vector& x, const Vector& y,
                             const BandwidthRule& rule = BandwidthRule::median_heuristic()) {
    const Index n = x.size();
    if (y.size() != n) throw ShapeError("hsic_statistic: length mismatch");
    if (n < 5) throw InsufficientSamplesError("hsic_statistic: need n >= 5");
    if (!x.allFinite() || !y.allFinite())
        throw InvalidDataError("hsic_statistic: non-finite input");
    if (detail::is_constant(x) || detail::is_constant(y)) return 0.0;

    Matrix K = detail::gaussian_kernel(x, detail::bandwidth_for(x, rule));
    Matrix L = detail::gaussian_kernel(y, detail::bandwidth_for(y, rule));
    detail::double_center(K);
    detail::double_center(L);
    return (K.array() * L.array()).sum() / (static_cast<double>(n) * static_cast<double>(n));
}

struct HsicBatchResult {
    Vector statistics;
    Vector p_values;
};

/// Permutation p-values for testing each column of X against y with HSIC.
/// One shared set of `n_perm` permutations is reused across columns, and both
/// kernel matrices enter through low-rank pivoted-Cholesky factors, making the
/// permuted statistics exact (to factor tolerance) at a fraction of the dense
/// cost. p-values use the (1 + #{perm >= observed}) / (n_perm + 1) rule.
inline HsicBatchResult hsic_pvalues_batch(const Matrix& X, const Vector& y, int n_perm,
                                          std::uint64_t seed, int threads = 0) {
    const Index n = X.rows(), p = X.cols();
    if (y.size() != n) throw ShapeError("hsic_pvalues_batch: length mismatch");
    if (n < 5) throw InsufficientSamplesError("hsic_pvalues_batch: need n >= 5");
    if (n_perm < 99) throw ConfigError("hsic_pvalues_batch: need n_perm >= 99");
    if (!X.allFinite() || !y.allFinite())
        throw InvalidDataError("hsic_pvalues_batch: non-finite input");

    HsicBatchResult out;
    out.statistics = Vector::Zero(p);
    out.p_values = Vector::Ones(p);
    const double n2 = static_cast<double>(n) * static_cast<double>(n);
    const double factor_tol = 1e-10;

    if (detail::is_constant(y)) return out;
    const Matrix F = detail::centered_kernel_factor(
        y, detail::bandwidth_for(y, BandwidthRule::median_heuristic()), factor_tol);
    if (F.cols() == 0) return out;

    std::vector<std::vector<Index>> perms(static_cast<std::size_t>(n_perm));
    auto eng = make_engine(seed);
    for (auto& perm : perms) {
        perm.resize(static_cast<std::size_t>(n));
        std::iota(perm.begin(), perm.end(), Index{0});
        std::shuffle(perm.begin(), perm.end(), eng);
    }

    std::vector<Index> live;
    for (Index j = 0; j < p; ++j)
        if (!detail::is_constant(X.col(j))) live.push_back(j);

    // Feature factors are built per block so the permuted F can be formed
    // once per permutation and shared across the block's columns.
    const Index block = 16;
    std::vector<Matrix> G(static_cast<std::size_t>(block));
    Matrix Fp(n, F.cols());
    for (std::size_t lo = 0; lo < live.size(); lo += static_cast<std::size_t>(block)) {
        const std::size_t hi = std::min(live.size(), lo + static_cast<std::size_t>(block));
        parallel_for(hi - lo, [&](std::size_t b) {
            const Index j = live[lo + b];
            G[b] = detail::kernel_factor(
                X.col(j), detail::bandwidth_for(X.col(j), BandwidthRule::median_heuristic()),
                factor_tol);
        }, threads);

        std::vector<double> observed(hi - lo);
        std::vector<int> exceed(hi - lo, 0);
        for (std::size_t b = 0; b < hi - lo; ++b) {
            observed[b] = (G[b].transpose() * F).squaredNorm() / n2;
            out.statistics(live[lo + b]) = observed[b];
        }
        for (int k = 0; k < n_perm; ++k) {
            const auto& perm = perms[static_cast<std::size_t>(k)];
            for (Index i = 0; i < n; ++i) Fp.row(i) = F.row(perm[static_cast<std::size_t>(i)]);
            parallel_for(hi - lo, [&](std::size_t b) {
                const double stat = (G[b].transpose() * Fp).squaredNorm() / n2;
                if (stat >= observed[b]) ++exceed[b];
            }, threads);
        }
        for (std::size_t b = 0; b < hi - lo; ++b)
            out.p_values(live[lo + b]) =
                (1.0 + exceed[b]) / static_cast<double>(n_perm + 1);
    }
    return out;
}

/// Permutation p-value for a single predictor; same conventions as the batch.
inline double hsic_pvalue(const Vector& x, const Vector& y, int n_perm,
                          std::uint64_t seed) {
    Matrix X(x.size(), 1);
    X.col(0) = x;
    return hsic_pvalues_batch(X, y, n_perm, seed).p_values(0);
}

/// Benjamini-Hochberg step-up: reject every p_j <= p_(k*) where
/// k* = max{k : p_(k) <= k q / m}; empty when no k qualifies.
inline DecisionSet bh_procedure(const PValueVector& pvals, double q) {
    if (!(q > 0.0 && q < 1.0)) throw ConfigError("bh_procedure: q must be in (0,1)");
    const Index m = pvals.p.size();
    for (Index j = 0; j < m; ++j)
        if (!(pvals.p(j) >= 0.0 && pvals.p(j) <= 1.0))
            throw InvalidDataError("bh_procedure: p-value outside [0,1]");

    std::vector<double> sorted(pvals.p.data(), pvals.p.data() + m);
    std::sort(sorted.begin(), sorted.end());
    double threshold = -1.0;
    for (Index k = m; k >= 1; --k) {
        if (sorted[static_cast<std::size_t>(k - 1)] <=
            static_cast<double>(k) * q / static_cast<double>(m)) {
            threshold = sorted[static_cast<std::size_t>(k - 1)];
            break;
        }
    }
    DecisionSet out;
    out.theta_hat.assign(static_cast<std::size_t>(m), 0);
    if (threshold < 0.0) return out;
    for (Index j = 0; j < m; ++j) {
        if (pvals.p(j) <= threshold) {
            out.rejected.push_back(j);
            out.theta_hat[static_cast<std::size_t>(j)] = 1;
        }
    }
    return out;
}

struct HsicBhResult {
    DecisionSet decisions;
    PValueVector pvalues;
};

/// Marginal HSIC permutation tests on every predictor followed by BH.
inline HsicBhResult hsic_bh(const Dataset& data, double q, int n_perm,
                            std::uint64_t seed, int threads = 0) {
    HsicBhResult out;
    out.pvalues.p = hsic_pvalues_batch(data.X, data.y, n_perm, seed, threads).p_values;
    out.pvalues.method_tag = "hsic_bh";
    out.decisions = bh_procedure(out.pvalues, q);
    return out;
}

}  // namespace mta
