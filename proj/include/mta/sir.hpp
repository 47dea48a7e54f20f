#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "mta/errors.hpp"
#include "mta/precision.hpp"
#include "mta/types.hpp"

namespace mta {

/// Ordered response slices. Membership is positional: the sorted order
/// statistics are cut into H consecutive blocks of size ceil(n/H) (the last
/// block takes the remainder), with ties broken by observation index.
/// `boundaries` holds the H-1 cut values; slice h covers the half-open
/// interval (boundaries[h-1], boundaries[h]] except for ties that straddle a
/// cut, which stay with their positional block.
struct SlicePartition {
    Vector boundaries;
    std::vector<int> slice_of;
    std::vector<int> counts;
    int H = 0;

    Index n() const { return static_cast<Index>(slice_of.size()); }
};

/// Per-slice regression coefficients B (p x H), column h belonging to the
/// indicator of slice h.
struct CoefficientMatrix {
    Matrix B;
    int H = 0;
    Index n_used = 0;
    SlicePartition partition_ref;
};

/// Between-slice scatter of the predictor means, (1/H) sum_h
/// (xbar_h - xbar)(xbar_h - xbar)'. Diagnostic only: its leading eigenspace
/// tracks the reduction directions.
struct LambdaEstimate {
    Matrix matrix;
    int H = 0;
};

inline SlicePartition make_partition(const Vector& y, int H) {
    const Index n = y.size();
    if (H < 2) throw ConfigError("make_partition: need H >= 2");
    if (n < 2 * static_cast<Index>(H))
        throw TooFewSamplesError("make_partition: need n >= 2H, got n = " +
                                 std::to_string(n));
    if (!y.allFinite()) throw InvalidDataError("make_partition: non-finite response");

    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return y(a) < y(b); });
    if (y(order.front()) == y(order.back()))
        throw DegenerateResponseError("make_partition: constant response");

    const Index c = (n + H - 1) / H;  // ceil(n/H)
    if (c * (H - 1) >= n)
        throw TooFewSamplesError(
            "make_partition: last slice would be empty at H = " + std::to_string(H));

    SlicePartition part;
    part.H = H;
    part.slice_of.assign(static_cast<std::size_t>(n), 0);
    part.counts.assign(static_cast<std::size_t>(H), 0);
    for (Index r = 0; r < n; ++r) {
        const int h = static_cast<int>(std::min<Index>(r / c, H - 1));
        part.slice_of[static_cast<std::size_t>(order[r])] = h;
        ++part.counts[static_cast<std::size_t>(h)];
    }
    part.boundaries.resize(H - 1);
    for (int h = 1; h < H; ++h) part.boundaries(h - 1) = y(order[c * h - 1]);
    for (int h = 1; h + 1 < H; ++h)
        if (!(part.boundaries(h) > part.boundaries(h - 1)))
            throw DegenerateResponseError(
                "make_partition: tie block spans an entire slice");
    return part;
}

/// n x H matrix F with F(i, h) = 1 iff observation i falls in slice h.
inline Matrix slice_indicator_matrix(const SlicePartition& partition) {
    const Index n = partition.n();
    Matrix F = Matrix::Zero(n, partition.H);
    for (Index i = 0; i < n; ++i)
        F(i, partition.slice_of[static_cast<std::size_t>(i)]) = 1.0;
    return F;
}

/// B = Omega * X_c' F_c / n with both predictor and indicator columns
/// mean-centered, so column h is a precision-weighted regression of the
/// slice-h indicator on the predictors.
inline CoefficientMatrix estimate_coefficients(const Matrix& X,
                                               const SlicePartition& partition,
                                               const PrecisionEstimate& omega) {
    const Index n = X.rows(), p = X.cols();
    if (partition.n() != n)
        throw ShapeError("estimate_coefficients: partition built on different n");
    if (omega.matrix.rows() != p || omega.matrix.cols() != p)
        throw ShapeError("estimate_coefficients: omega dimension mismatch");
    if (!X.allFinite()) throw InvalidDataError("estimate_coefficients: non-finite X");

    Matrix Xc = X;
    Xc.rowwise() -= X.colwise().mean();
    Matrix Fc = slice_indicator_matrix(partition);
    Fc.rowwise() -= Fc.colwise().mean();

    CoefficientMatrix out;
    out.B.noalias() = omega.matrix * (Xc.transpose() * Fc) / static_cast<double>(n);
    out.H = partition.H;
    out.n_used = n;
    out.partition_ref = partition;
    return out;
}

inline LambdaEstimate lambda_hat(const Matrix& X, const SlicePartition& partition) {
    const Index n = X.rows(), p = X.cols();
    if (partition.n() != n) throw ShapeError("lambda_hat: partition built on different n");

    const Vector global_mean = X.colwise().mean();
    Matrix acc = Matrix::Zero(p, p);
    for (int h = 0; h < partition.H; ++h) {
        Vector mean_h = Vector::Zero(p);
        for (Index i = 0; i < n; ++i)
            if (partition.slice_of[static_cast<std::size_t>(i)] == h)
                mean_h += X.row(i).transpose();
        mean_h /= static_cast<double>(partition.counts[static_cast<std::size_t>(h)]);
        const Vector d = mean_h - global_mean;
        acc.noalias() += d * d.transpose();
    }
    acc /= static_cast<double>(partition.H);
    acc = ((acc + acc.transpose()) / 2.0).eval();
    return LambdaEstimate{std::move(acc), partition.H};
}

}  // namespace mta
