#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mta/errors.hpp"
#include "mta/precision.hpp"
#include "mta/rng.hpp"
#include "mta/sir.hpp"
#include "mta/types.hpp"

namespace mta {

/// A random half/half split of observation indices. Both halves are kept in
/// ascending order so downstream row extraction is canonical.
struct SplitPlan {
    std::vector<Index> indices_half1;
    std::vector<Index> indices_half2;
    std::uint64_t seed = 0;
};

/// Mirror statistics with the selected threshold and the FDP-estimate curve
/// evaluated on the candidate grid {|M_j| : M_j != 0}.
struct MirrorStatistics {
    Vector m;
    std::optional<double> tau_q;
    double q = 0.0;
    std::vector<std::pair<double, double>> fdp_curve;
};

/// Rejection decisions: `rejected` lists predictor indices with M_j > tau_q,
/// `theta_hat` is the same set as a 0/1 vector.
struct DecisionSet {
    std::vector<Index> rejected;
    std::vector<int> theta_hat;
};

inline SplitPlan split_data(Index n, std::uint64_t seed) {
    if (n < 2) throw InsufficientSamplesError("split_data: need n >= 2");
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    auto eng = make_engine(seed);
    std::shuffle(order.begin(), order.end(), eng);

    SplitPlan plan;
    plan.seed = seed;
    const auto half = static_cast<std::size_t>(n / 2);
    plan.indices_half1.assign(order.begin(), order.begin() + half);
    plan.indices_half2.assign(order.begin() + half, order.end());
    std::sort(plan.indices_half1.begin(), plan.indices_half1.end());
    std::sort(plan.indices_half2.begin(), plan.indices_half2.end());
    return plan;
}

/// M_j = sum_h B1_jh * B2_jh: large positive when both halves agree on a
/// signal, symmetric around zero for nulls.
inline Vector mirror_statistics(const CoefficientMatrix& B1, const CoefficientMatrix& B2) {
    if (B1.B.rows() != B2.B.rows() || B1.B.cols() != B2.B.cols())
        throw ShapeError("mirror_statistics: coefficient shapes differ");
    return (B1.B.array() * B2.B.array()).rowwise().sum().matrix();
}

/// FDP estimate at threshold t: #{M_j <= -t} / #{M_j > t}, plus an optional
/// numerator offset for the conservative variant. Infinity when nothing is
/// rejected at t.
inline double fdp_hat(const Vector& m, double t, double fdp_offset = 0.0) {
    if (!(t > 0.0)) throw ConfigError("fdp_hat: t must be > 0");
    Index num = 0, den = 0;
    for (Index j = 0; j < m.size(); ++j) {
        if (m(j) <= -t) ++num;
        if (m(j) > t) ++den;
    }
    if (den == 0) return std::numeric_limits<double>::infinity();
    return (static_cast<double>(num) + fdp_offset) / static_cast<double>(den);
}

/// FDP estimates over the candidate grid {|M_j| : M_j != 0}, ascending in t.
inline std::vector<std::pair<double, double>> fdp_curve(const Vector& m,
                                                        double fdp_offset = 0.0) {
    std::vector<double> grid;
    grid.reserve(static_cast<std::size_t>(m.size()));
    for (Index j = 0; j < m.size(); ++j)
        if (m(j) != 0.0) grid.push_back(std::abs(m(j)));
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    std::vector<std::pair<double, double>> curve;
    curve.reserve(grid.size());
    for (double t : grid) curve.emplace_back(t, fdp_hat(m, t, fdp_offset));
    return curve;
}

/// Smallest candidate threshold whose FDP estimate is <= q; nullopt when no
/// candidate qualifies (reject nothing).
inline std::optional<double> select_threshold(const Vector& m, double q,
                                              double fdp_offset = 0.0) {
    if (!(q > 0.0 && q < 1.0)) throw ConfigError("select_threshold: q must be in (0,1)");
    for (const auto& [t, fdp] : fdp_curve(m, fdp_offset))
        if (fdp <= q) return t;
    return std::nullopt;
}

/// Decisions at a given threshold; an absent threshold rejects nothing.
inline DecisionSet decide(const Vector& m, const std::optional<double>& tau) {
    DecisionSet out;
    out.theta_hat.assign(static_cast<std::size_t>(m.size()), 0);
    if (!tau) return out;
    for (Index j = 0; j < m.size(); ++j) {
        if (m(j) > *tau) {
            out.rejected.push_back(j);
            out.theta_hat[static_cast<std::size_t>(j)] = 1;
        }
    }
    return out;
}

struct MtaResult {
    DecisionSet decisions;
    MirrorStatistics mirror;
    SplitPlan split;
};

/// End-to-end mirror-testing procedure: split the sample, slice and estimate
/// per-slice coefficients on each half with its own precision estimate, form
/// M_j, select the adaptive threshold at level q, and reject. Deterministic
/// given (data, seed).
inline MtaResult mta_procedure(const Dataset& data, int H, double q, std::uint64_t seed,
                               const LambdaRule& lambda_rule = LambdaRule{},
                               double fdp_offset = 0.0, int threads = 0) {
    const Index n = data.n(), p = data.p();
    if (!(q > 0.0 && q < 1.0)) throw ConfigError("mta_procedure: q must be in (0,1)");
    if (n < 4 * static_cast<Index>(H))
        throw InsufficientSamplesError("mta_procedure: need n >= 4H to slice both halves");
    if (data.X.rows() != data.y.size())
        throw ShapeError("mta_procedure: X rows and y length differ");

    MtaResult result;
    result.split = split_data(n, seed);

    CoefficientMatrix coef[2];
    const std::vector<Index>* halves[2] = {&result.split.indices_half1,
                                           &result.split.indices_half2};
    for (int s = 0; s < 2; ++s) {
        const auto& idx = *halves[s];
        const auto m = static_cast<Index>(idx.size());
        Matrix Xh(m, p);
        Vector yh(m);
        for (Index i = 0; i < m; ++i) {
            Xh.row(i) = data.X.row(idx[static_cast<std::size_t>(i)]);
            yh(i) = data.y(idx[static_cast<std::size_t>(i)]);
        }
        auto part = make_partition(yh, H);
        auto omega = nodewise_precision(Xh, lambda_rule, threads);
        coef[s] = estimate_coefficients(Xh, part, omega);
    }

    result.mirror.m = mirror_statistics(coef[0], coef[1]);
    result.mirror.q = q;
    result.mirror.fdp_curve = fdp_curve(result.mirror.m, fdp_offset);
    result.mirror.tau_q = select_threshold(result.mirror.m, q, fdp_offset);
    result.decisions = decide(result.mirror.m, result.mirror.tau_q);
    return result;
}

}  // namespace mta
