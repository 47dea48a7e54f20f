#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "mta/errors.hpp"
#include "mta/simgen.hpp"
#include "mta/types.hpp"

namespace mta {

/// Pooled tail-frequency comparison of a null mirror-statistic sample:
/// left_frac(t) = P_hat(M < -t), right_frac(t) = P_hat(M > t).
struct SymmetryReport {
    Vector t_grid;
    Vector left_frac;
    Vector right_frac;
    double max_gap = 0.0;
};

/// Empirical check that null mirror statistics are sign-symmetric. Entries
/// are pooled across replications (rows) and null features (columns); the
/// per-feature distributional statement is approximated by this pooled
/// frequency comparison.
inline SymmetryReport symmetry_check(const Matrix& null_mirror_samples,
                                     const Vector& t_grid) {
    if (null_mirror_samples.rows() < 100)
        throw TooFewSamplesError("symmetry_check: need at least 100 replication rows");
    if (null_mirror_samples.cols() < 1)
        throw ShapeError("symmetry_check: need at least one null feature column");
    if (!null_mirror_samples.allFinite())
        throw InvalidDataError("symmetry_check: non-finite mirror statistic");
    if (t_grid.size() < 1) throw ConfigError("symmetry_check: empty threshold grid");
    for (Index k = 0; k < t_grid.size(); ++k)
        if (!(t_grid(k) >= 0.0) || !std::isfinite(t_grid(k)))
            throw ConfigError("symmetry_check: thresholds must be finite and >= 0");

    const double total =
        static_cast<double>(null_mirror_samples.rows() * null_mirror_samples.cols());
    SymmetryReport report;
    report.t_grid = t_grid;
    report.left_frac.resize(t_grid.size());
    report.right_frac.resize(t_grid.size());
    report.max_gap = 0.0;
    for (Index k = 0; k < t_grid.size(); ++k) {
        const double t = t_grid(k);
        const double left =
            (null_mirror_samples.array() < -t).count() / total;
        const double right =
            (null_mirror_samples.array() > t).count() / total;
        report.left_frac(k) = left;
        report.right_frac(k) = right;
        report.max_gap = std::max(report.max_gap, std::abs(left - right));
    }
    return report;
}

/// Nearest-rank empirical quantile (prob in [0,1]) of a sample.
inline double empirical_quantile(Vector values, double prob) {
    if (values.size() < 1) throw InvalidDataError("empirical_quantile: empty sample");
    if (!(prob >= 0.0 && prob <= 1.0))
        throw ConfigError("empirical_quantile: prob must be in [0,1]");
    std::sort(values.begin(), values.end());
    const auto m = values.size();
    const auto rank = static_cast<Index>(
        std::ceil(prob * static_cast<double>(m)));
    return values(std::clamp<Index>(rank - 1, 0, m - 1));
}

/// Per-cell aggregate of replication records. A cell is one
/// (setting, rho, method, q) combination; errored records are counted but
/// excluded from the means. SE is the standard error of the mean, 0 for a
/// single record by convention.
struct CellSummary {
    int setting = 0;
    double rho = 0.0;
    std::string method;
    double q = 0.0;
    int n_records = 0;
    int n_errored = 0;
    double mean_fdp = 0.0;
    double se_fdp = 0.0;
    double mean_power = 0.0;
    double se_power = 0.0;
};

namespace detail {

inline std::pair<double, double> mean_se(const std::vector<double>& values) {
    const auto m = values.size();
    if (m == 0) return {0.0, 0.0};
    double sum = 0.0;
    for (double v : values) sum += v;
    const double mean = sum / static_cast<double>(m);
    if (m == 1) return {mean, 0.0};
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(m - 1));
    return {mean, sd / std::sqrt(static_cast<double>(m))};
}

}  // namespace detail

/// Groups records into cells and reports mean and standard error of FDP and
/// power per cell, ordered by (setting, rho, method, q).
inline std::vector<CellSummary> empirical_fdr(
    const std::vector<ReplicationRecord>& records) {
    using Key = std::tuple<int, double, std::string, double>;
    struct Bucket {
        std::vector<double> fdp, power;
        int errored = 0;
    };
    std::map<Key, Bucket> cells;
    for (const auto& rec : records) {
        Bucket& b = cells[Key{rec.setting, rec.rho, rec.method, rec.q}];
        if (rec.errored) {
            ++b.errored;
            continue;
        }
        b.fdp.push_back(rec.fdp);
        b.power.push_back(rec.power);
    }

    std::vector<CellSummary> out;
    out.reserve(cells.size());
    for (const auto& [key, bucket] : cells) {
        CellSummary cell;
        cell.setting = std::get<0>(key);
        cell.rho = std::get<1>(key);
        cell.method = std::get<2>(key);
        cell.q = std::get<3>(key);
        cell.n_records = static_cast<int>(bucket.fdp.size());
        cell.n_errored = bucket.errored;
        std::tie(cell.mean_fdp, cell.se_fdp) = detail::mean_se(bucket.fdp);
        std::tie(cell.mean_power, cell.se_power) = detail::mean_se(bucket.power);
        out.push_back(std::move(cell));
    }
    return out;
}

}  // namespace mta
