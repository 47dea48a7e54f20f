#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mta/baselines.hpp"
#include "mta/errors.hpp"
#include "mta/mirror.hpp"
#include "mta/parallel.hpp"
#include "mta/rng.hpp"
#include "mta/types.hpp"

namespace mta {

/// Noise-scale policy. `snr_matched` follows the simulation convention of
/// holding var(f_setting)/sigma equal to var(f_1)/sigma1, with the variances
/// estimated by a fixed-seed Monte Carlo over the index projections.
/// `psi_scaled` sets sigma = psi/sqrt(n); `fixed` uses the value as given.
struct SigmaRule {
    enum class Kind { snr_matched, psi_scaled, fixed };
    Kind kind = Kind::snr_matched;
    double sigma1 = 0.5;
    double psi = 10.0;
    double value = 0.5;

    static SigmaRule snr_matched(double sigma1 = 0.5) {
        SigmaRule r;
        r.kind = Kind::snr_matched;
        r.sigma1 = sigma1;
        return r;
    }
    static SigmaRule psi_scaled(double psi) {
        SigmaRule r;
        r.kind = Kind::psi_scaled;
        r.psi = psi;
        return r;
    }
    static SigmaRule fixed(double sigma) {
        SigmaRule r;
        r.kind = Kind::fixed;
        r.value = sigma;
        return r;
    }
};

/// One simulation cell: design, truth, and response-model parameters. When
/// design_file is nonempty the Gaussian design is replaced by the matrix read
/// from that file (held fixed across replications), and n, p are taken from
/// its shape.
struct SimConfig {
    Index n = 1000;
    Index p = 200;
    double rho = 0.0;
    int setting = 1;
    int n_indices = 2;
    int sparsity_per_index = 20;
    double coef_sd = -1.0;  // <= 0: use 20/sqrt(n)
    SigmaRule sigma_rule{};
    std::uint64_t seed = 0;
    std::string design_file;  // empty: generate AR(1) Gaussian designs

    void validate() const {
        if (n < 1 || p < 1) throw ConfigError("SimConfig: n and p must be positive");
        if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("SimConfig: rho must be in [0,1)");
        if (setting < 1 || setting > 4) throw ConfigError("SimConfig: setting must be 1..4");
        if ((setting == 4) != (n_indices == 5))
            throw ConfigError("SimConfig: n_indices must be 5 exactly for setting 4");
        if (setting != 4 && n_indices != 2)
            throw ConfigError("SimConfig: settings 1-3 use 2 indices");
        if (sparsity_per_index < 0 || sparsity_per_index > p)
            throw ConfigError("SimConfig: sparsity_per_index must be in [0, p]");
    }
};

/// Index coefficient rows plus the union of their supports (the feature set
/// the tests are scored against).
struct GroundTruth {
    Matrix A;  // n_indices x p
    std::vector<Index> markov_blanket;
};

/// Rows i.i.d. N(0, Sigma) with Sigma_ij = rho^|i-j|, generated by the AR(1)
/// recursion x_j = rho x_{j-1} + sqrt(1-rho^2) eps_j.
inline Matrix gen_design(Index n, Index p, double rho, std::uint64_t seed) {
    if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("gen_design: rho must be in [0,1)");
    if (n < 1 || p < 1) throw ConfigError("gen_design: n and p must be positive");
    auto eng = make_engine(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double carry = std::sqrt(1.0 - rho * rho);
    Matrix X(n, p);
    for (Index i = 0; i < n; ++i) {
        X(i, 0) = gauss(eng);
        for (Index j = 1; j < p; ++j) X(i, j) = rho * X(i, j - 1) + carry * gauss(eng);
    }
    return X;
}

namespace detail {

/// Parses one comma-separated line into doubles; returns false on the first
/// token that is not a plain number (surrounding blanks and a trailing CR are
/// tolerated).
inline bool parse_csv_row(const std::string& line, std::vector<double>& out) {
    out.clear();
    std::stringstream ss(line);
    std::string token;
    while (std::getline(ss, token, ',')) {
        std::size_t b = token.find_first_not_of(" \t\r");
        if (b == std::string::npos) return false;
        std::size_t e = token.find_last_not_of(" \t\r");
        double v = 0.0;
        const char* first = token.data() + b;
        const char* last = token.data() + e + 1;
        if (first != last && *first == '+') ++first;  // from_chars rejects '+'
        auto [ptr, ec] = std::from_chars(first, last, v);
        if (ec != std::errc{} || ptr != last) return false;
        out.push_back(v);
    }
    return !out.empty();
}

}  // namespace detail

/// Reads a comma-separated numeric matrix, skipping one optional header row
/// (detected as a first line that does not parse as numbers). Every data row
/// must have the same width.
inline Matrix load_design_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("load_design_matrix: cannot open '" + path + "'");

    std::vector<std::vector<double>> rows;
    std::vector<double> parsed;
    std::string line;
    bool first_content_line = true;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;  // blank
        if (!detail::parse_csv_row(line, parsed)) {
            if (first_content_line) {  // header row
                first_content_line = false;
                continue;
            }
            throw InvalidDataError("load_design_matrix: non-numeric entry at line " +
                                   std::to_string(lineno) + " of '" + path + "'");
        }
        first_content_line = false;
        if (!rows.empty() && parsed.size() != rows.front().size())
            throw ShapeError("load_design_matrix: line " + std::to_string(lineno) +
                             " has " + std::to_string(parsed.size()) + " fields, expected " +
                             std::to_string(rows.front().size()));
        rows.push_back(parsed);
    }
    if (rows.empty()) throw ShapeError("load_design_matrix: no data rows in '" + path + "'");

    Matrix X(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (Index i = 0; i < X.rows(); ++i)
        for (Index j = 0; j < X.cols(); ++j)
            X(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return X;
}

/// Uniformly random supports of the given size per index row; nonzero entries
/// i.i.d. N(0, sd^2) with sd = coef_sd, defaulting to 20/sqrt(n). Coefficient
/// draws are made in sorted support order so they depend only on the chosen
/// set, not on the sampling path.
inline GroundTruth gen_coefficients(Index p, int n_indices, int sparsity_per_index,
                                    Index n, std::uint64_t seed, double coef_sd = -1.0) {
    if (n_indices < 1) throw ConfigError("gen_coefficients: need at least one index");
    if (sparsity_per_index < 0 || sparsity_per_index > p)
        throw ConfigError("gen_coefficients: sparsity_per_index must be in [0, p]");
    if (n < 1) throw ConfigError("gen_coefficients: n must be positive");

    const double sd = coef_sd > 0.0 ? coef_sd : 20.0 / std::sqrt(static_cast<double>(n));
    auto eng = make_engine(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    GroundTruth truth;
    truth.A = Matrix::Zero(n_indices, p);
    std::set<Index> blanket;
    std::vector<Index> pool(static_cast<std::size_t>(p));
    for (int l = 0; l < n_indices; ++l) {
        std::iota(pool.begin(), pool.end(), Index{0});
        std::shuffle(pool.begin(), pool.end(), eng);
        std::vector<Index> support(pool.begin(), pool.begin() + sparsity_per_index);
        std::sort(support.begin(), support.end());
        for (Index j : support) {
            truth.A(l, j) = sd * gauss(eng);
            blanket.insert(j);
        }
    }
    truth.markov_blanket.assign(blanket.begin(), blanket.end());
    return truth;
}

struct ResponseDraw {
    Vector y;
    double sigma_used = 0.0;
};

namespace detail {

inline double relu(double v) { return v > 0.0 ? v : 0.0; }

/// Noiseless signal value for one draw of the index projections u.
inline double signal_value(int setting, const Vector& u) {
    switch (setting) {
        case 1:
            return std::sin(u(0)) + u(1) * u(1) * u(1);
        case 2: {
            const double w = 1.5 + u(1);
            return 3.0 * u(0) / (0.5 + w * w);
        }
        case 3:
            return u(0) * u(0) * u(0);
        default: {
            double acc = 0.0;
            for (Index l = 0; l < u.size(); ++l) acc += relu(u(l));
            return 1.0 / (1.0 + std::exp(acc));
        }
    }
}

/// Monte Carlo variance of the setting's signal under u ~ N(0, cov), with a
/// fixed internal seed so repeated calls agree exactly.
inline double mc_signal_variance(int setting, const Matrix& cov, Index draws = 100000) {
    const Index d = cov.rows();
    Matrix jittered = cov + 1e-12 * Matrix::Identity(d, d);
    Eigen::LLT<Matrix> llt(jittered);
    Matrix L = llt.matrixL();
    auto eng = make_engine(0x73696d5f6d632e31ULL);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vector z(d), u(d);
    double sum = 0.0, sumsq = 0.0;
    for (Index t = 0; t < draws; ++t) {
        for (Index l = 0; l < d; ++l) z(l) = gauss(eng);
        u.noalias() = L * z;
        const double f = signal_value(setting, u);
        sum += f;
        sumsq += f * f;
    }
    const double mean = sum / static_cast<double>(draws);
    return std::max(sumsq / static_cast<double>(draws) - mean * mean, 0.0);
}

}  // namespace detail

/// Response draw for the configured setting. The heteroscedastic setting (3)
/// multiplies the noise by the second index projection; all others add
/// sigma * eps. Under the SNR-matched rule sigma solves
/// var(f_setting)/sigma = var(f_1)/sigma1, where both variances come from a
/// fixed-seed Monte Carlo over projections whose covariance is estimated from
/// the realized design, and f_1 is referenced on the truth's first two index
/// rows. A signal-free truth falls back to sigma = sigma1.
inline ResponseDraw gen_response(const Matrix& X, const GroundTruth& truth, int setting,
                                 const SigmaRule& rule, std::uint64_t seed) {
    const Index n = X.rows();
    const auto d = truth.A.rows();
    if (setting < 1 || setting > 4) throw ConfigError("gen_response: setting must be 1..4");
    const Index want = setting == 4 ? 5 : 2;
    if (d != want)
        throw ConfigError("gen_response: setting " + std::to_string(setting) + " needs " +
                          std::to_string(want) + " index rows, got " + std::to_string(d));
    if (truth.A.cols() != X.cols())
        throw ShapeError("gen_response: truth dimension does not match X");

    const Matrix U = X * truth.A.transpose();  // n x d projections

    double sigma = 0.0;
    switch (rule.kind) {
        case SigmaRule::Kind::fixed:
            sigma = rule.value;
            break;
        case SigmaRule::Kind::psi_scaled:
            sigma = rule.psi / std::sqrt(static_cast<double>(n));
            break;
        case SigmaRule::Kind::snr_matched: {
            Matrix Uc = U;
            Uc.rowwise() -= U.colwise().mean();
            const Matrix cov = Uc.transpose() * Uc / static_cast<double>(n);
            const double var_f = detail::mc_signal_variance(setting, cov);
            const double var_f1 =
                detail::mc_signal_variance(1, cov.topLeftCorner(2, 2));
            sigma = var_f1 > 1e-12 ? rule.sigma1 * var_f / var_f1 : rule.sigma1;
            break;
        }
    }

    auto eng = make_engine(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    ResponseDraw out;
    out.sigma_used = sigma;
    out.y.resize(n);
    for (Index i = 0; i < n; ++i) {
        const Vector u = U.row(i).transpose();
        const double f = detail::signal_value(setting, u);
        const double eps = gauss(eng);
        out.y(i) = setting == 3 ? f + u(1) * sigma * eps : f + sigma * eps;
    }
    return out;
}

struct MetricsRecord {
    int tp = 0;
    int fp = 0;
    double power = 0.0;
    double fdp = 0.0;
};

/// Confusion counts of a decision set against the ground-truth blanket:
/// power = TP/|MB| (0 when the blanket is empty), FDP = FP/max(R, 1).
inline MetricsRecord evaluate(const DecisionSet& decisions, const GroundTruth& truth) {
    MetricsRecord rec;
    const std::set<Index> blanket(truth.markov_blanket.begin(),
                                  truth.markov_blanket.end());
    for (Index j : decisions.rejected)
        if (blanket.count(j)) ++rec.tp;
    rec.fp = static_cast<int>(decisions.rejected.size()) - rec.tp;
    rec.power = blanket.empty() ? 0.0
                                : static_cast<double>(rec.tp) /
                                      static_cast<double>(blanket.size());
    rec.fdp = static_cast<double>(rec.fp) /
              std::max<double>(static_cast<double>(decisions.rejected.size()), 1.0);
    return rec;
}

/// One method run on one replication, in long format.
struct ReplicationRecord {
    int setting = 0;
    double rho = 0.0;
    std::string method;
    int rep = 0;
    std::uint64_t seed = 0;
    double q = 0.0;
    int tp = 0;
    int fp = 0;
    double power = 0.0;
    double fdp = 0.0;
    int n_rejected = 0;
    std::optional<double> tau_q;
    double wall_ms = 0.0;
    bool errored = false;
    std::string error;
};

/// Knobs shared by every replication of a run.
struct RunOptions {
    int H = 20;
    LambdaRule lambda_rule{};
    double fdp_offset = 0.0;
    int n_perm = 199;
    int threads = 0;  // replication-level worker pool
};

/// Per-replication RNG streams, all derived from the replication seed by
/// fixed counters so a method's stream does not depend on which other methods
/// run.
struct ReplicationSeeds {
    std::uint64_t design, truth, response, mta, hsic;

    static ReplicationSeeds for_rep(std::uint64_t base_seed, int rep) {
        const std::uint64_t r = derive_seed(base_seed, static_cast<std::uint64_t>(rep));
        return ReplicationSeeds{derive_seed(r, 0), derive_seed(r, 1), derive_seed(r, 2),
                                derive_seed(r, 3), derive_seed(r, 4)};
    }
};

/// Runs every method on n_reps independently generated replications of the
/// cell. Replications execute in a worker pool; record order and content are
/// deterministic given (config, methods, n_reps, q, base_seed) regardless of
/// worker count. A method failure yields an errored record and the run
/// continues. With config.design_file set, the file's matrix is loaded once
/// and reused as the design of every replication (truth and response are
/// still redrawn per replication).
inline std::vector<ReplicationRecord> run_replications(
    const SimConfig& config, const std::vector<std::string>& methods, int n_reps,
    double q, std::uint64_t base_seed, const RunOptions& options = RunOptions{}) {
    config.validate();
    if (n_reps < 1) throw ConfigError("run_replications: need n_reps >= 1");
    if (!(q > 0.0 && q < 1.0)) throw ConfigError("run_replications: q must be in (0,1)");
    for (const auto& m : methods)
        if (m != "mta" && m != "hsic_bh")
            throw ConfigError("run_replications: unknown method '" + m + "'");

    std::optional<Matrix> file_design;
    Index n_eff = config.n;
    Index p_eff = config.p;
    if (!config.design_file.empty()) {
        file_design = load_design_matrix(config.design_file);
        n_eff = file_design->rows();
        p_eff = file_design->cols();
        if (config.sparsity_per_index > p_eff)
            throw ConfigError("run_replications: sparsity_per_index exceeds the " +
                              std::to_string(p_eff) + " design-file columns");
    }

    const auto n_methods = methods.size();
    std::vector<ReplicationRecord> records(static_cast<std::size_t>(n_reps) * n_methods);

    parallel_for(static_cast<std::size_t>(n_reps), [&](std::size_t r) {
        const auto seeds = ReplicationSeeds::for_rep(base_seed, static_cast<int>(r));
        const std::uint64_t rep_seed = derive_seed(base_seed, static_cast<std::uint64_t>(r));

        Matrix generated;
        const Matrix* X = nullptr;
        GroundTruth truth;
        ResponseDraw draw;
        std::string gen_error;
        try {
            if (file_design) {
                X = &*file_design;
            } else {
                generated = gen_design(n_eff, p_eff, config.rho, seeds.design);
                X = &generated;
            }
            truth = gen_coefficients(p_eff, config.n_indices, config.sparsity_per_index,
                                     n_eff, seeds.truth, config.coef_sd);
            draw = gen_response(*X, truth, config.setting, config.sigma_rule, seeds.response);
        } catch (const std::exception& e) {
            gen_error = e.what();
        }

        for (std::size_t mi = 0; mi < n_methods; ++mi) {
            ReplicationRecord& rec = records[r * n_methods + mi];
            rec.setting = config.setting;
            rec.rho = config.rho;
            rec.method = methods[mi];
            rec.rep = static_cast<int>(r);
            rec.seed = rep_seed;
            rec.q = q;
            if (!gen_error.empty()) {
                rec.errored = true;
                rec.error = gen_error;
                continue;
            }
            const auto t0 = std::chrono::steady_clock::now();
            try {
                DecisionSet decisions;
                if (methods[mi] == "mta") {
                    Dataset data{draw.y, *X, {}};
                    auto res = mta_procedure(data, options.H, q, seeds.mta,
                                             options.lambda_rule, options.fdp_offset,
                                             /*threads=*/1);
                    decisions = std::move(res.decisions);
                    rec.tau_q = res.mirror.tau_q;
                } else {
                    Dataset data{draw.y, *X, {}};
                    decisions = hsic_bh(data, q, options.n_perm, seeds.hsic,
                                        /*threads=*/1)
                                    .decisions;
                }
                const auto metrics = evaluate(decisions, truth);
                rec.tp = metrics.tp;
                rec.fp = metrics.fp;
                rec.power = metrics.power;
                rec.fdp = metrics.fdp;
                rec.n_rejected = static_cast<int>(decisions.rejected.size());
            } catch (const std::exception& e) {
                rec.errored = true;
                rec.error = e.what();
            }
            const auto t1 = std::chrono::steady_clock::now();
            rec.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        }
    }, options.threads);

    return records;
}

}  // namespace mta
