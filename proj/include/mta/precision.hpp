#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "mta/errors.hpp"
#include "mta/parallel.hpp"
#include "mta/types.hpp"

namespace mta {

/// Sample covariance Sigma_hat = X'X/n (optionally column-centered first).
struct CovarianceEstimate {
    Matrix matrix;
    Index n_samples = 0;
    bool centered = false;
};

/// How the precision matrix backing the slice regressions is obtained.
/// `nodewise` runs a Lasso per column with penalty kappa*sqrt(log p / n);
/// `exact_inverse` inverts the sample covariance (requires p < n).
struct LambdaRule {
    enum class Kind { nodewise, exact_inverse };
    Kind kind = Kind::nodewise;
    double kappa = 0.5;

    static LambdaRule nodewise_default(double kappa = 0.5) {
        return LambdaRule{Kind::nodewise, kappa};
    }
    static LambdaRule exact_inverse() {
        return LambdaRule{Kind::exact_inverse, 0.0};
    }

    double penalty(Index p, Index n) const {
        if (kind == Kind::exact_inverse) return 0.0;
        const double lp = std::log(static_cast<double>(std::max<Index>(p, 2)));
        return kappa * std::sqrt(lp / static_cast<double>(n));
    }
};

/// Estimated precision matrix Omega_hat plus the per-column penalties that
/// produced it. sparsity()[j] is s_j = #{k: Omega_jk != 0}.
struct PrecisionEstimate {
    Matrix matrix;
    Vector lambda_grid_used;
    bool symmetrized = false;

    std::vector<int> sparsity() const {
        std::vector<int> s(static_cast<std::size_t>(matrix.rows()), 0);
        for (Index j = 0; j < matrix.rows(); ++j)
            for (Index k = 0; k < matrix.cols(); ++k)
                if (matrix(j, k) != 0.0) ++s[static_cast<std::size_t>(j)];
        return s;
    }
};

inline CovarianceEstimate sample_covariance(const Matrix& X, bool center) {
    const Index n = X.rows(), p = X.cols();
    if (p < 1) throw ShapeError("sample_covariance: X must have at least one column");
    if (n < 2) throw InsufficientSamplesError("sample_covariance: need n >= 2");
    if (!X.allFinite()) throw InvalidDataError("sample_covariance: non-finite entries in X");

    Matrix Xc = X;
    if (center) Xc.rowwise() -= X.colwise().mean();
    Matrix S;
    S.noalias() = Xc.transpose() * Xc / static_cast<double>(n);
    S = ((S + S.transpose()) / 2.0).eval();  // exact symmetry
    return CovarianceEstimate{std::move(S), n, center};
}

/// Converged Lasso solution. `objective_trace` holds the penalized objective
/// (up to the constant y'y/2n term) after each full coordinate sweep.
struct LassoFit {
    Vector coef;
    int sweeps = 0;
    double kkt_residual = 0.0;
    std::vector<double> objective_trace;
};

namespace detail {

struct GramLassoFit {
    Vector beta;
    Vector fitted_gram;  // C*beta at the solution
    int sweeps = 0;
    double kkt_residual = 0.0;
    std::vector<double> objective_trace;
};

inline double gram_kkt_residual(const Matrix& C, const Vector& b, const Vector& beta,
                                const Vector& g, const Vector& lambda, Index skip) {
    double worst = 0.0;
    for (Index k = 0; k < b.size(); ++k) {
        if (k == skip) continue;
        const double r = b(k) - g(k);
        const double v = beta(k) != 0.0
                             ? std::abs(r - lambda(k) * (beta(k) > 0.0 ? 1.0 : -1.0))
                             : std::max(std::abs(r) - lambda(k), 0.0);
        worst = std::max(worst, v);
    }
    return worst;
}

inline double gram_kkt_residual(const Matrix& C, const Vector& b, const Vector& beta,
                                const Vector& g, double lambda, Index skip) {
    return gram_kkt_residual(C, b, beta, g, Vector::Constant(b.size(), lambda), skip);
}

// Coordinate descent on the Gram form
//   min_beta 0.5 beta'C beta - b'beta + sum_k lambda_k |beta_k|,
// C = X'X/n, b = X'y/n. A nonnegative `skip` pins that coordinate at zero,
// which is how node-wise regressions exclude their own column without
// copying submatrices. Cycles the active set between full sweeps and stops
// on the KKT residual.
inline GramLassoFit lasso_gram(const Matrix& C, const Vector& b, const Vector& lambda,
                               double tol, int max_sweeps, Index skip = -1) {
    const Index q = b.size();
    Vector beta = Vector::Zero(q);
    Vector g = Vector::Zero(q);  // C*beta, maintained incrementally
    GramLassoFit out;

    const auto update = [&](Index k) -> double {
        const double ckk = C(k, k);
        if (ckk <= 1e-12) return 0.0;
        const double rho = b(k) - g(k) + ckk * beta(k);
        const double lam = lambda(k);
        const double shrunk = std::abs(rho) <= lam ? 0.0
                              : (rho > 0.0 ? rho - lam : rho + lam);
        const double next = shrunk / ckk;
        const double delta = next - beta(k);
        if (delta != 0.0) {
            g.noalias() += C.col(k) * delta;
            beta(k) = next;
        }
        return std::abs(delta) * ckk;
    };

    const double activity_tol = 0.1 * tol;
    int sweeps = 0;
    while (true) {
        for (Index k = 0; k < q; ++k)
            if (k != skip) update(k);
        ++sweeps;
        out.objective_trace.push_back(0.5 * beta.dot(g) - b.dot(beta) +
                                      lambda.cwiseProduct(beta.cwiseAbs()).sum());

        while (sweeps < max_sweeps) {
            double moved = 0.0;
            for (Index k = 0; k < q; ++k)
                if (k != skip && beta(k) != 0.0) moved = std::max(moved, update(k));
            ++sweeps;
            if (moved <= activity_tol) break;
        }

        const double kkt = gram_kkt_residual(C, b, beta, g, lambda, skip);
        if (kkt <= tol) {
            out.beta = std::move(beta);
            out.fitted_gram = std::move(g);
            out.sweeps = sweeps;
            out.kkt_residual = kkt;
            return out;
        }
        if (sweeps >= max_sweeps)
            throw ConvergenceError(beta, kkt,
                                   "lasso: no convergence after " +
                                       std::to_string(sweeps) + " sweeps");
    }
}

inline GramLassoFit lasso_gram(const Matrix& C, const Vector& b, double lambda,
                               double tol, int max_sweeps, Index skip = -1) {
    return lasso_gram(C, b, Vector::Constant(b.size(), lambda), tol, max_sweeps, skip);
}

}  // namespace detail

/// KKT residual of beta for min (1/2n)||y - X beta||^2 + lambda ||beta||_1,
/// taking X exactly as given.
inline double lasso_kkt_residual(const Matrix& X, const Vector& y, const Vector& beta,
                                 double lambda) {
    const double n = static_cast<double>(X.rows());
    const Vector r = X.transpose() * (y - X * beta) / n;
    double worst = 0.0;
    for (Index k = 0; k < beta.size(); ++k) {
        const double v = beta(k) != 0.0
                             ? std::abs(r(k) - lambda * (beta(k) > 0.0 ? 1.0 : -1.0))
                             : std::max(std::abs(r(k)) - lambda, 0.0);
        worst = std::max(worst, v);
    }
    return worst;
}

/// Lasso solve of (1/2n)||y - X beta||^2 + lambda ||beta||_1 by coordinate
/// descent, taking X exactly as given. With `standardize` (the default) the
/// iteration runs on unit-n-norm columns for conditioning, with the penalty
/// divided per-coordinate by the column norms so the change of variables
/// leaves the stated objective, and hence the minimizer, unchanged. Columns
/// are never centered here; callers owning an intercept must center first.
inline LassoFit lasso_coordinate_descent(const Matrix& X, const Vector& y, double lambda,
                                         double tol = 1e-7, int max_iter = 10000,
                                         bool standardize = true) {
    const Index n = X.rows(), q = X.cols();
    if (y.size() != n) throw ShapeError("lasso: y length must match rows of X");
    if (lambda < 0.0) throw ConfigError("lasso: lambda must be >= 0");
    if (!X.allFinite() || !y.allFinite())
        throw InvalidDataError("lasso: non-finite entries");

    Vector scale = Vector::Ones(q);
    if (standardize) {
        for (Index k = 0; k < q; ++k) {
            const double s = std::sqrt(X.col(k).squaredNorm() / static_cast<double>(n));
            if (s > 1e-12) scale(k) = s;
        }
    }
    const Matrix Xs = X * scale.cwiseInverse().asDiagonal();
    const Matrix C = Xs.transpose() * Xs / static_cast<double>(n);
    const Vector b = Xs.transpose() * y / static_cast<double>(n);
    const Vector lambda_std = lambda * scale.cwiseInverse();
    const double tol_std = tol / std::max(1.0, scale.maxCoeff());

    try {
        detail::GramLassoFit fit =
            detail::lasso_gram(C, b, lambda_std, tol_std, max_iter);
        LassoFit out;
        out.coef = fit.beta.cwiseQuotient(scale);
        out.sweeps = fit.sweeps;
        out.kkt_residual = lasso_kkt_residual(X, y, out.coef, lambda);
        out.objective_trace = std::move(fit.objective_trace);
        return out;
    } catch (const ConvergenceError& e) {
        const Vector back = e.last_iterate().cwiseQuotient(scale);
        throw ConvergenceError(back, lasso_kkt_residual(X, y, back, lambda), e.what());
    }
}

/// Node-wise-Lasso precision estimate (one penalized regression per column,
/// assembled row-wise and symmetrized by averaging), or the direct inverse
/// of the centered sample covariance under the exact-inverse rule.
inline PrecisionEstimate nodewise_precision(const Matrix& X,
                                            const LambdaRule& rule = LambdaRule{},
                                            int threads = 0) {
    const Index n = X.rows(), p = X.cols();
    if (p < 1) throw ShapeError("nodewise_precision: X must have at least one column");
    if (!X.allFinite()) throw InvalidDataError("nodewise_precision: non-finite entries");

    if (p == 1) {
        const double mean = X.col(0).mean();
        const double tau2 = (X.col(0).array() - mean).matrix().squaredNorm() /
                            static_cast<double>(n);
        if (tau2 < 1e-10)
            throw DegenerateColumnError(0, "nodewise_precision: column 0 is degenerate");
        PrecisionEstimate out;
        out.matrix = Matrix::Constant(1, 1, 1.0 / tau2);
        out.lambda_grid_used = Vector::Zero(1);
        out.symmetrized = true;
        return out;
    }

    if (rule.kind == LambdaRule::Kind::exact_inverse) {
        if (p >= n)
            throw ConfigError("nodewise_precision: exact-inverse requires p < n");
        const Matrix Sigma = sample_covariance(X, /*center=*/true).matrix;
        Matrix Omega = Sigma.ldlt().solve(Matrix::Identity(p, p));
        Omega = ((Omega + Omega.transpose()) / 2.0).eval();
        if (!Omega.allFinite())
            throw InvalidDataError("nodewise_precision: covariance not invertible");
        for (Index j = 0; j < p; ++j)
            if (Omega(j, j) <= 0.0)
                throw DegenerateColumnError(j,
                    "nodewise_precision: non-positive inverse variance at column " +
                        std::to_string(j));
        PrecisionEstimate out;
        out.matrix = std::move(Omega);
        out.lambda_grid_used = Vector::Zero(p);
        out.symmetrized = true;
        return out;
    }

    if (n < 10) throw InsufficientSamplesError("nodewise_precision: need n >= 10");

    Matrix Xc = X;
    Xc.rowwise() -= X.colwise().mean();
    Vector sd(p);
    for (Index j = 0; j < p; ++j) {
        const double v = Xc.col(j).squaredNorm() / static_cast<double>(n);
        if (v < 1e-10)
            throw DegenerateColumnError(j, "nodewise_precision: column " +
                                               std::to_string(j) + " is degenerate");
        sd(j) = std::sqrt(v);
        Xc.col(j) /= sd(j);
    }
    // Correlation-scale Gram shared by all p regressions.
    Matrix C = Xc.transpose() * Xc / static_cast<double>(n);
    C = ((C + C.transpose()) / 2.0).eval();
    const double lambda = rule.penalty(p, n);

    Matrix Omega(p, p);
    parallel_for(static_cast<std::size_t>(p), [&](std::size_t idx) {
        const Index j = static_cast<Index>(idx);
        const Vector b = C.col(j);
        auto fit = detail::lasso_gram(C, b, lambda, 1e-7, 10000, /*skip=*/j);
        const double tau2_std = C(j, j) - 2.0 * fit.beta.dot(b) +
                                fit.beta.dot(fit.fitted_gram) +
                                lambda * fit.beta.lpNorm<1>();
        const double tau2 = tau2_std * sd(j) * sd(j);
        if (tau2 < 1e-10)
            throw DegenerateColumnError(j, "nodewise_precision: residual variance "
                                           "collapsed at column " + std::to_string(j));
        // Row j of Omega in original scale: Omega_jk = -gamma_k / tau_j^2 with
        // gamma the raw-scale coefficient; standardized fit plus the 1/(s_j s_k)
        // back-transform yields exactly that.
        for (Index k = 0; k < p; ++k)
            Omega(j, k) = k == j ? 1.0 / tau2
                                 : -fit.beta(k) / (tau2_std * sd(j) * sd(k));
    }, threads);

    Omega = ((Omega + Omega.transpose()) / 2.0).eval();
    PrecisionEstimate out;
    out.matrix = std::move(Omega);
    out.lambda_grid_used = Vector::Constant(p, lambda);
    out.symmetrized = true;
    return out;
}

}  // namespace mta
