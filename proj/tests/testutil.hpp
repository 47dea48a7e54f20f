#pragma once

// Shared fixtures and independent oracle solvers used across the test suite.
// Oracles here are deliberately written against different algorithms than the
// library (proximal gradient instead of coordinate descent, explicit loops
// instead of matrix products) so agreement is evidence, not tautology.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "mta/types.hpp"

namespace testutil {

using mta::Index;
using mta::Matrix;
using mta::Vector;

inline Matrix gaussian_matrix(Index n, Index p, std::mt19937_64& eng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix X(n, p);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < p; ++j) X(i, j) = gauss(eng);
    return X;
}

/// Rows i.i.d. N(0, Sigma) with Sigma_ij = rho^|i-j|, built by the scalar
/// AR(1) recursion one row at a time.
inline Matrix ar1_design(Index n, Index p, double rho, std::mt19937_64& eng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double carry = std::sqrt(1.0 - rho * rho);
    Matrix X(n, p);
    for (Index i = 0; i < n; ++i) {
        X(i, 0) = gauss(eng);
        for (Index j = 1; j < p; ++j) X(i, j) = rho * X(i, j - 1) + carry * gauss(eng);
    }
    return X;
}

/// Scales every column to unit n-normalized norm: ||x_j||^2 / n = 1.
inline void unit_norm_columns(Matrix& X) {
    const double n = static_cast<double>(X.rows());
    for (Index j = 0; j < X.cols(); ++j)
        X.col(j) /= std::sqrt(X.col(j).squaredNorm() / n);
}

/// p columns that are exactly mean-zero and mutually orthogonal with
/// n-normalized norm `scales[j]`: QR of [1 | G], first column dropped.
inline Matrix zero_mean_orthogonal(Index n, Index p, const Vector& scales,
                                   std::mt19937_64& eng) {
    Matrix G(n, p + 1);
    G.col(0).setOnes();
    G.rightCols(p) = gaussian_matrix(n, p, eng);
    Eigen::HouseholderQR<Matrix> qr(G);
    Matrix Q = qr.householderQ() * Matrix::Identity(n, p + 1);
    Matrix X = Q.rightCols(p) * std::sqrt(static_cast<double>(n));
    for (Index j = 0; j < p; ++j) X.col(j) *= scales(j);
    return X;
}

inline double soft_threshold(double x, double t) {
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
}

/// Accelerated proximal gradient (FISTA) for
///   min_beta 0.5 beta'C beta - b'beta + lambda ||beta||_1,
/// optionally pinning coordinate `skip` at zero. Independent of the
/// coordinate-descent implementation under test.
inline Vector fista_gram(const Matrix& C, const Vector& b, double lambda, int iters,
                         Index skip = -1) {
    const Index q = b.size();
    Eigen::SelfAdjointEigenSolver<Matrix> es(C);
    const double step = 1.0 / std::max(es.eigenvalues().maxCoeff(), 1e-12);
    Vector beta = Vector::Zero(q), prev = beta, yk = beta;
    double t = 1.0;
    for (int it = 0; it < iters; ++it) {
        const Vector grad = C * yk - b;
        prev = beta;
        for (Index k = 0; k < q; ++k)
            beta(k) = k == skip ? 0.0 : soft_threshold(yk(k) - step * grad(k), step * lambda);
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        yk = beta + ((t - 1.0) / t_next) * (beta - prev);
        t = t_next;
    }
    return beta;
}

/// Exact Lasso solve from a support/sign hint: solves the penalized normal
/// equations restricted to the hint's support, then verifies the full KKT
/// system at certificate precision. The verification makes the result a
/// self-contained optimality proof regardless of where the hint came from.
/// `cert_err` receives the worst KKT violation (large if signs disagree).
inline Vector certified_lasso_gram(const Matrix& C, const Vector& b, double lambda,
                                   const Vector& hint, double& cert_err) {
    const Index q = b.size();
    std::vector<Index> active;
    for (Index k = 0; k < q; ++k)
        if (hint(k) != 0.0) active.push_back(k);

    Vector beta = Vector::Zero(q);
    if (!active.empty()) {
        const auto m = static_cast<Index>(active.size());
        Matrix Ca(m, m);
        Vector rhs(m);
        for (Index r = 0; r < m; ++r) {
            rhs(r) = b(active[r]) - lambda * (hint(active[r]) > 0.0 ? 1.0 : -1.0);
            for (Index c = 0; c < m; ++c) Ca(r, c) = C(active[r], active[c]);
        }
        const Vector sub = Ca.ldlt().solve(rhs);
        for (Index r = 0; r < m; ++r) beta(active[r]) = sub(r);
    }

    const Vector resid = b - C * beta;
    cert_err = 0.0;
    for (Index k = 0; k < q; ++k) {
        if (beta(k) != 0.0) {
            if (beta(k) * hint(k) < 0.0) cert_err = std::max(cert_err, 1.0);
            cert_err = std::max(cert_err,
                                std::abs(resid(k) - lambda * (beta(k) > 0.0 ? 1.0 : -1.0)));
        } else {
            cert_err = std::max(cert_err, std::max(std::abs(resid(k)) - lambda, 0.0));
        }
    }
    return beta;
}

}  // namespace testutil
