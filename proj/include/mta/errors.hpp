#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace mta {

/// Input contains NaN or infinity where finite values are required.
class InvalidDataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Fewer observations than an estimator needs.
class InsufficientSamplesError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Sample too small to form the requested partition or split.
class TooFewSamplesError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Response ties make the requested slice partition unrepresentable
/// (constant response is the extreme case).
class DegenerateResponseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A node-wise residual variance collapsed; the offending column index
/// is carried alongside the message.
class DegenerateColumnError : public std::runtime_error {
public:
    DegenerateColumnError(Eigen::Index column, const std::string& what)
        : std::runtime_error(what), column_(column) {}
    Eigen::Index column() const { return column_; }

private:
    Eigen::Index column_;
};

/// Iterative solver exhausted its iteration budget. Carries the last
/// iterate so callers can inspect or reuse it.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(Eigen::VectorXd last_iterate, double kkt_residual,
                     const std::string& what)
        : std::runtime_error(what),
          last_iterate_(std::move(last_iterate)),
          kkt_residual_(kkt_residual) {}
    const Eigen::VectorXd& last_iterate() const { return last_iterate_; }
    double kkt_residual() const { return kkt_residual_; }

private:
    Eigen::VectorXd last_iterate_;
    double kkt_residual_;
};

/// Matrix/vector dimensions do not agree.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Inconsistent or out-of-range configuration.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace mta
