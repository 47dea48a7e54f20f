#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace mta {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// A regression sample: response, n-by-p design, optional column names.
struct Dataset {
    Vector y;
    Matrix X;
    std::vector<std::string> columns;  // empty or size p

    Index n() const { return X.rows(); }
    Index p() const { return X.cols(); }
};

}  // namespace mta
