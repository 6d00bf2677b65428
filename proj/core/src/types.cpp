#include "esfm/types.hpp"

#include <cmath>
#include <string>

namespace esfm {

TailLevel::TailLevel(double tau) : tau_(tau) {
    if (!(tau > 0.0 && tau < 1.0)) {
        throw ValidationError("tail level must lie in (0,1), got " + std::to_string(tau));
    }
}

PanelData::PanelData(MatrixXd y, std::vector<MatrixXd> x, std::vector<std::string> unit_labels,
                     std::vector<std::string> time_labels)
    : y_(std::move(y)),
      x_(std::move(x)),
      unit_labels_(std::move(unit_labels)),
      time_labels_(std::move(time_labels)) {
    const Index n = y_.rows();
    const Index t = y_.cols();
    if (n < 1 || t < 1) {
        throw ValidationError("panel must have at least one unit and one period");
    }
    if (static_cast<Index>(x_.size()) != n) {
        throw ValidationError("panel has " + std::to_string(n) + " units but " +
                              std::to_string(x_.size()) + " design blocks");
    }
    if (!y_.allFinite()) {
        throw ValidationError("panel response contains non-finite values");
    }
    const Index k = x_.front().cols();
    if (k < 1) {
        throw ValidationError("design blocks need at least the intercept column");
    }
    for (Index i = 0; i < n; ++i) {
        const MatrixXd& xi = x_[static_cast<std::size_t>(i)];
        if (xi.rows() != t || xi.cols() != k) {
            throw ValidationError("design block of unit " + std::to_string(i) + " has shape " +
                                  std::to_string(xi.rows()) + "x" + std::to_string(xi.cols()) +
                                  ", expected " + std::to_string(t) + "x" + std::to_string(k));
        }
        if (!xi.allFinite()) {
            throw ValidationError("design block of unit " + std::to_string(i) +
                                  " contains non-finite values");
        }
        for (Index s = 0; s < t; ++s) {
            if (xi(s, 0) != 1.0) {
                throw ValidationError("intercept column of unit " + std::to_string(i) +
                                      " is not 1 at period " + std::to_string(s));
            }
        }
    }
    if (!unit_labels_.empty() && static_cast<Index>(unit_labels_.size()) != n) {
        throw ValidationError("unit label count does not match N");
    }
    if (!time_labels_.empty() && static_cast<Index>(time_labels_.size()) != t) {
        throw ValidationError("time label count does not match T");
    }
}

PanelData PanelData::from_covariates(MatrixXd y, const std::vector<MatrixXd>& covariates,
                                     std::vector<std::string> unit_labels,
                                     std::vector<std::string> time_labels) {
    std::vector<MatrixXd> x;
    x.reserve(covariates.size());
    for (const MatrixXd& c : covariates) {
        MatrixXd xi(c.rows(), c.cols() + 1);
        xi.col(0).setOnes();
        xi.rightCols(c.cols()) = c;
        x.push_back(std::move(xi));
    }
    return PanelData(std::move(y), std::move(x), std::move(unit_labels), std::move(time_labels));
}

PanelData PanelData::with_response(MatrixXd y) const {
    return PanelData(std::move(y), x_, unit_labels_, time_labels_);
}

}  // namespace esfm
