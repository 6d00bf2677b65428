#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace esfm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Error taxonomy. The CLI maps these onto exit codes 2 / 3 / 4.
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Quantile / tail level, strictly inside (0, 1).
class TailLevel {
public:
    explicit TailLevel(double tau);
    double value() const noexcept { return tau_; }

private:
    double tau_;
};

/// Balanced panel of N units observed over T periods.
///
/// Y is N x T. X holds one T x (p+1) design block per unit; column 0 is the
/// intercept and is exactly 1.0 everywhere.
class PanelData {
public:
    PanelData() = default;

    // Validates every invariant; throws ValidationError on the first violation.
    PanelData(MatrixXd y, std::vector<MatrixXd> x,
              std::vector<std::string> unit_labels = {},
              std::vector<std::string> time_labels = {});

    // Builds X by prepending an intercept column to each unit's covariates
    // (each block T x p).
    static PanelData from_covariates(MatrixXd y, const std::vector<MatrixXd>& covariates,
                                     std::vector<std::string> unit_labels = {},
                                     std::vector<std::string> time_labels = {});

    Index num_units() const noexcept { return y_.rows(); }
    Index num_periods() const noexcept { return y_.cols(); }
    Index num_covariates() const noexcept { return x_.empty() ? 0 : x_.front().cols() - 1; }
    Index num_coefficients() const noexcept { return num_covariates() + 1; }

    const MatrixXd& y() const noexcept { return y_; }
    const MatrixXd& x(Index unit) const { return x_.at(static_cast<std::size_t>(unit)); }
    const std::vector<MatrixXd>& x_blocks() const noexcept { return x_; }
    const std::vector<std::string>& unit_labels() const noexcept { return unit_labels_; }
    const std::vector<std::string>& time_labels() const noexcept { return time_labels_; }

    // Same design, different response. Used by the mean-factor comparator.
    PanelData with_response(MatrixXd y) const;

    friend bool operator==(const PanelData&, const PanelData&) = default;

private:
    MatrixXd y_;
    std::vector<MatrixXd> x_;
    std::vector<std::string> unit_labels_;
    std::vector<std::string> time_labels_;
};

/// Latent factors and loadings. F is T x r with F'F/T = I_r, Lambda is N x r.
struct FactorBundle {
    MatrixXd F;
    MatrixXd Lambda;

    Index rank() const noexcept { return F.cols(); }
    static FactorBundle empty(Index periods, Index units) {
        return {MatrixXd(periods, 0), MatrixXd(units, 0)};
    }
};

inline constexpr double kNormalizationTolerance = 1e-8;

}  // namespace esfm
