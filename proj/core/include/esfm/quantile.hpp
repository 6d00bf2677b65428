#pragma once

#include "esfm/types.hpp"

#include <vector>

namespace esfm {

/// Smoothed-check-loss solver settings.
///
/// The kink of the check loss is replaced by a Huber-type quadratic on
/// |u| <= h. The bandwidth h starts at `initial_bandwidth` (or max(1, sd(y))
/// when that is <= 0) and shrinks by `bandwidth_decay` down to
/// `min_bandwidth`. At every level the smoothed problem is minimized by
/// iteratively reweighted least squares (a majorize-minimize scheme, so the
/// smoothed objective never increases).
struct QrOptions {
    double initial_bandwidth = 0.0;
    double bandwidth_decay = 0.3;
    double min_bandwidth = 1e-6;
    double tolerance = 1e-8;
    int max_iterations = 200;  // per bandwidth level

    void validate() const;
};

struct QuantileDiagnostics {
    int iterations = 0;
    double smoothed_objective = 0.0;
    double objective = 0.0;           // exact mean check loss at the returned coefficients
    double warm_start_objective = 0.0;
    double final_bandwidth = 0.0;
    bool converged = false;
};

struct UnitQuantileFit {
    VectorXd alpha;
    QuantileDiagnostics diagnostics;
};

/// Stage-1 coefficients for a whole panel: row i of A is alpha_hat_i.
struct QuantileFit {
    MatrixXd A;
    std::vector<QuantileDiagnostics> diagnostics;

    bool all_converged() const noexcept;
};

/// Linear quantile regression of y on X (X includes the intercept column).
/// Throws ValidationError when X is rank deficient, naming the dependent column.
UnitQuantileFit fit_unit_quantile(const MatrixXd& X, const VectorXd& y, TailLevel tau,
                                  const QrOptions& opts = {});

/// Unit-by-unit Stage-1 fit. Output is identical for any worker count.
QuantileFit fit_panel_quantile(const PanelData& panel, TailLevel tau, const QrOptions& opts = {},
                               int workers = 1);

}  // namespace esfm
