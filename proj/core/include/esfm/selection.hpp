#pragma once

#include "esfm/es_factor.hpp"

#include <vector>

namespace esfm {

/// IC(r) = log V(r) + r q(N,T) evaluated on r = 0..R_max.
struct ICSelection {
    std::vector<Index> candidates;
    std::vector<double> V;
    std::vector<double> IC;
    double penalty = 0.0;
    Index r_hat = 0;
    std::vector<ESFactorFit> fits;  // one per candidate, same order
};

inline constexpr double kResidualVarianceFloor = 1e-300;
// V(r) below this fraction of V(0) is round-off; all such fits tie, so the
// penalty picks the smallest exact r.
inline constexpr double kRelativeVarianceFloor = 1e-12;

/// q(N,T) = log(NT/(N+T)) (N+T)/(NT).
double penalty(Index N, Index T);

/// Mean squared residual of the converged r-factor fit, floored before logging.
double residual_variance(const PanelData& panel, const QuantileFit& qfit, TailLevel tau, Index r,
                         const FitOptions& opts = {});

/// Fits every candidate r and returns the IC table with its argmin (ties go to
/// the smaller r). With `warm_start`, candidate r+1 starts from candidate r's
/// factors plus the leading direction of its residuals, which makes V(r)
/// non-increasing by construction.
ICSelection select_num_factors(const PanelData& panel, const QuantileFit& qfit, TailLevel tau,
                               Index r_max, const FitOptions& opts = {}, bool warm_start = true);

/// Same selection on an arbitrary response matrix (e.g. raw Y).
ICSelection select_num_factors_for(const PanelData& panel, const MatrixXd& response, Index r_max,
                                   const FitOptions& opts = {}, bool warm_start = true);

}  // namespace esfm
