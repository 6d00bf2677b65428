#pragma once

#include "esfm/es_factor.hpp"

#include <vector>

namespace esfm {

/// Per-(unit, period) score vectors and their scaled sums.
struct ScoreSet {
    std::vector<MatrixXd> scores;  // N blocks of T x (p+1): row t is s_it
    MatrixXd U;                    // N x (p+1): U_i = T^{-1/2} sum_t s_it
    MatrixXd loading_weights;      // N x N: a_ik = lambda_i' (Lambda'Lambda/N)^{-1} lambda_k
};

/// Plug-in estimate of the asymptotic covariance of sqrt(T)(beta_hat_i - beta_i).
struct VarianceEstimate {
    std::vector<MatrixXd> Omega;  // N blocks of (p+1) x (p+1)
    MatrixXd se;                  // N x (p+1), sqrt(diag(Omega_i) / T)
    Index hac_lag = 0;
    double min_singular_value = 0.0;  // of I - H/N, smallest one kept
    Index null_dimension = 0;         // directions removed from I - H/N
    Index periods = 0;
};

struct CoefficientTests {
    MatrixXd se;
    MatrixXd t_stat;  // NaN where se == 0
};

/// Number of design columns identical across all units (at least the intercept).
Index common_columns(const PanelData& panel);

/// Bartlett lag rule floor(4 (T/100)^(2/9)).
Index default_hac_lag(Index T);

/// s_it = x~_it e_it - (1/N) sum_k a_ik x~_kt e_kt with x~ = M_F X.
/// Throws NumericalError if Lambda'Lambda/N is singular.
ScoreSet score_contributions(const ESFactorFit& fit, const PanelData& panel);

/// Omega_i = sum_jk (G_ij A_j) Sigma_jk (G_ik A_k)' with A_j = (X_j'M_F X_j/T)^{-1},
/// G = (I - H/N)^{-1} (on the complement of the common-regressor null space)
/// and Sigma from Bartlett-weighted score autocovariances.
/// Each Omega_i is symmetrized and its negative eigenvalues clipped to zero.
/// A negative `hac_lag` selects default_hac_lag(T).
VarianceEstimate estimate_omega(const ESFactorFit& fit, const PanelData& panel, Index hac_lag = -1);

CoefficientTests standard_errors(const VarianceEstimate& ve, const ESFactorFit& fit);

}  // namespace esfm
