#pragma once

#include "esfm/quantile.hpp"
#include "esfm/types.hpp"

#include <vector>

namespace esfm {

struct FitOptions {
    int max_iterations = 1000;
    double tolerance = 1e-8;  // relative objective change
    double jitter = 1e-10;    // ridge, as a fraction of tr(X'M_F X)/(p+1)
    int workers = 1;

    void validate() const;
};

/// Stage-2 estimates for one factor count r.
struct ESFactorFit {
    MatrixXd B;               // N x (p+1)
    FactorBundle factors;     // F: T x r, Lambda: N x r
    MatrixXd residuals;       // N x T
    std::vector<double> objective_path;
    int iterations = 0;
    bool converged = false;
    std::vector<Index> jittered_units;  // units whose normal matrix needed the ridge

    Index rank() const noexcept { return factors.rank(); }
    double final_objective() const { return objective_path.empty() ? 0.0 : objective_path.back(); }
};

/// Z*_it = Z_it(alpha_hat_i) / tau for the whole panel (N x T).
MatrixXd pseudo_response_matrix(const PanelData& panel, const MatrixXd& A, TailLevel tau);

struct BetaUpdate {
    VectorXd beta;
    bool jittered = false;
};

/// Least squares of M_F z on M_F X. `unit` is only used in error messages.
BetaUpdate update_beta(const VectorXd& zstar, const MatrixXd& X, const MatrixXd& F,
                       double jitter = 1e-10, Index unit = -1);

/// Principal components of W (N x T): F = sqrt(T) x leading right singular
/// vectors of W / sqrt(NT), Lambda = W F / T, sign convention applied.
FactorBundle extract_factors(const MatrixXd& W, Index r);

/// Factors from the residuals of unit-wise OLS of Z* on X.
FactorBundle init_factors(const PanelData& panel, const MatrixXd& zstar, Index r);

/// Alternating least squares for response = X_i beta_i + Lambda F' + e.
/// `warm_start`, when given, replaces the OLS-residual initialization.
ESFactorFit fit_factor_regression(const PanelData& panel, const MatrixXd& response, Index r,
                                  const FitOptions& opts = {},
                                  const MatrixXd* warm_start = nullptr);

/// Two-stage ES factor model: builds Z* from the Stage-1 fit and runs the
/// alternating scheme on it.
ESFactorFit fit_es_factor_model(const PanelData& panel, const QuantileFit& qfit, TailLevel tau,
                                Index r, const FitOptions& opts = {});

/// Interactive-fixed-effects mean model: the same alternating scheme on raw Y.
ESFactorFit fit_mean_factor_model(const PanelData& panel, Index r, const FitOptions& opts = {});

/// (1/NT) sum_it (Z*_it - X_it'beta_i - lambda_i'f_t)^2.
double objective(const PanelData& panel, const MatrixXd& zstar, const MatrixXd& B,
                 const FactorBundle& bundle);

/// X_it'beta_i + lambda_i'f_t.
MatrixXd predict_es(const ESFactorFit& fit, const PanelData& panel);

}  // namespace esfm
