#pragma once

#include "esfm/types.hpp"

#include <string>
#include <vector>

namespace esfm {

/// Time-series slopes from rolling windows. Entry d (d = 0..T-window-1) is
/// N x k and uses periods [d, d + window); it is the exposure known when the
/// period d + window return is realized.
std::vector<MatrixXd> rolling_exposures(const MatrixXd& returns, const MatrixXd& factors,
                                        Index window);

/// Equal-weighted quantile portfolios.
struct SortSeries {
    MatrixXd group_returns;  // D x n_groups, group 0 holds the lowest exposures
    VectorXd hl_series;      // top group minus bottom group
};

/// Column d of `exposures` ranks the names, column d of `realized` gives their
/// returns. Ties keep input order. Group g holds ranks [floor(gN/G), floor((g+1)N/G)).
SortSeries sort_portfolios(const MatrixXd& exposures, const MatrixXd& realized, Index n_groups);

/// Bartlett-kernel HAC covariance of OLS coefficients,
/// (X'X)^{-1} S (X'X)^{-1} with weights 1 - l/(lags+1). lags = 0 is White's HC0.
MatrixXd newey_west_cov(const MatrixXd& regressors, const VectorXd& residuals, Index lags);

struct AlphaEstimate {
    std::string label;
    double alpha = 0.0;   // 1200 x monthly intercept (annualized percent)
    double t_stat = 0.0;  // NaN when the HAC standard error is zero
    VectorXd coefficients;  // intercept first, monthly units
};

/// OLS of returns on an intercept and the benchmark columns (k may be 0).
AlphaEstimate alpha_regression(const VectorXd& returns, const MatrixXd& benchmark, Index lags = 6);

/// Annualized percent mean: 1200 x mean(x).
double annualized_mean(const VectorXd& monthly);

struct Benchmark {
    std::string label;
    MatrixXd factors;  // aligned with the sorted series, D x k
};

struct SortResult {
    MatrixXd group_returns;
    VectorXd hl_series;
    VectorXd avg_annualized;  // n_groups entries then H-L
    std::vector<AlphaEstimate> alphas;  // H-L alpha per benchmark
};

SortResult summarize_sort(const SortSeries& series, const std::vector<Benchmark>& benchmarks,
                          Index lags = 6);

struct FMResult {
    std::string label;
    double intercept = 0.0;   // x100
    VectorXd premia;          // x100, one per factor
    double adj_r2 = 0.0;      // x100, mean over months
    MatrixXd monthly;         // T x (k+1) second-pass coefficients, intercept first
    VectorXd monthly_adj_r2;  // T
};

/// Full-sample time-series loadings, then per-month cross-sectional OLS of
/// returns on an intercept and the loadings.
FMResult fama_macbeth(const MatrixXd& returns, const MatrixXd& factors, std::string label = {});

/// Canonical correlations between span(F_a) and span(F_b), descending, in [0, 1].
VectorXd generalized_correlations(const MatrixXd& F_a, const MatrixXd& F_b);

/// H-L series from sorting on rolling exposure to one factor series.
VectorXd factor_mimicking_series(const MatrixXd& returns, const VectorXd& factor, Index window,
                                 Index n_groups);

}  // namespace esfm
