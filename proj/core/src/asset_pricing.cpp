#include "esfm/asset_pricing.hpp"

#include "esfm/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace esfm {

namespace {

MatrixXd with_intercept(const MatrixXd& x) {
    MatrixXd out(x.rows(), x.cols() + 1);
    out.col(0).setOnes();
    out.rightCols(x.cols()) = x;
    return out;
}

Eigen::ColPivHouseholderQR<MatrixXd> full_rank_qr(const MatrixXd& design, const char* what) {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(design);
    qr.setThreshold(1e-10);
    if (qr.rank() < design.cols()) {
        throw ValidationError(std::string(what) + ": design is collinear (rank " +
                              std::to_string(qr.rank()) + " < " + std::to_string(design.cols()) +
                              ")");
    }
    return qr;
}

void require_finite(const MatrixXd& m, const char* what) {
    if (!m.allFinite()) throw ValidationError(std::string(what) + " contains non-finite values");
}

}  // namespace

std::vector<MatrixXd> rolling_exposures(const MatrixXd& returns, const MatrixXd& factors,
                                        Index window) {
    const Index periods = returns.cols();
    const Index k = factors.cols();
    if (factors.rows() != periods) throw ValidationError("factor series length differs from T");
    if (window >= periods) {
        throw ValidationError("window " + std::to_string(window) + " must be smaller than T = " +
                              std::to_string(periods));
    }
    if (window <= k + 1) throw ValidationError("window must exceed k + 1");
    require_finite(returns, "returns");
    require_finite(factors, "factors");

    std::vector<MatrixXd> out;
    out.reserve(static_cast<std::size_t>(periods - window));
    for (Index d = 0; d + window < periods; ++d) {
        const MatrixXd design = with_intercept(factors.middleRows(d, window));
        const auto qr = full_rank_qr(design, "rolling window");
        const MatrixXd coef = qr.solve(returns.middleCols(d, window).transpose());  // (k+1) x N
        out.push_back(coef.bottomRows(k).transpose());
    }
    return out;
}

SortSeries sort_portfolios(const MatrixXd& exposures, const MatrixXd& realized, Index n_groups) {
    const Index n = exposures.rows();
    const Index dates = exposures.cols();
    if (realized.rows() != n || realized.cols() != dates) {
        throw ValidationError("exposures and realized returns differ in shape");
    }
    if (n_groups < 2) throw ValidationError("n_groups must be at least 2");
    if (n < n_groups) {
        throw ValidationError("N = " + std::to_string(n) + " is smaller than n_groups = " +
                              std::to_string(n_groups));
    }
    if (dates < 1) throw ValidationError("no dated exposure/return pairs");
    require_finite(exposures, "exposures");
    require_finite(realized, "realized returns");

    SortSeries out;
    out.group_returns.resize(dates, n_groups);
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index d = 0; d < dates; ++d) {
        std::iota(order.begin(), order.end(), Index{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](Index a, Index b) { return exposures(a, d) < exposures(b, d); });
        for (Index g = 0; g < n_groups; ++g) {
            const Index lo = g * n / n_groups;
            const Index hi = (g + 1) * n / n_groups;
            double acc = 0.0;
            for (Index j = lo; j < hi; ++j) acc += realized(order[static_cast<std::size_t>(j)], d);
            out.group_returns(d, g) = acc / static_cast<double>(hi - lo);
        }
    }
    out.hl_series = out.group_returns.col(n_groups - 1) - out.group_returns.col(0);
    return out;
}

MatrixXd newey_west_cov(const MatrixXd& regressors, const VectorXd& residuals, Index lags) {
    const Index periods = regressors.rows();
    const Index k = regressors.cols();
    if (residuals.size() != periods) throw ValidationError("residual length differs from T");
    if (periods <= k) throw ValidationError("newey_west_cov requires T > k");
    if (lags < 0 || lags >= periods) throw ValidationError("lags must lie in [0, T)");

    const MatrixXd scores = regressors.array().colwise() * residuals.array();  // T x k
    MatrixXd meat = scores.transpose() * scores;
    for (Index l = 1; l <= lags; ++l) {
        const double w = 1.0 - static_cast<double>(l) / static_cast<double>(lags + 1);
        const MatrixXd gamma = scores.bottomRows(periods - l).transpose() * scores.topRows(periods - l);
        meat += w * (gamma + gamma.transpose());
    }
    const MatrixXd bread = (regressors.transpose() * regressors).ldlt().solve(MatrixXd::Identity(k, k));
    const MatrixXd cov = bread * meat * bread;
    return 0.5 * (cov + cov.transpose());
}

double annualized_mean(const VectorXd& monthly) {
    if (monthly.size() == 0) throw ValidationError("cannot annualize an empty series");
    return 1200.0 * monthly.mean();
}

AlphaEstimate alpha_regression(const VectorXd& returns, const MatrixXd& benchmark, Index lags) {
    const Index periods = returns.size();
    if (benchmark.rows() != periods) throw ValidationError("benchmark length differs from returns");
    if (periods <= benchmark.cols() + 1) throw ValidationError("alpha_regression requires T > k + 1");
    require_finite(returns, "returns");
    require_finite(benchmark, "benchmark");

    const MatrixXd design = with_intercept(benchmark);
    const auto qr = full_rank_qr(design, "alpha regression");
    AlphaEstimate out;
    out.coefficients = qr.solve(returns);
    const VectorXd resid = returns - design * out.coefficients;
    const MatrixXd cov = newey_west_cov(design, resid, lags);
    out.alpha = 1200.0 * out.coefficients(0);
    const double se = std::sqrt(std::max(cov(0, 0), 0.0));
    out.t_stat = se > 0.0 ? out.coefficients(0) / se : std::numeric_limits<double>::quiet_NaN();
    return out;
}

SortResult summarize_sort(const SortSeries& series, const std::vector<Benchmark>& benchmarks,
                          Index lags) {
    SortResult out;
    out.group_returns = series.group_returns;
    out.hl_series = series.hl_series;
    const Index groups = series.group_returns.cols();
    out.avg_annualized.resize(groups + 1);
    for (Index g = 0; g < groups; ++g) {
        out.avg_annualized(g) = annualized_mean(series.group_returns.col(g));
    }
    out.avg_annualized(groups) = annualized_mean(series.hl_series);
    for (const auto& b : benchmarks) {
        AlphaEstimate a = alpha_regression(series.hl_series, b.factors, lags);
        a.label = b.label;
        out.alphas.push_back(std::move(a));
    }
    return out;
}

FMResult fama_macbeth(const MatrixXd& returns, const MatrixXd& factors, std::string label) {
    const Index n = returns.rows();
    const Index periods = returns.cols();
    const Index k = factors.cols();
    if (factors.rows() != periods) throw ValidationError("factor series length differs from T");
    if (periods <= k + 1) throw ValidationError("fama_macbeth requires T > k + 1");
    if (n <= k + 1) throw ValidationError("fama_macbeth requires N > k + 1");
    require_finite(returns, "returns");
    require_finite(factors, "factors");

    const auto ts_qr = full_rank_qr(with_intercept(factors), "first pass");
    const MatrixXd loadings = ts_qr.solve(returns.transpose()).bottomRows(k).transpose();  // N x k

    const MatrixXd design = with_intercept(loadings);
    const auto cs_qr = full_rank_qr(design, "cross-sectional pass");
    FMResult out;
    out.label = std::move(label);
    out.monthly = cs_qr.solve(returns).transpose();  // T x (k+1)
    out.monthly_adj_r2.resize(periods);
    const double dof_ratio = static_cast<double>(n - 1) / static_cast<double>(n - k - 1);
    for (Index t = 0; t < periods; ++t) {
        const VectorXd r = returns.col(t);
        const VectorXd resid = r - design * out.monthly.row(t).transpose();
        const double sst = (r.array() - r.mean()).square().sum();
        const double ssr = resid.squaredNorm();
        const double r2 = sst > 0.0 ? 1.0 - ssr / sst : 1.0;
        out.monthly_adj_r2(t) = 1.0 - (1.0 - r2) * dof_ratio;
    }
    const VectorXd means = out.monthly.colwise().mean().transpose();
    out.intercept = 100.0 * means(0);
    out.premia = 100.0 * means.tail(k);
    out.adj_r2 = 100.0 * out.monthly_adj_r2.mean();
    return out;
}

VectorXd generalized_correlations(const MatrixXd& F_a, const MatrixXd& F_b) {
    if (F_a.rows() != F_b.rows()) throw ValidationError("factor sets have different lengths");
    if (F_a.cols() == 0 || F_b.cols() == 0) throw ValidationError("factor sets must be nonempty");
    const MatrixXd qa = orthonormal_basis(F_a);
    const MatrixXd qb = orthonormal_basis(F_b);
    Eigen::JacobiSVD<MatrixXd> svd(qa.transpose() * qb);
    return svd.singularValues().cwiseMax(0.0).cwiseMin(1.0);
}

VectorXd factor_mimicking_series(const MatrixXd& returns, const VectorXd& factor, Index window,
                                 Index n_groups) {
    const std::vector<MatrixXd> exposures = rolling_exposures(returns, factor, window);
    const Index dates = static_cast<Index>(exposures.size());
    MatrixXd beta(returns.rows(), dates);
    for (Index d = 0; d < dates; ++d) beta.col(d) = exposures[static_cast<std::size_t>(d)].col(0);
    return sort_portfolios(beta, returns.rightCols(dates), n_groups).hl_series;
}

}  // namespace esfm
