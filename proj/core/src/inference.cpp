#include "esfm/inference.hpp"

#include "esfm/kernels.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace esfm {

namespace {

constexpr Index kMaxSystemSize = 6000;

MatrixXd loading_weight_matrix(const FactorBundle& bundle, Index n) {
    const Index r = bundle.rank();
    if (r == 0) return MatrixXd::Zero(n, n);
    const MatrixXd gram = bundle.Lambda.transpose() * bundle.Lambda / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 1e-12 * std::max(hi, 1e-300))) {
        std::ostringstream msg;
        msg << "Lambda'Lambda/N is singular (eigenvalues " << lo << " .. " << hi << ")";
        throw NumericalError(msg.str());
    }
    return bundle.Lambda * gram.ldlt().solve(bundle.Lambda.transpose());
}

// Bartlett-weighted long-run covariance of the rows of v (T x k).
MatrixXd bartlett_long_run(const MatrixXd& v, Index lags) {
    const Index periods = v.rows();
    const double inv_t = 1.0 / static_cast<double>(periods);
    MatrixXd out = v.transpose() * v * inv_t;
    for (Index l = 1; l <= lags && l < periods; ++l) {
        const double w = 1.0 - static_cast<double>(l) / static_cast<double>(lags + 1);
        const MatrixXd gamma =
            v.bottomRows(periods - l).transpose() * v.topRows(periods - l) * inv_t;
        out += w * (gamma + gamma.transpose());
    }
    return out;
}

MatrixXd clip_psd(const MatrixXd& m) {
    const MatrixXd sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sym);
    const VectorXd vals = eig.eigenvalues().cwiseMax(0.0);
    MatrixXd out = eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

}  // namespace

Index common_columns(const PanelData& panel) {
    const Index k = panel.num_coefficients();
    Index count = 0;
    for (Index j = 0; j < k; ++j) {
        bool shared = true;
        for (Index i = 1; i < panel.num_units() && shared; ++i) {
            shared = panel.x(i).col(j) == panel.x(0).col(j);
        }
        count += shared ? 1 : 0;
    }
    return count;
}

Index default_hac_lag(Index T) {
    return static_cast<Index>(std::floor(4.0 * std::pow(static_cast<double>(T) / 100.0, 2.0 / 9.0)));
}

ScoreSet score_contributions(const ESFactorFit& fit, const PanelData& panel) {
    const Index n = panel.num_units();
    const Index periods = panel.num_periods();
    const Index k = panel.num_coefficients();
    if (fit.residuals.rows() != n || fit.residuals.cols() != periods) {
        throw ValidationError("fit residuals do not match the panel");
    }

    ScoreSet out;
    out.loading_weights = loading_weight_matrix(fit.factors, n);

    // raw(k_unit, t*k + j) = x~_{k,t,j} e_{k,t}
    MatrixXd raw(n, periods * k);
    for (Index i = 0; i < n; ++i) {
        const MatrixXd xt = annihilate(fit.factors.F, panel.x(i));
        for (Index t = 0; t < periods; ++t) {
            raw.block(i, t * k, 1, k) = xt.row(t) * fit.residuals(i, t);
        }
    }
    MatrixXd adjusted = raw;
    if (fit.rank() > 0) adjusted.noalias() -= out.loading_weights * raw / static_cast<double>(n);

    out.scores.resize(static_cast<std::size_t>(n));
    out.U.resize(n, k);
    const double root_t = std::sqrt(static_cast<double>(periods));
    for (Index i = 0; i < n; ++i) {
        MatrixXd s(periods, k);
        for (Index t = 0; t < periods; ++t) s.row(t) = adjusted.block(i, t * k, 1, k);
        out.U.row(i) = s.colwise().sum() / root_t;
        out.scores[static_cast<std::size_t>(i)] = std::move(s);
    }
    return out;
}

VarianceEstimate estimate_omega(const ESFactorFit& fit, const PanelData& panel, Index hac_lag) {
    const Index n = panel.num_units();
    const Index periods = panel.num_periods();
    const Index k = panel.num_coefficients();
    const Index dim = n * k;
    if (dim > kMaxSystemSize) {
        throw ValidationError("variance system of size " + std::to_string(dim) +
                              " exceeds the dense limit " + std::to_string(kMaxSystemSize));
    }
    const Index lags = hac_lag < 0 ? default_hac_lag(periods) : hac_lag;
    if (lags >= periods) throw ValidationError("HAC lag must be smaller than T");

    const ScoreSet scores = score_contributions(fit, panel);

    // Stacked annihilated design, T x (N k).
    MatrixXd xt(periods, dim);
    for (Index i = 0; i < n; ++i) xt.middleCols(i * k, k) = annihilate(fit.factors.F, panel.x(i));
    const MatrixXd cross = xt.transpose() * xt / static_cast<double>(periods);

    std::vector<MatrixXd> a_blocks(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        const MatrixXd block = cross.block(i * k, i * k, k, k);
        Eigen::LDLT<MatrixXd> ldlt(block);
        if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0)) {
            throw NumericalError("X'M_F X / T is singular for unit " + std::to_string(i));
        }
        a_blocks[static_cast<std::size_t>(i)] = ldlt.solve(MatrixXd::Identity(k, k));
    }

    // I - H/N with H_ik = A_i (X_i'M_F X_k / T) a_ik.
    MatrixXd system = MatrixXd::Identity(dim, dim);
    if (fit.rank() > 0) {
        const double inv_n = 1.0 / static_cast<double>(n);
        for (Index i = 0; i < n; ++i) {
            const MatrixXd& ai = a_blocks[static_cast<std::size_t>(i)];
            for (Index j = 0; j < n; ++j) {
                const double w = scores.loading_weights(i, j);
                if (w == 0.0) continue;
                system.block(i * k, j * k, k, k).noalias() -=
                    (w * inv_n) * ai * cross.block(i * k, j * k, k, k);
            }
        }
    }
    // Every regressor column shared by all units (the intercept at least) makes
    // I - H/N singular along delta_i = (lambda_i'g) e_j: shifting a common
    // coefficient by lambda_i'g is offset by moving the factor mean. Those
    // directions never touch unit-specific coefficients, so G is the inverse on
    // their complement.
    const Index null_dim = fit.rank() * common_columns(panel);
    Eigen::BDCSVD<MatrixXd> svd(system, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Index kept = dim - null_dim;
    // kept == 0 only when N = 1, where every score is identically zero.
    const double smin = kept > 0 ? svd.singularValues()(kept - 1) : 1.0;
    if (!(smin > 1e-10)) {
        std::ostringstream msg;
        msg << "I - H/N is numerically singular (minimum singular value " << smin;
        if (null_dim > 0) msg << " after removing " << null_dim << " common-regressor directions";
        msg << ")";
        throw NumericalError(msg.str());
    }
    const MatrixXd g = svd.matrixV().leftCols(kept) *
                       svd.singularValues().head(kept).cwiseInverse().asDiagonal() *
                       svd.matrixU().leftCols(kept).transpose();

    // K = G blockdiag(A); unit i's error is row block i of K applied to the stacked scores.
    MatrixXd gain(dim, dim);
    for (Index j = 0; j < n; ++j) {
        gain.middleCols(j * k, k).noalias() =
            g.middleCols(j * k, k) * a_blocks[static_cast<std::size_t>(j)];
    }
    MatrixXd stacked(dim, periods);
    for (Index j = 0; j < n; ++j) {
        stacked.middleRows(j * k, k) = scores.scores[static_cast<std::size_t>(j)].transpose();
    }
    const MatrixXd propagated = gain * stacked;

    VarianceEstimate ve;
    ve.hac_lag = lags;
    ve.min_singular_value = smin;
    ve.null_dimension = null_dim;
    ve.periods = periods;
    ve.Omega.resize(static_cast<std::size_t>(n));
    ve.se.resize(n, k);
    for (Index i = 0; i < n; ++i) {
        const MatrixXd v = propagated.middleRows(i * k, k).transpose();
        MatrixXd omega = clip_psd(bartlett_long_run(v, lags));
        for (Index j = 0; j < k; ++j) {
            ve.se(i, j) = std::sqrt(std::max(omega(j, j), 0.0) / static_cast<double>(periods));
        }
        ve.Omega[static_cast<std::size_t>(i)] = std::move(omega);
    }
    return ve;
}

CoefficientTests standard_errors(const VarianceEstimate& ve, const ESFactorFit& fit) {
    const Index n = fit.B.rows();
    const Index k = fit.B.cols();
    if (static_cast<Index>(ve.Omega.size()) != n) {
        throw ValidationError("variance estimate does not match the fit");
    }
    CoefficientTests out;
    out.se.resize(n, k);
    out.t_stat.resize(n, k);
    const double periods = static_cast<double>(ve.periods);
    for (Index i = 0; i < n; ++i) {
        const MatrixXd& omega = ve.Omega[static_cast<std::size_t>(i)];
        for (Index j = 0; j < k; ++j) {
            const double se = std::sqrt(std::max(omega(j, j), 0.0) / periods);
            out.se(i, j) = se;
            out.t_stat(i, j) = se > 0.0 ? fit.B(i, j) / se : std::numeric_limits<double>::quiet_NaN();
        }
    }
    return out;
}

}  // namespace esfm
