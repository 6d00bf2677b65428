#include "esfm/es_factor.hpp"

#include "esfm/kernels.hpp"
#include "esfm/parallel.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace esfm {

namespace {

std::string unit_suffix(Index unit) {
    return unit >= 0 ? " (unit " + std::to_string(unit) + ")" : std::string{};
}

void check_rank_request(Index r, Index n, Index t) {
    if (r < 0) throw ValidationError("factor count must be nonnegative");
    if (r > std::min(n, t)) {
        throw ValidationError("factor count " + std::to_string(r) + " exceeds min(N,T) = " +
                              std::to_string(std::min(n, t)));
    }
}

// Residual matrix W = Z - X B.
MatrixXd covariate_residuals(const PanelData& panel, const MatrixXd& z, const MatrixXd& B) {
    MatrixXd w = z;
    for (Index i = 0; i < panel.num_units(); ++i) {
        w.row(i) -= (panel.x(i) * B.row(i).transpose()).transpose();
    }
    return w;
}

MatrixXd update_all_betas(const PanelData& panel, const MatrixXd& z, const MatrixXd& F,
                          const FitOptions& opts, std::vector<Index>& jittered) {
    const Index n = panel.num_units();
    MatrixXd B(n, panel.num_coefficients());
    std::vector<char> flags(static_cast<std::size_t>(n), 0);
    parallel_for(static_cast<std::size_t>(n), opts.workers, [&](std::size_t i) {
        const Index unit = static_cast<Index>(i);
        BetaUpdate u = update_beta(z.row(unit).transpose(), panel.x(unit), F, opts.jitter, unit);
        B.row(unit) = u.beta.transpose();
        flags[i] = u.jittered ? 1 : 0;
    });
    for (Index i = 0; i < n; ++i) {
        if (flags[static_cast<std::size_t>(i)] != 0) jittered.push_back(i);
    }
    return B;
}

}  // namespace

void FitOptions::validate() const {
    if (max_iterations < 1) throw ValidationError("max iterations must be >= 1");
    if (!(tolerance > 0.0)) throw ValidationError("objective tolerance must be positive");
    if (!(jitter >= 0.0)) throw ValidationError("ridge jitter must be nonnegative");
}

MatrixXd pseudo_response_matrix(const PanelData& panel, const MatrixXd& A, TailLevel tau) {
    const Index n = panel.num_units();
    const Index periods = panel.num_periods();
    if (A.rows() != n || A.cols() != panel.num_coefficients()) {
        throw ValidationError("quantile coefficient matrix does not match the panel");
    }
    MatrixXd zs(n, periods);
    for (Index i = 0; i < n; ++i) {
        const VectorXd q = panel.x(i) * A.row(i).transpose();
        for (Index t = 0; t < periods; ++t) {
            zs(i, t) = pseudo_response(panel.y()(i, t), q[t], tau).z_star;
        }
    }
    return zs;
}

BetaUpdate update_beta(const VectorXd& zstar, const MatrixXd& X, const MatrixXd& F, double jitter,
                       Index unit) {
    if (X.rows() != zstar.size() || F.rows() != zstar.size()) {
        throw ValidationError("update_beta: inconsistent period counts" + unit_suffix(unit));
    }
    const Index k = X.cols();
    MatrixXd normal = X.transpose() * X;
    VectorXd rhs = X.transpose() * zstar;
    if (F.cols() > 0) {
        const double periods = static_cast<double>(F.rows());
        const MatrixXd xf = X.transpose() * F;
        normal.noalias() -= xf * xf.transpose() / periods;
        rhs.noalias() -= xf * (F.transpose() * zstar) / periods;
    }
    normal = 0.5 * (normal + normal.transpose());

    BetaUpdate out;
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(normal, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(hi > 0.0)) {
        throw NumericalError("X'M_F X is zero" + unit_suffix(unit));
    }
    if (lo <= 1e-12 * hi) {
        const double ridge = jitter * normal.trace() / static_cast<double>(k);
        normal.diagonal().array() += ridge;
        out.jittered = true;
        const double lo2 = lo + ridge;
        if (!(lo2 > 1e-14 * (hi + ridge))) {
            throw NumericalError("X'M_F X is singular even after ridge jitter" + unit_suffix(unit));
        }
    }
    out.beta = normal.ldlt().solve(rhs);
    if (!out.beta.allFinite()) {
        throw NumericalError("non-finite beta update" + unit_suffix(unit));
    }
    return out;
}

FactorBundle extract_factors(const MatrixXd& W, Index r) {
    const Index n = W.rows();
    const Index periods = W.cols();
    check_rank_request(r, n, periods);
    if (r == 0) return FactorBundle::empty(periods, n);

    const double scale = std::sqrt(static_cast<double>(n) * static_cast<double>(periods));
    Eigen::BDCSVD<MatrixXd> svd(W / scale, Eigen::ComputeThinV);
    FactorBundle out;
    out.F = std::sqrt(static_cast<double>(periods)) * svd.matrixV().leftCols(r);
    apply_sign_convention(out.F);
    out.Lambda = W * out.F / static_cast<double>(periods);
    return out;
}

FactorBundle init_factors(const PanelData& panel, const MatrixXd& zstar, Index r) {
    check_rank_request(r, panel.num_units(), panel.num_periods());
    const Index n = panel.num_units();
    MatrixXd B(n, panel.num_coefficients());
    const MatrixXd none(panel.num_periods(), 0);
    for (Index i = 0; i < n; ++i) {
        B.row(i) = update_beta(zstar.row(i).transpose(), panel.x(i), none, 0.0, i).beta.transpose();
    }
    return extract_factors(covariate_residuals(panel, zstar, B), r);
}

ESFactorFit fit_factor_regression(const PanelData& panel, const MatrixXd& response, Index r,
                                  const FitOptions& opts, const MatrixXd* warm_start) {
    opts.validate();
    const Index n = panel.num_units();
    const Index periods = panel.num_periods();
    if (response.rows() != n || response.cols() != periods) {
        throw ValidationError("response matrix does not match the panel dimensions");
    }
    check_rank_request(r, n, periods);

    ESFactorFit fit;
    MatrixXd F;
    if (r == 0) {
        F.resize(periods, 0);
    } else if (warm_start != nullptr) {
        if (warm_start->rows() != periods || warm_start->cols() != r) {
            throw ValidationError("warm-start factors have the wrong shape");
        }
        F = *warm_start;
        check_factor_normalization(F);
    } else {
        F = init_factors(panel, response, r).F;
    }

    const double nt = static_cast<double>(n) * static_cast<double>(periods);
    const double floor = 1e-30 * std::max(response.squaredNorm() / nt, 1e-300);
    double previous = std::numeric_limits<double>::infinity();
    for (int iter = 1; iter <= opts.max_iterations; ++iter) {
        std::vector<Index> jittered;
        fit.B = update_all_betas(panel, response, F, opts, jittered);
        const MatrixXd w = covariate_residuals(panel, response, fit.B);
        fit.factors = extract_factors(w, r);
        fit.residuals = w;
        if (r > 0) fit.residuals.noalias() -= fit.factors.Lambda * fit.factors.F.transpose();
        const double obj = fit.residuals.squaredNorm() / nt;
        fit.objective_path.push_back(obj);
        fit.iterations = iter;
        fit.jittered_units = std::move(jittered);
        F = fit.factors.F;
        if (r == 0 || obj <= floor || (iter > 1 && previous - obj <= opts.tolerance * previous)) {
            fit.converged = true;
            break;
        }
        previous = obj;
    }
    return fit;
}

ESFactorFit fit_es_factor_model(const PanelData& panel, const QuantileFit& qfit, TailLevel tau,
                                Index r, const FitOptions& opts) {
    return fit_factor_regression(panel, pseudo_response_matrix(panel, qfit.A, tau), r, opts);
}

ESFactorFit fit_mean_factor_model(const PanelData& panel, Index r, const FitOptions& opts) {
    return fit_factor_regression(panel, panel.y(), r, opts);
}

double objective(const PanelData& panel, const MatrixXd& zstar, const MatrixXd& B,
                 const FactorBundle& bundle) {
    MatrixXd e = covariate_residuals(panel, zstar, B);
    if (bundle.rank() > 0) e.noalias() -= bundle.Lambda * bundle.F.transpose();
    return e.squaredNorm() /
           (static_cast<double>(panel.num_units()) * static_cast<double>(panel.num_periods()));
}

MatrixXd predict_es(const ESFactorFit& fit, const PanelData& panel) {
    const Index n = panel.num_units();
    MatrixXd pred(n, panel.num_periods());
    for (Index i = 0; i < n; ++i) {
        pred.row(i) = (panel.x(i) * fit.B.row(i).transpose()).transpose();
    }
    if (fit.rank() > 0) pred.noalias() += fit.factors.Lambda * fit.factors.F.transpose();
    return pred;
}

}  // namespace esfm
