#include "esfm/selection.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace esfm {

double penalty(Index N, Index T) {
    if (N < 2 || T < 2) {
        throw ValidationError("penalty requires N >= 2 and T >= 2");
    }
    const double n = static_cast<double>(N);
    const double t = static_cast<double>(T);
    return std::log(n * t / (n + t)) * ((n + t) / (n * t));
}

double residual_variance(const PanelData& panel, const QuantileFit& qfit, TailLevel tau, Index r,
                         const FitOptions& opts) {
    const ESFactorFit fit = fit_es_factor_model(panel, qfit, tau, r, opts);
    return std::max(fit.final_objective(), kResidualVarianceFloor);
}

ICSelection select_num_factors_for(const PanelData& panel, const MatrixXd& response, Index r_max,
                                   const FitOptions& opts, bool warm_start) {
    const Index n = panel.num_units();
    const Index periods = panel.num_periods();
    if (r_max < 0) throw ValidationError("R_max must be nonnegative");
    if (r_max > std::min(n, periods) - 1) {
        throw ValidationError("R_max " + std::to_string(r_max) + " exceeds min(N,T) - 1 = " +
                              std::to_string(std::min(n, periods) - 1));
    }

    ICSelection sel;
    sel.penalty = penalty(n, periods);
    MatrixXd start;
    for (Index r = 0; r <= r_max; ++r) {
        const bool use_warm = warm_start && r > 0;
        ESFactorFit fit = fit_factor_regression(panel, response, r, opts, use_warm ? &start : nullptr);
        double floor = kResidualVarianceFloor;
        if (r > 0) floor = std::max(floor, kRelativeVarianceFloor * sel.V.front());
        const double v = std::max(fit.final_objective(), floor);
        sel.candidates.push_back(r);
        sel.V.push_back(v);
        sel.IC.push_back(std::log(v) + static_cast<double>(r) * sel.penalty);

        if (warm_start && r < r_max) {
            // Next start: current factors plus the leading right singular
            // vector of the residuals (orthogonal to F because e F = 0).
            Eigen::BDCSVD<MatrixXd> svd(fit.residuals, Eigen::ComputeThinV);
            auto orthogonalize = [&](VectorXd v) {
                if (r > 0) {
                    v -= fit.factors.F * (fit.factors.F.transpose() * v) /
                         static_cast<double>(periods);
                }
                return v;
            };
            VectorXd extra = orthogonalize(svd.matrixV().col(0));
            // Exact fits leave no residual direction; fall back to a canonical one.
            for (Index t = 0; extra.norm() < 0.5 && t < periods; ++t) {
                extra = orthogonalize(VectorXd::Unit(periods, t));
            }
            extra *= std::sqrt(static_cast<double>(periods)) / extra.norm();
            start.resize(periods, r + 1);
            if (r > 0) start.leftCols(r) = fit.factors.F;
            start.col(r) = extra;
        }
        sel.fits.push_back(std::move(fit));
    }
    sel.r_hat = 0;
    for (std::size_t j = 1; j < sel.IC.size(); ++j) {
        if (sel.IC[j] < sel.IC[static_cast<std::size_t>(sel.r_hat)]) {
            sel.r_hat = static_cast<Index>(j);
        }
    }
    return sel;
}

ICSelection select_num_factors(const PanelData& panel, const QuantileFit& qfit, TailLevel tau,
                               Index r_max, const FitOptions& opts, bool warm_start) {
    return select_num_factors_for(panel, pseudo_response_matrix(panel, qfit.A, tau), r_max, opts,
                                  warm_start);
}

}  // namespace esfm
