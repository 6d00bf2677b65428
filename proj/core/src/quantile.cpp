#include "esfm/quantile.hpp"

#include "esfm/kernels.hpp"
#include "esfm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace esfm {

namespace {

// Huber-smoothed check loss: ((|u| smoothed on |u|<=h) + (2 tau - 1) u) / 2.
double smoothed_check_loss(double u, double tau, double h) {
    const double a = std::abs(u);
    const double huber = a <= h ? u * u / (2.0 * h) + h / 2.0 : a;
    return 0.5 * (huber + (2.0 * tau - 1.0) * u);
}

double mean_smoothed_loss(const VectorXd& u, double tau, double h) {
    double total = 0.0;
    for (Index t = 0; t < u.size(); ++t) total += smoothed_check_loss(u[t], tau, h);
    return total / static_cast<double>(u.size());
}

double sample_sd(const VectorXd& y) {
    const double mean = y.mean();
    const double ss = (y.array() - mean).square().sum();
    return y.size() > 1 ? std::sqrt(ss / static_cast<double>(y.size() - 1)) : 0.0;
}

// Basic solution through the k observations with the smallest |residual|.
// Returns false when that subset is singular.
bool vertex_candidate(const MatrixXd& X, const VectorXd& y, const VectorXd& u, VectorXd& out) {
    const Index k = X.cols();
    std::vector<Index> order(static_cast<std::size_t>(u.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return std::abs(u[a]) < std::abs(u[b]); });
    MatrixXd xb(k, k);
    VectorXd yb(k);
    for (Index j = 0; j < k; ++j) {
        xb.row(j) = X.row(order[static_cast<std::size_t>(j)]);
        yb[j] = y[order[static_cast<std::size_t>(j)]];
    }
    Eigen::FullPivLU<MatrixXd> lu(xb);
    if (!lu.isInvertible()) return false;
    out = lu.solve(yb);
    return out.allFinite();
}

}  // namespace

void QrOptions::validate() const {
    const double h0 = initial_bandwidth;
    if (!(min_bandwidth > 0.0)) throw ValidationError("QR min bandwidth must be positive");
    if (h0 > 0.0 && !(h0 > min_bandwidth)) {
        throw ValidationError("QR initial bandwidth must exceed the bandwidth floor");
    }
    if (!(bandwidth_decay > 0.0 && bandwidth_decay < 1.0)) {
        throw ValidationError("QR bandwidth decay must lie in (0,1)");
    }
    if (!(tolerance > 0.0)) throw ValidationError("QR tolerance must be positive");
    if (max_iterations < 1) throw ValidationError("QR max iterations must be >= 1");
}

bool QuantileFit::all_converged() const noexcept {
    return std::all_of(diagnostics.begin(), diagnostics.end(),
                       [](const QuantileDiagnostics& d) { return d.converged; });
}

UnitQuantileFit fit_unit_quantile(const MatrixXd& X, const VectorXd& y, TailLevel tau,
                                  const QrOptions& opts) {
    opts.validate();
    const Index periods = X.rows();
    const Index k = X.cols();
    if (y.size() != periods) throw ValidationError("quantile fit: X and y lengths differ");
    if (periods <= k) {
        throw ValidationError("quantile fit needs T > p+1 (T=" + std::to_string(periods) +
                              ", p+1=" + std::to_string(k) + ")");
    }

    Eigen::ColPivHouseholderQR<MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < k) {
        // Name the first column lying in the span of the ones before it.
        Index dependent = k - 1;
        for (Index j = 1; j < k; ++j) {
            Eigen::ColPivHouseholderQR<MatrixXd> lead(X.leftCols(j + 1));
            lead.setThreshold(1e-10);
            if (lead.rank() <= j) {
                dependent = j;
                break;
            }
        }
        throw ValidationError("design is rank deficient: column " + std::to_string(dependent) +
                              " is linearly dependent on the others");
    }

    const double t = tau.value();
    UnitQuantileFit fit;
    QuantileDiagnostics& diag = fit.diagnostics;

    if ((y.array() == y[0]).all()) {
        fit.alpha = VectorXd::Zero(k);
        fit.alpha[0] = y[0];
        diag.converged = true;
        return fit;
    }

    VectorXd alpha = qr.solve(y);
    diag.warm_start_objective = mean_check_loss(y - X * alpha, tau);
    const VectorXd warm = alpha;

    const VectorXd linear_term = (2.0 * t - 1.0) * X.colwise().sum().transpose();
    double h = opts.initial_bandwidth > 0.0 ? opts.initial_bandwidth : std::max(1.0, sample_sd(y));
    h = std::max(h, opts.min_bandwidth);

    bool level_converged = false;
    MatrixXd xw(periods, k);
    for (;;) {
        level_converged = false;
        for (int it = 0; it < opts.max_iterations; ++it) {
            ++diag.iterations;
            const VectorXd u = y - X * alpha;
            const VectorXd w = u.cwiseAbs().cwiseMax(h).cwiseInverse();
            xw = X.array().colwise() * w.array();
            const MatrixXd normal = X.transpose() * xw;
            const VectorXd rhs = xw.transpose() * y + linear_term;
            const VectorXd next = normal.ldlt().solve(rhs);
            if (!next.allFinite()) break;
            const double change = (next - alpha).cwiseAbs().maxCoeff();
            alpha = next;
            if (change <= opts.tolerance * (1.0 + alpha.cwiseAbs().maxCoeff())) {
                level_converged = true;
                break;
            }
        }
        if (h <= opts.min_bandwidth) break;
        h = std::max(h * opts.bandwidth_decay, opts.min_bandwidth);
    }

    diag.final_bandwidth = h;
    diag.converged = level_converged;
    VectorXd u = y - X * alpha;
    diag.smoothed_objective = mean_smoothed_loss(u, t, h);
    diag.objective = mean_check_loss(u, tau);

    // The exact optimum sits on a vertex interpolating k observations; the
    // smoothed solution is within ~h of it. Take the vertex only if it is
    // strictly better on the exact loss.
    VectorXd vertex;
    if (vertex_candidate(X, y, u, vertex)) {
        const double vobj = mean_check_loss(y - X * vertex, tau);
        if (vobj < diag.objective - 1e-15 * (1.0 + std::abs(diag.objective))) {
            alpha = vertex;
            diag.objective = vobj;
        }
    }
    if (diag.objective > diag.warm_start_objective) {
        alpha = warm;
        diag.objective = diag.warm_start_objective;
    }
    fit.alpha = alpha;
    return fit;
}

QuantileFit fit_panel_quantile(const PanelData& panel, TailLevel tau, const QrOptions& opts,
                               int workers) {
    opts.validate();
    const Index n = panel.num_units();
    QuantileFit out;
    out.A.resize(n, panel.num_coefficients());
    out.diagnostics.resize(static_cast<std::size_t>(n));
    parallel_for(static_cast<std::size_t>(n), workers, [&](std::size_t i) {
        const Index unit = static_cast<Index>(i);
        try {
            UnitQuantileFit f = fit_unit_quantile(panel.x(unit), panel.y().row(unit).transpose(),
                                                  tau, opts);
            out.A.row(unit) = f.alpha.transpose();
            out.diagnostics[i] = f.diagnostics;
        } catch (const ValidationError& e) {
            throw ValidationError("unit " + std::to_string(i) + ": " + e.what());
        } catch (const NumericalError& e) {
            throw NumericalError("unit " + std::to_string(i) + ": " + e.what());
        }
    });
    return out;
}

}  // namespace esfm
