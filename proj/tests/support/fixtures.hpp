#pragma once

#include "esfm/types.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace esfm::testing {

inline MatrixXd normal_matrix(std::mt19937_64& rng, Index rows, Index cols, double sd = 1.0) {
    std::normal_distribution<double> nd(0.0, sd);
    MatrixXd m(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) m(i, j) = nd(rng);
    return m;
}

inline std::vector<MatrixXd> covariate_blocks(std::mt19937_64& rng, Index n, Index t, Index p) {
    std::vector<MatrixXd> out;
    for (Index i = 0; i < n; ++i) out.push_back(normal_matrix(rng, t, p));
    return out;
}

inline PanelData random_panel(std::mt19937_64& rng, Index n, Index t, Index p) {
    return PanelData::from_covariates(normal_matrix(rng, n, t), covariate_blocks(rng, n, t, p));
}

// Normal-equation OLS; deliberately not the QR path the library uses.
inline VectorXd ols(const MatrixXd& X, const VectorXd& y) {
    return (X.transpose() * X).ldlt().solve(X.transpose() * y);
}

inline double rho(double u, double tau) { return u * (tau - (u < 0.0 ? 1.0 : 0.0)); }

inline double check_objective(const MatrixXd& X, const VectorXd& y, const VectorXd& a, double tau) {
    const VectorXd r = y - X * a;
    double s = 0.0;
    for (Index t = 0; t < r.size(); ++t) s += rho(r(t), tau);
    return s / static_cast<double>(r.size());
}

// z* = (y - q) 1{y <= q} / tau + q
inline double zstar(double y, double q, double tau) { return (y <= q ? (y - q) / tau : 0.0) + q; }

/// Exact LP answer for linear quantile regression, certified by the
/// subgradient (dual) conditions at a basic solution.
///
/// Starting basis: the k observations with the smallest |residual| at
/// `near`. The basic solution interpolates them; it is optimal iff some
/// psi_h in [tau-1, tau]^k satisfies sum_h x_h psi_h = -sum_{others} x_i psi_i
/// with psi_i = tau for positive and tau-1 for negative residuals. If the
/// certificate fails, the offending basis member is swapped for the
/// next-closest observation (bounded number of tries).
struct LpOracle {
    VectorXd alpha;
    double objective = 0.0;
    bool certified = false;
};

inline LpOracle lp_quantile_oracle(const MatrixXd& X, const VectorXd& y, double tau,
                                   const VectorXd& near, int max_swaps = 200) {
    const Index n = X.rows();
    const Index k = X.cols();
    const VectorXd r0 = y - X * near;
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(),
              [&](Index a, Index b) { return std::abs(r0(a)) < std::abs(r0(b)); });
    std::vector<Index> basis(order.begin(), order.begin() + k);
    std::size_t next = static_cast<std::size_t>(k);

    LpOracle out;
    for (int attempt = 0; attempt <= max_swaps; ++attempt) {
        MatrixXd Xh(k, k);
        VectorXd yh(k);
        for (Index j = 0; j < k; ++j) {
            Xh.row(j) = X.row(basis[static_cast<std::size_t>(j)]);
            yh(j) = y(basis[static_cast<std::size_t>(j)]);
        }
        Eigen::FullPivLU<MatrixXd> lu(Xh);
        if (!lu.isInvertible()) break;
        const VectorXd a = lu.solve(yh);
        const VectorXd r = y - X * a;
        VectorXd rhs = VectorXd::Zero(k);
        std::vector<bool> in_basis(static_cast<std::size_t>(n), false);
        for (Index b : basis) in_basis[static_cast<std::size_t>(b)] = true;
        for (Index i = 0; i < n; ++i) {
            if (in_basis[static_cast<std::size_t>(i)]) continue;
            const double psi = r(i) > 0.0 ? tau : tau - 1.0;
            rhs -= psi * X.row(i).transpose();
        }
        const VectorXd psi_h = Xh.transpose().fullPivLu().solve(rhs);
        Index worst = -1;
        double violation = 0.0;
        for (Index j = 0; j < k; ++j) {
            const double v = std::max(psi_h(j) - tau, (tau - 1.0) - psi_h(j));
            if (v > violation) {
                violation = v;
                worst = j;
            }
        }
        out.alpha = a;
        out.objective = check_objective(X, y, a, tau);
        if (violation <= 1e-9) {
            out.certified = true;
            return out;
        }
        if (next >= order.size()) break;
        basis[static_cast<std::size_t>(worst)] = order[next++];
    }
    return out;
}

/// Z = X B + Lambda F' exactly, with F'F/T = I.
struct LowRankPanel {
    PanelData panel;
    MatrixXd response;
    MatrixXd B;
    MatrixXd F;
    MatrixXd Lambda;
};

inline LowRankPanel low_rank_panel(std::mt19937_64& rng, Index n, Index t, Index p, Index r) {
    LowRankPanel out;
    const auto cov = covariate_blocks(rng, n, t, p);
    out.panel = PanelData::from_covariates(MatrixXd::Zero(n, t), cov);
    out.B = normal_matrix(rng, n, p + 1);
    // Factors orthogonal to the intercept; otherwise their mean trades off
    // against the intercept coefficient.
    MatrixXd g = normal_matrix(rng, t, r);
    g.rowwise() -= g.colwise().mean();
    Eigen::HouseholderQR<MatrixXd> qr(g);
    out.F = qr.householderQ() * MatrixXd::Identity(t, r) * std::sqrt(static_cast<double>(t));
    out.Lambda = normal_matrix(rng, n, r, 2.0);
    out.response = out.Lambda * out.F.transpose();
    for (Index i = 0; i < n; ++i) out.response.row(i) += (out.panel.x(i) * out.B.row(i).transpose()).transpose();
    out.panel = out.panel.with_response(out.response);
    return out;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("esfm_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace esfm::testing
