#pragma once

#include "esfm/types.hpp"

namespace esfm {

/// Check loss rho_tau(u) = (tau - 1{u < 0}) u.
double check_loss(double u, TailLevel tau) noexcept;

/// Mean check loss of the residual vector y - X a.
double mean_check_loss(const Eigen::Ref<const VectorXd>& residuals, TailLevel tau) noexcept;

struct PseudoResponse {
    double z;
    double z_star;  // z / tau
};

/// Orthogonalized ES pseudo-response at fitted quantile q.
PseudoResponse pseudo_response(double y, double q, TailLevel tau) noexcept;

/// Throws ValidationError naming the worst Gram entry if F'F/T deviates from
/// the identity by more than `tolerance`.
void check_factor_normalization(const MatrixXd& F, double tolerance = kNormalizationTolerance);

/// M_F V = V - F (F'V) / T, without forming the T x T projector.
MatrixXd annihilate(const MatrixXd& F, const MatrixXd& V);

/// Thin orthonormal basis of span(A). Throws ValidationError if A is rank deficient.
MatrixXd orthonormal_basis(const MatrixXd& A);

/// ||P_a - P_b||_F^2 / T, rotation invariant in both arguments.
double projection_distance(const MatrixXd& F_a, const MatrixXd& F_b);

/// Flips column signs so every column has a nonnegative sum; a zero-sum column
/// is oriented so its first nonzero entry is positive. Returns the sign vector.
VectorXd apply_sign_convention(MatrixXd& F);

}  // namespace esfm
