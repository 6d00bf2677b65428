#include "esfm/kernels.hpp"

#include <cmath>
#include <sstream>

namespace esfm {

double check_loss(double u, TailLevel tau) noexcept {
    const double t = tau.value();
    return u < 0.0 ? (t - 1.0) * u : t * u;
}

double mean_check_loss(const Eigen::Ref<const VectorXd>& residuals, TailLevel tau) noexcept {
    if (residuals.size() == 0) return 0.0;
    double total = 0.0;
    for (Index t = 0; t < residuals.size(); ++t) total += check_loss(residuals[t], tau);
    return total / static_cast<double>(residuals.size());
}

PseudoResponse pseudo_response(double y, double q, TailLevel tau) noexcept {
    const double t = tau.value();
    const double z = (y <= q ? y - q : 0.0) + t * q;
    return {z, z / t};
}

void check_factor_normalization(const MatrixXd& F, double tolerance) {
    const Index r = F.cols();
    if (r == 0) return;
    const double periods = static_cast<double>(F.rows());
    const MatrixXd gram = F.transpose() * F / periods;
    Index wi = 0, wj = 0;
    double worst = 0.0;
    for (Index j = 0; j < r; ++j) {
        for (Index i = 0; i < r; ++i) {
            const double dev = std::abs(gram(i, j) - (i == j ? 1.0 : 0.0));
            if (dev > worst) {
                worst = dev;
                wi = i;
                wj = j;
            }
        }
    }
    if (worst > tolerance) {
        std::ostringstream msg;
        msg << "factor normalization F'F/T = I violated at Gram entry (" << wi << "," << wj
            << "): value " << gram(wi, wj) << ", deviation " << worst;
        throw ValidationError(msg.str());
    }
}

MatrixXd annihilate(const MatrixXd& F, const MatrixXd& V) {
    if (F.rows() != V.rows()) {
        throw ValidationError("annihilate: F has " + std::to_string(F.rows()) + " rows, V has " +
                              std::to_string(V.rows()));
    }
    if (F.cols() == 0) return V;
    check_factor_normalization(F);
    const double periods = static_cast<double>(F.rows());
    return V - F * (F.transpose() * V) / periods;
}

MatrixXd orthonormal_basis(const MatrixXd& A) {
    const Index r = A.cols();
    if (r == 0) return MatrixXd(A.rows(), 0);
    if (A.rows() < r) {
        throw ValidationError("orthonormal_basis: more columns than rows");
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(A);
    qr.setThreshold(1e-10);
    if (qr.rank() < r) {
        throw ValidationError("matrix is rank deficient: rank " + std::to_string(qr.rank()) +
                              " < " + std::to_string(r) + " columns");
    }
    MatrixXd q = qr.householderQ() * MatrixXd::Identity(A.rows(), r);
    return q;
}

double projection_distance(const MatrixXd& F_a, const MatrixXd& F_b) {
    if (F_a.rows() != F_b.rows()) {
        throw ValidationError("projection_distance: factor matrices have different lengths");
    }
    const Index periods = F_a.rows();
    if (periods == 0) throw ValidationError("projection_distance: empty time dimension");
    const MatrixXd qa = orthonormal_basis(F_a);
    const MatrixXd qb = orthonormal_basis(F_b);
    double cross = 0.0;
    if (qa.cols() > 0 && qb.cols() > 0) cross = (qa.transpose() * qb).squaredNorm();
    const double dist =
        static_cast<double>(qa.cols() + qb.cols()) - 2.0 * cross;
    return std::max(dist, 0.0) / static_cast<double>(periods);
}

VectorXd apply_sign_convention(MatrixXd& F) {
    VectorXd signs = VectorXd::Ones(F.cols());
    for (Index j = 0; j < F.cols(); ++j) {
        const double sum = F.col(j).sum();
        const double scale = F.col(j).cwiseAbs().sum();
        bool flip = false;
        if (std::abs(sum) > 1e-12 * scale) {
            flip = sum < 0.0;
        } else {
            for (Index t = 0; t < F.rows(); ++t) {
                if (std::abs(F(t, j)) > 1e-12 * scale) {
                    flip = F(t, j) < 0.0;
                    break;
                }
            }
        }
        if (flip) {
            F.col(j) = -F.col(j);
            signs[j] = -1.0;
        }
    }
    return signs;
}

}  // namespace esfm
