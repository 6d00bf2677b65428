#include "esfm/quantile.hpp"

#include "fixtures.hpp"

#include <gtest/gtest.h>

using namespace esfm;
using namespace esfm::testing;

namespace {

MatrixXd design(std::mt19937_64& rng, Index t, Index p) {
    MatrixXd X(t, p + 1);
    X.col(0).setOnes();
    X.rightCols(p) = normal_matrix(rng, t, p);
    return X;
}

VectorXd heavy_response(std::mt19937_64& rng, const MatrixXd& X) {
    std::student_t_distribution<double> td(4.0);
    VectorXd y = X * VectorXd::LinSpaced(X.cols(), 1.0, 2.0);
    for (Index t = 0; t < y.size(); ++t) y(t) += (1.0 + 0.5 * std::abs(X(t, X.cols() - 1))) * td(rng);
    return y;
}

}  // namespace

TEST(UnitQuantile, MatchesCertifiedLpOptimum) {
    std::mt19937_64 rng(101);
    for (const double tau : {0.05, 0.1, 0.5}) {
        for (int rep = 0; rep < 8; ++rep) {
            const MatrixXd X = design(rng, 120, 2);
            const VectorXd y = heavy_response(rng, X);
            const auto fit = fit_unit_quantile(X, y, TailLevel(tau));
            const LpOracle lp = lp_quantile_oracle(X, y, tau, fit.alpha);
            ASSERT_TRUE(lp.certified) << "tau " << tau << " rep " << rep;
            EXPECT_LE(fit.diagnostics.objective - lp.objective, 1e-6 * (1.0 + std::abs(lp.objective)));
            EXPECT_GE(fit.diagnostics.objective, lp.objective - 1e-12);
            EXPECT_NEAR(fit.diagnostics.objective, check_objective(X, y, fit.alpha, tau), 1e-12);
        }
    }
}

TEST(UnitQuantile, InterceptOnlyIsSampleQuantile) {
    std::mt19937_64 rng(7);
    VectorXd y = normal_matrix(rng, 101, 1).col(0);
    const MatrixXd X = MatrixXd::Ones(101, 1);
    const auto fit = fit_unit_quantile(X, y, TailLevel(0.5));
    std::vector<double> s(y.data(), y.data() + y.size());
    std::sort(s.begin(), s.end());
    EXPECT_NEAR(fit.alpha(0), s[50], 1e-5);
}

TEST(UnitQuantile, BelowFractionNearTau) {
    std::mt19937_64 rng(17);
    for (int rep = 0; rep < 10; ++rep) {
        const Index t = 200, p = 3;
        const MatrixXd X = design(rng, t, p);
        const VectorXd y = heavy_response(rng, X);
        const double tau = 0.1;
        const auto fit = fit_unit_quantile(X, y, TailLevel(tau));
        const VectorXd r = y - X * fit.alpha;
        const double frac = (r.array() < -1e-9).cast<double>().mean();
        EXPECT_NEAR(frac, tau, 2.0 * (p + 1) / double(t));
    }
}

TEST(UnitQuantile, EquivariantToShiftsAndScale) {
    std::mt19937_64 rng(23);
    const MatrixXd X = design(rng, 150, 2);
    const VectorXd y = heavy_response(rng, X);
    const TailLevel tau(0.1);
    const auto base = fit_unit_quantile(X, y, tau);
    VectorXd c(3);
    c << 0.5, -1.0, 2.0;
    const auto shifted = fit_unit_quantile(X, y + X * c, tau);
    EXPECT_NEAR(check_objective(X, y + X * c, shifted.alpha, 0.1),
                check_objective(X, y, base.alpha, 0.1), 1e-7);
    EXPECT_LT((shifted.alpha - base.alpha - c).norm(), 1e-4);
    const auto scaled = fit_unit_quantile(X, 3.0 * y, tau);
    EXPECT_LT((scaled.alpha - 3.0 * base.alpha).norm(), 1e-4);
}

TEST(UnitQuantile, WarmStartNeverBeatsFinal) {
    std::mt19937_64 rng(29);
    const MatrixXd X = design(rng, 100, 3);
    const VectorXd y = heavy_response(rng, X);
    const auto fit = fit_unit_quantile(X, y, TailLevel(0.05));
    EXPECT_LE(fit.diagnostics.objective, fit.diagnostics.warm_start_objective + 1e-12);
    EXPECT_TRUE(fit.diagnostics.converged);
}

TEST(UnitQuantile, RankDeficientDesignNamesColumn) {
    std::mt19937_64 rng(31);
    MatrixXd X = design(rng, 50, 2);
    X.col(2) = 2.0 * X.col(1);
    try {
        fit_unit_quantile(X, VectorXd::Ones(50), TailLevel(0.1));
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("column 2"), std::string::npos) << e.what();
    }
}

TEST(UnitQuantile, RejectsBadOptions) {
    QrOptions o;
    o.bandwidth_decay = 1.5;
    EXPECT_THROW(o.validate(), ValidationError);
    o = {};
    o.max_iterations = 0;
    EXPECT_THROW(o.validate(), ValidationError);
}

TEST(PanelQuantile, IndependentOfWorkerCount) {
    std::mt19937_64 rng(37);
    const PanelData panel = random_panel(rng, 12, 60, 2);
    const auto a = fit_panel_quantile(panel, TailLevel(0.1), {}, 1);
    const auto b = fit_panel_quantile(panel, TailLevel(0.1), {}, 4);
    EXPECT_EQ(a.A, b.A);
    for (Index i = 0; i < panel.num_units(); ++i) {
        EXPECT_EQ(a.A.row(i).transpose(), fit_unit_quantile(panel.x(i), panel.y().row(i).transpose(),
                                                            TailLevel(0.1)).alpha);
    }
}

TEST(UnitQuantile, SmallHandCases) {
    VectorXd y3(3);
    y3 << 1.0, 2.0, 3.0;
    EXPECT_NEAR(fit_unit_quantile(MatrixXd::Ones(3, 1), y3, TailLevel(0.5)).alpha(0), 2.0, 1e-5);

    // Flat region of the exact loss: every value in [1, 2] is optimal.
    VectorXd y4(4);
    y4 << 1.0, 2.0, 3.0, 4.0;
    const auto flat = fit_unit_quantile(MatrixXd::Ones(4, 1), y4, TailLevel(0.25));
    EXPECT_GE(flat.alpha(0), 1.0 - 1e-6);
    EXPECT_LE(flat.alpha(0), 2.0 + 1e-6);
    const MatrixXd one = MatrixXd::Ones(4, 1);
    for (double a = 1.0; a <= 2.0; a += 0.125) {
        EXPECT_NEAR(check_objective(one, y4, VectorXd::Constant(1, a), 0.25),
                    check_objective(one, y4, VectorXd::Constant(1, 1.5), 0.25), 1e-15);
    }

    MatrixXd X(6, 2);
    X.col(0).setOnes();
    X.col(1) << -2.0, -1.0, 0.5, 1.0, 3.0, 4.0;
    const auto exact = fit_unit_quantile(X, 2.0 * X.col(1), TailLevel(0.1));
    EXPECT_NEAR(exact.alpha(0), 0.0, 1e-6);
    EXPECT_NEAR(exact.alpha(1), 2.0, 1e-6);
    EXPECT_NEAR(exact.diagnostics.objective, 0.0, 1e-6);
}

TEST(PanelQuantile, DuplicatedUnitsGiveIdenticalRows) {
    std::mt19937_64 rng(41);
    const MatrixXd x = normal_matrix(rng, 80, 2);
    MatrixXd y(2, 80);
    y.row(0) = normal_matrix(rng, 1, 80);
    y.row(1) = y.row(0);
    const auto panel = PanelData::from_covariates(y, {x, x});
    const auto fit = fit_panel_quantile(panel, TailLevel(0.1));
    EXPECT_EQ(fit.A.row(0), fit.A.row(1));
}
