#include "esfm/asset_pricing.hpp"

#include "fixtures.hpp"

#include <gtest/gtest.h>

using namespace esfm;
using namespace esfm::testing;

TEST(RollingExposures, ExactMultipleOfFactor) {
    std::mt19937_64 rng(1);
    const MatrixXd f = normal_matrix(rng, 50, 1);
    MatrixXd returns(3, 50);
    for (Index i = 0; i < 3; ++i) returns.row(i) = 2.0 * f.col(0).transpose();
    const auto ex = rolling_exposures(returns, f, 20);
    ASSERT_EQ(ex.size(), 30u);
    for (const auto& b : ex) EXPECT_TRUE(b.isApproxToConstant(2.0, 1e-12));
}

TEST(RollingExposures, WindowMatchesStandaloneOls) {
    std::mt19937_64 rng(2);
    const MatrixXd f = normal_matrix(rng, 40, 2);
    const MatrixXd returns = normal_matrix(rng, 4, 40);
    const auto ex = rolling_exposures(returns, f, 15);
    const Index d = 7;
    MatrixXd X(15, 3);
    X.col(0).setOnes();
    X.rightCols(2) = f.middleRows(d, 15);
    for (Index i = 0; i < 4; ++i) {
        const VectorXd b = ols(X, returns.row(i).segment(d, 15).transpose());
        EXPECT_LT((ex[d].row(i).transpose() - b.tail(2)).norm(), 1e-10);
    }
}

TEST(RollingExposures, NoiseFactorNearZero) {
    std::mt19937_64 rng(3);
    const Index window = 400;
    const MatrixXd f = normal_matrix(rng, window + 1, 1);
    const MatrixXd returns = normal_matrix(rng, 50, window + 1);
    const auto ex = rolling_exposures(returns, f, window);
    ASSERT_EQ(ex.size(), 1u);
    EXPECT_LT(std::abs(ex[0].mean()), 3.0 / std::sqrt(double(window)));
}

TEST(RollingExposures, RejectsShortSamples) {
    const MatrixXd f = MatrixXd::Ones(10, 1);
    EXPECT_THROW(rolling_exposures(MatrixXd::Zero(2, 10), f, 10), ValidationError);
    EXPECT_THROW(rolling_exposures(MatrixXd::Zero(2, 10), MatrixXd::Ones(9, 1), 5), ValidationError);
}

TEST(SortPortfolios, PerfectForesight) {
    std::mt19937_64 rng(4);
    const MatrixXd realized = normal_matrix(rng, 10, 6);
    const SortSeries s = sort_portfolios(realized, realized, 5);
    for (Index d = 0; d < 6; ++d) {
        std::vector<double> v(realized.col(d).data(), realized.col(d).data() + 10);
        std::sort(v.begin(), v.end());
        EXPECT_NEAR(s.hl_series(d), (v[8] + v[9]) / 2.0 - (v[0] + v[1]) / 2.0, 1e-14);
    }
}

TEST(SortPortfolios, TiesKeepInputOrder) {
    MatrixXd realized(10, 1);
    realized.col(0) = VectorXd::LinSpaced(10, 0.0, 9.0);
    const SortSeries s = sort_portfolios(MatrixXd::Zero(10, 1), realized, 5);
    for (Index g = 0; g < 5; ++g) EXPECT_DOUBLE_EQ(s.group_returns(0, g), 2.0 * g + 0.5);
}

TEST(SortPortfolios, ScaleInvariant) {
    std::mt19937_64 rng(5);
    const MatrixXd ex = normal_matrix(rng, 23, 8);
    const MatrixXd realized = normal_matrix(rng, 23, 8);
    const SortSeries a = sort_portfolios(ex, realized, 5);
    MatrixXd scaled = ex;
    for (Index d = 0; d < 8; ++d) scaled.col(d) *= 0.1 + d;
    const SortSeries b = sort_portfolios(scaled, realized, 5);
    EXPECT_EQ(a.group_returns, b.group_returns);
}

TEST(SortPortfolios, MonotoneExposurePositiveSpread) {
    std::mt19937_64 rng(6);
    const Index n = 50, dates = 200;
    const MatrixXd ex = normal_matrix(rng, n, dates);
    const MatrixXd realized = 0.5 * ex + normal_matrix(rng, n, dates, 0.2);
    EXPECT_GT(sort_portfolios(ex, realized, 5).hl_series.mean(), 0.0);
}

TEST(NeweyWest, ZeroLagsIsWhite) {
    std::mt19937_64 rng(7);
    MatrixXd X(60, 3);
    X.col(0).setOnes();
    X.rightCols(2) = normal_matrix(rng, 60, 2);
    const VectorXd e = normal_matrix(rng, 60, 1).col(0);
    const MatrixXd bread = (X.transpose() * X).inverse();
    MatrixXd meat = MatrixXd::Zero(3, 3);
    for (Index t = 0; t < 60; ++t) meat += e(t) * e(t) * X.row(t).transpose() * X.row(t);
    EXPECT_LT((newey_west_cov(X, e, 0) - bread * meat * bread).norm(), 1e-12);
}

TEST(AlphaRegression, SpannedPortfolioHasZeroAlpha) {
    std::mt19937_64 rng(8);
    const MatrixXd f = normal_matrix(rng, 120, 3, 0.04);
    VectorXd w(3);
    w << 0.8, -0.3, 1.1;
    const AlphaEstimate a = alpha_regression(f * w, f, 6);
    EXPECT_LT(std::abs(a.alpha), 1e-8);
    EXPECT_LT((a.coefficients.tail(3) - w).norm(), 1e-10);
}

TEST(AlphaRegression, EmptyBenchmarkGivesAnnualizedMean) {
    std::mt19937_64 rng(9);
    const VectorXd r = normal_matrix(rng, 80, 1, 0.05).col(0).array() + 0.01;
    const AlphaEstimate a = alpha_regression(r, MatrixXd(80, 0), 3);
    EXPECT_NEAR(a.alpha, annualized_mean(r), 1e-10);
    EXPECT_NEAR(annualized_mean(r), 1200.0 * r.mean(), 1e-12);
}

TEST(FamaMacBeth, RecoversPlantedPremium) {
    std::mt19937_64 rng(10);
    const Index n = 30, t = 100;
    const MatrixXd f = normal_matrix(rng, t, 2);
    const MatrixXd beta = normal_matrix(rng, n, 2);
    // Exact linear cross-section: the factor realizations are lambda-shifted so
    // that every period's cross-section is explained by the loadings.
    VectorXd gamma(2);
    gamma << 0.5, -0.2;
    MatrixXd returns(n, t);
    for (Index s = 0; s < t; ++s) returns.col(s) = beta * (gamma + f.row(s).transpose() - f.colwise().mean().transpose());
    const MatrixXd fac = f.rowwise() - f.colwise().mean();
    const FMResult fm = fama_macbeth(returns, fac + MatrixXd::Ones(t, 1) * gamma.transpose());
    EXPECT_LT((fm.premia / 100.0 - gamma).norm(), 1e-8);
    EXPECT_LT(std::abs(fm.intercept), 1e-8);
    EXPECT_NEAR(fm.adj_r2, 100.0, 1e-8);
}

TEST(FamaMacBeth, TwoLoadingClosedForm) {
    // Two loading values b1, b2: the cross-sectional slope is the return gap
    // over the loading gap.
    const Index t = 40;
    std::mt19937_64 rng(11);
    MatrixXd f = normal_matrix(rng, t, 1);
    MatrixXd returns(4, t);
    const double b1 = 0.5, b2 = 1.5;
    const MatrixXd noise = normal_matrix(rng, 2, t, 0.1);
    for (Index s = 0; s < t; ++s) {
        returns(0, s) = returns(1, s) = b1 * f(s, 0) + noise(0, s);
        returns(2, s) = returns(3, s) = b2 * f(s, 0) + noise(1, s);
    }
    const FMResult fm = fama_macbeth(returns, f);
    const VectorXd gap = (returns.row(2) - returns.row(0)).transpose();
    // first-pass loadings of the two assets
    MatrixXd X(t, 2);
    X.col(0).setOnes();
    X.col(1) = f.col(0);
    const double l0 = ols(X, returns.row(0).transpose())(1);
    const double l2 = ols(X, returns.row(2).transpose())(1);
    EXPECT_NEAR(fm.premia(0) / 100.0, gap.mean() / (l2 - l0), 1e-10);
}

TEST(GeneralizedCorrelations, RotationInvariant) {
    std::mt19937_64 rng(12);
    const MatrixXd a = normal_matrix(rng, 80, 2);
    const MatrixXd b = normal_matrix(rng, 80, 3);
    const VectorXd base = generalized_correlations(a, b);
    const VectorXd rot = generalized_correlations(a * normal_matrix(rng, 2, 2), b * normal_matrix(rng, 3, 3));
    EXPECT_LT((base - rot).norm(), 1e-8);
    EXPECT_EQ(base.size(), 2);
    const VectorXd self = generalized_correlations(a, a);
    EXPECT_TRUE(self.isApproxToConstant(1.0, 1e-12));
}

TEST(GeneralizedCorrelations, SelfBlockDominatesNoise) {
    std::mt19937_64 rng(13);
    const MatrixXd a = normal_matrix(rng, 150, 2);
    MatrixXd augmented(150, 4);
    augmented << a, normal_matrix(rng, 150, 2);
    const VectorXd with_self = generalized_correlations(a, augmented);
    const VectorXd noise = generalized_correlations(a, normal_matrix(rng, 150, 4));
    for (Index j = 0; j < 2; ++j) EXPECT_GE(with_self(j), noise(j));
}

TEST(MimickingSeries, LengthAndComposition) {
    std::mt19937_64 rng(14);
    const MatrixXd returns = normal_matrix(rng, 20, 31);
    const VectorXd factor = normal_matrix(rng, 31, 1).col(0);
    const VectorXd hl = factor_mimicking_series(returns, factor, 30, 5);
    EXPECT_EQ(hl.size(), 1);
    const auto ex = rolling_exposures(returns, factor, 30);
    EXPECT_EQ(hl(0), sort_portfolios(ex[0], returns.rightCols(1), 5).hl_series(0));
}

TEST(SummarizeSort, HighMinusLowAlphaPerBenchmark) {
    std::mt19937_64 rng(15);
    SortSeries s;
    s.group_returns = normal_matrix(rng, 60, 5, 0.05);
    s.hl_series = s.group_returns.col(4) - s.group_returns.col(0);
    const std::vector<Benchmark> bms{{"CAPM", normal_matrix(rng, 60, 1, 0.04)}, {"FF3", normal_matrix(rng, 60, 3, 0.04)}};
    const SortResult r = summarize_sort(s, bms, 4);
    ASSERT_EQ(r.alphas.size(), 2u);
    EXPECT_EQ(r.alphas[1].label, "FF3");
    EXPECT_EQ(r.avg_annualized.size(), 6);
    EXPECT_NEAR(r.avg_annualized(5), r.avg_annualized(4) - r.avg_annualized(0), 1e-12);
}
