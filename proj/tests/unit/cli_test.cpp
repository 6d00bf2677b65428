#include "app.hpp"

#include "esfm/io.hpp"

#include "fixtures.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

using namespace esfm;
using namespace esfm::testing;
namespace fs = std::filesystem;

namespace {

int run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "esfm");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli::run(static_cast<int>(argv.size()), argv.data());
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_text(p)); }

}  // namespace

TEST(Cli, SelectRFindsRankTwoOnNoiselessFixture) {
    // Intercept-only units whose only below-quantile periods are the six in
    // S1 = {0,1,2} and S2 = {3,4,5}. Every q inside the gap of the sample
    // tau-quantile gives Z* = q_i + (c_i + l_i1) 1_S1 + (c_i + l_i2) 1_S2:
    // a unit intercept plus an exact rank-2 common component.
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(1.0, 2.0);
    const fs::path dir = scratch_dir("cli_select");
    const Index n = 30, t = 60;
    const double tau = 0.1;
    MatrixXd y(n, t);
    for (Index i = 0; i < n; ++i) {
        const double b = u(rng) - 1.5, l1 = -u(rng), l2 = -u(rng);
        for (Index s = 0; s < t; ++s) y(i, s) = b + (s < 3 ? tau * l1 : s < 6 ? tau * l2 : u(rng));
    }
    const PanelData panel = PanelData::from_covariates(y, std::vector<MatrixXd>(n, MatrixXd(t, 0)));
    write_panel_csv(dir / "panel.csv", panel);
    ASSERT_EQ(run_cli({"--out", (dir / "out").string(), "select-r", "--panel", (dir / "panel.csv").string(),
                       "--tau", "0.1", "--r-max", "5"}),
              0);
    const auto doc = read_json(dir / "out" / "select_r.json");
    EXPECT_EQ(doc["r_hat"].get<int>(), 2);
    const auto manifest = read_json(dir / "out" / "manifest.json");
    EXPECT_EQ(manifest["command"], "select-r");
    const auto outputs = manifest["outputs"].get<std::vector<std::string>>();
    EXPECT_NE(std::find(outputs.begin(), outputs.end(), "ic.csv"), outputs.end());
    EXPECT_NE(std::find(outputs.begin(), outputs.end(), "select_r.json"), outputs.end());
}

TEST(Cli, EstimateZeroFactorsIsOls) {
    std::mt19937_64 rng(2);
    const fs::path dir = scratch_dir("cli_estimate");
    const PanelData panel = random_panel(rng, 5, 40, 2);
    write_panel_csv(dir / "panel.csv", panel);
    ASSERT_EQ(run_cli({"--out", dir.string(), "estimate", "--panel", (dir / "panel.csv").string(), "--tau",
                       "0.2", "--r", "0", "--no-se"}),
              0);
    const CsvTable coef = read_csv(dir / "coefficients.csv");
    EXPECT_EQ(coef.header, (std::vector<std::string>{"unit", "b0", "b1", "b2"}));
    const QuantileFit q = fit_panel_quantile(panel, TailLevel(0.2));
    for (Index i = 0; i < 5; ++i) {
        VectorXd z(40);
        const VectorXd qi = panel.x(i) * q.A.row(i).transpose();
        for (Index t = 0; t < 40; ++t) z(t) = zstar(panel.y()(i, t), qi(t), 0.2);
        const VectorXd b = ols(panel.x(i), z);
        for (Index j = 0; j < 3; ++j) EXPECT_NEAR(parse_double(coef.rows[i][j + 1], ""), b(j), 1e-10);
    }
    EXPECT_FALSE(fs::exists(dir / "se.csv"));
}

TEST(Cli, EstimateWritesStandardErrors) {
    std::mt19937_64 rng(3);
    const fs::path dir = scratch_dir("cli_estimate_se");
    write_panel_csv(dir / "panel.csv", random_panel(rng, 8, 50, 1));
    ASSERT_EQ(run_cli({"--out", dir.string(), "estimate", "--panel", (dir / "panel.csv").string(), "--r", "1"}), 0);
    const CsvTable se = read_csv(dir / "se.csv");
    EXPECT_EQ(se.header, (std::vector<std::string>{"unit", "se_b0", "se_b1", "t_b0", "t_b1"}));
    EXPECT_EQ(read_csv(dir / "factors.csv").header, (std::vector<std::string>{"time", "f1"}));
    EXPECT_EQ(read_csv(dir / "loadings.csv").rows.size(), 8u);
}

TEST(Cli, ExitCodesAndCleanup) {
    const fs::path dir = scratch_dir("cli_errors");
    EXPECT_EQ(run_cli({"estimate"}), 2);
    EXPECT_EQ(run_cli({"estimate", "--panel", "x.csv", "--tau", "1.2"}), 2);
    EXPECT_EQ(run_cli({"estimate", "--panel", "x.csv", "--r", "1", "--r-max", "3"}), 2);
    EXPECT_EQ(run_cli({"frobnicate"}), 2);
    EXPECT_EQ(run_cli({"--out", dir.string(), "estimate", "--panel", (dir / "absent.csv").string()}), 4);
    EXPECT_EQ(run_cli({"--help"}), 0);

    // The HAC lag is only checked once coefficients, factors and loadings are
    // on disk; the failure must remove them again.
    std::mt19937_64 rng(4);
    write_panel_csv(dir / "panel.csv", random_panel(rng, 6, 30, 1));
    EXPECT_EQ(run_cli({"--out", (dir / "o").string(), "estimate", "--panel", (dir / "panel.csv").string(),
                       "--r", "1", "--hac-lag", "30"}),
              2);
    EXPECT_TRUE(fs::is_empty(dir / "o"));
}

TEST(Cli, ConfigFileWithOverrides) {
    const fs::path dir = scratch_dir("cli_config");
    write_text(dir / "run.toml",
               "seed = 9\n[simulate]\nreplications = 2\nN = 12\nT = 24\noracle-draws = 5000\nscenarios = [1, 4]\n");
    ASSERT_EQ(run_cli({"--config", (dir / "run.toml").string(), "--out", dir.string(), "simulate", "--T", "20"}), 0);
    const auto manifest = read_json(dir / "manifest.json");
    EXPECT_EQ(manifest["seed"].get<int>(), 9);
    EXPECT_EQ(manifest["config"]["T"], nlohmann::json::array({20}));
    EXPECT_EQ(read_csv(dir / "sim_rmse.csv").rows.size(), 2u);

    write_text(dir / "bad.toml", "[simulate]\nunknown_knob = 1\n");
    EXPECT_EQ(run_cli({"--config", (dir / "bad.toml").string(), "--out", dir.string(), "simulate"}), 2);
}

TEST(Cli, SimulateDeterministicAcrossWorkers) {
    const fs::path dir = scratch_dir("cli_determinism");
    const std::vector<std::string> common{"simulate", "--scenarios", "2,6", "--N", "15", "--T", "30",
                                          "--replications", "3", "--oracle-draws", "5000"};
    auto args = [&](const std::string& out, const std::string& workers) {
        std::vector<std::string> a{"--out", (dir / out).string(), "--seed", "5", "--workers", workers};
        a.insert(a.end(), common.begin(), common.end());
        return a;
    };
    ASSERT_EQ(run_cli(args("a", "1")), 0);
    ASSERT_EQ(run_cli(args("b", "3")), 0);
    EXPECT_EQ(read_text(dir / "a" / "sim_report.json"), read_text(dir / "b" / "sim_report.json"));
    EXPECT_EQ(read_text(dir / "a" / "sim_rmse.csv"), read_text(dir / "b" / "sim_rmse.csv"));
}

TEST(Cli, SortFmAndGc) {
    std::mt19937_64 rng(5);
    const fs::path dir = scratch_dir("cli_ap");
    const Index n = 25, t = 80;
    const MatrixXd f = normal_matrix(rng, t, 3, 0.04);
    const MatrixXd load = normal_matrix(rng, n, 3);
    const MatrixXd y = load * f.transpose() + normal_matrix(rng, n, t, 0.02);
    write_panel_csv(dir / "panel.csv", PanelData::from_covariates(y, covariate_blocks(rng, n, t, 1)));
    FactorTable ft;
    ft.names = {"mkt", "smb", "hml"};
    ft.values = f;
    ft.rf = VectorXd::Constant(t, 0.001);
    for (Index s = 0; s < t; ++s) ft.time_labels.push_back(std::to_string(s));
    write_factor_csv(dir / "factors.csv", ft);

    const std::string panel = (dir / "panel.csv").string();
    const std::string factors = (dir / "factors.csv").string();
    ASSERT_EQ(run_cli({"--out", (dir / "s").string(), "sort", "--panel", panel, "--factors", factors, "--window",
                       "36", "--sort-on", "mkt"}),
              0);
    const CsvTable sorts = read_csv(dir / "s" / "sorts.csv");
    EXPECT_EQ(sorts.header,
              (std::vector<std::string>{"portfolio", "avg_annualized", "alpha_CAPM", "t_CAPM", "alpha_FF3", "t_FF3"}));
    EXPECT_EQ(sorts.rows.size(), 6u);
    EXPECT_EQ(sorts.rows.back()[0], "H-L");

    ASSERT_EQ(run_cli({"--out", (dir / "f").string(), "fm", "--panel", panel, "--factors", factors, "--window",
                       "36"}),
              0);
    const CsvTable fm = read_csv(dir / "f" / "fm.csv");
    EXPECT_EQ(fm.header, (std::vector<std::string>{"specification", "term", "value"}));
    EXPECT_EQ(fm.rows[1][1], "premium_mkt");

    ASSERT_EQ(run_cli({"--out", (dir / "g").string(), "gc", "--factors", factors, "--factors-b", factors}), 0);
    const CsvTable gc = read_csv(dir / "g" / "gc.csv");
    ASSERT_EQ(gc.rows.size(), 3u);
    for (const auto& row : gc.rows) EXPECT_NEAR(parse_double(row[1], ""), 1.0, 1e-12);
}
