#include "esfm/simulation.hpp"

#include "esfm/kernels.hpp"
#include "esfm/parallel.hpp"
#include "esfm/rng.hpp"
#include "esfm/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace esfm {

namespace {

constexpr std::uint64_t kOracleStream = 0x6f7261636c65ULL;
constexpr std::uint64_t kReplicationStream = 1;

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double upper = v[mid];
    if (v.size() % 2 == 1) return upper;
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

// Intercept a with mean_t P(eps <= -(a + kappa zt_t) / sigma_t) = tau.
double recentering_intercept(const InnovationLaw& law, const VectorXd& shift,
                             const VectorXd& sigma, double tau) {
    const Index periods = shift.size();
    auto excess = [&](double a) {
        double acc = 0.0;
        for (Index t = 0; t < periods; ++t) acc += law.cdf(-(a + shift(t)) / sigma(t));
        return acc / static_cast<double>(periods) - tau;
    };
    double lo = -1.0;
    double hi = 1.0;
    while (excess(lo) < 0.0) lo *= 2.0;
    while (excess(hi) > 0.0) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-13 * (1.0 + std::abs(lo)); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (excess(mid) > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace

ScenarioConfig ScenarioConfig::defaults(int scenario_id) {
    ScenarioConfig cfg;
    cfg.scenario_id = scenario_id;
    if (scenario_id == 2 || scenario_id == 5) cfg.c_sigma = 1.0;
    if (scenario_id == 2) cfg.tail_loading = 1.5;
    return cfg;
}

void ScenarioConfig::validate() const {
    auto fail = [](const std::string& what) { throw ValidationError("scenario config: " + what); };
    if (scenario_id < 1 || scenario_id > 7) fail("scenario_id must be in 1..7");
    if (N < 2 || T < 2) fail("N and T must be at least 2");
    if (!(tau > 0.0 && tau < 1.0)) fail("tau must lie in (0, 1)");
    if (p < 0) fail("p must be nonnegative");
    if (r0 < 0 || r0 > std::min(N, T)) fail("r0 must lie in [0, min(N, T)]");
    if (!(t_dof > 2.0)) fail("t_dof must exceed 2");
    if (!(ar_coeff >= 0.0 && ar_coeff < 1.0)) fail("ar_coeff must lie in [0, 1)");
    if (!std::isfinite(c_sigma)) fail("c_sigma must be finite");
    if (!(sigma_lo > 0.0 && sigma_lo < sigma_hi) || !std::isfinite(sigma_hi)) {
        fail("sigma bounds must satisfy 0 < lo < hi");
    }
    if (!std::isfinite(tail_loading)) fail("tail_loading must be finite");
    if (group_count < 1) fail("group_count must be positive");
    if (!std::isfinite(group_shift)) fail("group_shift must be finite");
    if (!(endog_weight >= 0.0 && endog_weight <= 1.0)) fail("endog_weight must lie in [0, 1]");
    if (scenario_id == 4 && p < 1) fail("scenario 4 needs at least one covariate");
    if (!(jump_prob >= 0.0 && jump_prob <= 1.0)) fail("jump_prob must lie in [0, 1]");
    if (!(jump_scale >= 0.0) || !std::isfinite(jump_scale)) fail("jump_scale must be nonnegative");
    if (!(asym_prob >= 0.0 && asym_prob <= 1.0)) fail("asym_prob must lie in [0, 1]");
    if (!(asym_rate > 0.0) || !std::isfinite(asym_rate)) fail("asym_rate must be positive");
    if (oracle_draws < 1000) fail("oracle_draws must be at least 1000");
}

double draw_raw_innovation(const ScenarioConfig& cfg, std::mt19937_64& rng) {
    std::student_t_distribution<double> student(cfg.t_dof);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double e = student(rng) * std::sqrt((cfg.t_dof - 2.0) / cfg.t_dof);
    if (cfg.scenario_id == 6 && unif(rng) < cfg.jump_prob) {
        std::normal_distribution<double> jump(0.0, cfg.jump_scale);
        e -= std::abs(jump(rng));
    }
    if (cfg.scenario_id == 7 && unif(rng) < cfg.asym_prob) {
        std::exponential_distribution<double> tail(cfg.asym_rate);
        e -= tail(rng);
    }
    return e;
}

InnovationLaw InnovationLaw::simulate(const ScenarioConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    const auto m = static_cast<std::size_t>(cfg.oracle_draws);
    InnovationLaw law;
    law.sorted_.resize(m);
    for (auto& e : law.sorted_) e = draw_raw_innovation(cfg, rng);
    std::sort(law.sorted_.begin(), law.sorted_.end());

    auto k = static_cast<std::size_t>(std::ceil(cfg.tau * static_cast<double>(m)));
    k = std::clamp<std::size_t>(k, 1, m);
    law.shift_ = law.sorted_[k - 1];
    law.prefix_.assign(m + 1, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
        law.sorted_[j] -= law.shift_;
        law.prefix_[j + 1] = law.prefix_[j] + law.sorted_[j];
    }
    law.es_constant_ = law.partial_mean(0.0) / cfg.tau;
    return law;
}

double InnovationLaw::cdf(double x) const {
    const auto k = std::upper_bound(sorted_.begin(), sorted_.end(), x) - sorted_.begin();
    return static_cast<double>(k) / static_cast<double>(sorted_.size());
}

double InnovationLaw::partial_mean(double x) const {
    const auto k = std::upper_bound(sorted_.begin(), sorted_.end(), x) - sorted_.begin();
    return prefix_[static_cast<std::size_t>(k)] / static_cast<double>(sorted_.size());
}

std::uint64_t oracle_seed(const ScenarioConfig& cfg) {
    return derive_seed(cfg.seed, kOracleStream, 0);
}

std::uint64_t replication_seed(const ScenarioConfig& cfg, Index k) {
    return derive_seed(cfg.seed, kReplicationStream, static_cast<std::uint64_t>(k));
}

Scenario generate_scenario(const ScenarioConfig& cfg, const InnovationLaw& law,
                           std::uint64_t seed) {
    cfg.validate();
    if (law.size() == 0) throw ValidationError("innovation law is empty");
    const Index n = cfg.N;
    const Index periods = cfg.T;
    const Index p = cfg.p;
    const Index r0 = cfg.r0;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> slope(1.0, 2.0);

    PanelTruth truth;
    truth.alpha0 = MatrixXd::Zero(n, p + 1);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 1; j <= p; ++j) truth.alpha0(i, j) = slope(rng);
    }
    if (cfg.scenario_id == 3) {
        std::uniform_int_distribution<Index> group(0, cfg.group_count - 1);
        const double centre = 0.5 * static_cast<double>(cfg.group_count - 1);
        for (Index i = 0; i < n; ++i) {
            const double offset = (static_cast<double>(group(rng)) - centre) * cfg.group_shift;
            truth.alpha0.row(i).tail(p).array() += offset;
        }
    }
    truth.beta0_slopes = truth.alpha0.rightCols(p);

    truth.Lambda0.resize(n, r0);
    for (Index i = 0; i < n; ++i) {
        for (Index k = 0; k < r0; ++k) truth.Lambda0(i, k) = normal(rng);
    }
    truth.F0.resize(periods, r0);
    const double phi = cfg.ar_coeff;
    for (Index k = 0; k < r0; ++k) {
        truth.F0(0, k) = normal(rng) / std::sqrt(1.0 - phi * phi);
        for (Index t = 1; t < periods; ++t) truth.F0(t, k) = phi * truth.F0(t - 1, k) + normal(rng);
    }

    const MatrixXd raw_index = truth.Lambda0 * truth.F0.transpose();  // N x T
    MatrixXd index = MatrixXd::Zero(n, periods);                     // standardized
    if (r0 > 0) {
        const double mean = raw_index.mean();
        const double sd = std::sqrt((raw_index.array() - mean).square().mean());
        if (sd > 0.0) index = raw_index / sd;
    }

    std::vector<MatrixXd> covariates(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        MatrixXd c(periods, p);
        for (Index t = 0; t < periods; ++t) {
            for (Index j = 0; j < p; ++j) c(t, j) = normal(rng);
        }
        if (cfg.scenario_id == 4) {
            const double w = cfg.endog_weight;
            c.col(0) = w * index.row(i).transpose() + std::sqrt(1.0 - w * w) * c.col(0);
        }
        covariates[static_cast<std::size_t>(i)] = std::move(c);
    }

    truth.sigma = (cfg.c_sigma * index.array()).exp().max(cfg.sigma_lo).min(cfg.sigma_hi).matrix();

    truth.location = MatrixXd::Zero(n, periods);
    if (cfg.tail_loading != 0.0) {
        for (Index i = 0; i < n; ++i) {
            const VectorXd shift = cfg.tail_loading * raw_index.row(i).transpose();
            const VectorXd sigma = truth.sigma.row(i).transpose();
            const double a = recentering_intercept(law, shift, sigma, cfg.tau);
            truth.location.row(i) = (shift.array() + a).matrix().transpose();
        }
    }

    MatrixXd y(n, periods);
    for (Index i = 0; i < n; ++i) {
        const VectorXd mu = covariates[static_cast<std::size_t>(i)] * truth.beta0_slopes.row(i).transpose();
        for (Index t = 0; t < periods; ++t) {
            const double eps = draw_raw_innovation(cfg, rng) - law.shift();
            y(i, t) = mu(t) + truth.location(i, t) + truth.sigma(i, t) * eps;
        }
    }

    Scenario out{PanelData::from_covariates(std::move(y), covariates), std::move(truth)};
    out.truth.es_true = true_es_oracle(cfg, out.truth, out.panel.x_blocks(), law);
    return out;
}

Scenario generate_scenario(const ScenarioConfig& cfg) {
    const InnovationLaw law = InnovationLaw::simulate(cfg, oracle_seed(cfg));
    return generate_scenario(cfg, law, replication_seed(cfg, 0));
}

MatrixXd true_es_oracle(const ScenarioConfig& cfg, const PanelTruth& truth,
                        const std::vector<MatrixXd>& x_blocks, const InnovationLaw& law) {
    const Index n = truth.sigma.rows();
    const Index periods = truth.sigma.cols();
    const double inv_tau = 1.0 / cfg.tau;
    MatrixXd es(n, periods);
    for (Index i = 0; i < n; ++i) {
        const VectorXd q = x_blocks.at(static_cast<std::size_t>(i)) * truth.alpha0.row(i).transpose();
        for (Index t = 0; t < periods; ++t) {
            const double m = truth.location.size() == 0 ? 0.0 : truth.location(i, t);
            const double s = truth.sigma(i, t);
            double tail = s * law.es_constant();
            if (m != 0.0) {
                const double cut = -m / s;
                tail = inv_tau * (m * law.cdf(cut) + s * law.partial_mean(cut));
            }
            es(i, t) = q(t) + tail;
        }
    }
    return es;
}

ReplicationRecord evaluate_fit(const ESFactorFit& esfm, const ESFactorFit& esr,
                               const PanelTruth& truth, const PanelData& panel) {
    ReplicationRecord rec;
    rec.ok = esfm.converged && esr.converged;
    if (!rec.ok) rec.failure = "fit did not converge";
    rec.r_used = esfm.rank();
    const Index p = truth.beta0_slopes.cols();

    auto slope_errors = [&](const ESFactorFit& fit, double& rmse, double& med) {
        const MatrixXd err = fit.B.rightCols(p) - truth.beta0_slopes;
        rmse = err.size() == 0 ? 0.0 : std::sqrt(err.squaredNorm() / static_cast<double>(err.size()));
        std::vector<double> abs_err(static_cast<std::size_t>(err.size()));
        for (Index j = 0; j < err.size(); ++j) abs_err[static_cast<std::size_t>(j)] = std::abs(err(j));
        med = median(std::move(abs_err));
    };
    slope_errors(esr, rec.rmse_beta_esr, rec.median_abs_slope_error_esr);
    slope_errors(esfm, rec.rmse_beta_esfm, rec.median_abs_slope_error_esfm);

    rec.factor_space_error = projection_distance(esfm.factors.F, truth.F0);

    auto bias = [&](const ESFactorFit& fit, double& signed_bias, double& abs_bias) {
        const MatrixXd diff = predict_es(fit, panel) - truth.es_true;
        signed_bias = diff.mean();
        abs_bias = diff.cwiseAbs().mean();
    };
    bias(esr, rec.es_bias_signed_esr, rec.es_bias_abs_esr);
    bias(esfm, rec.es_bias_signed_esfm, rec.es_bias_abs_esfm);
    return rec;
}

ReplicationRecord run_replication(const ScenarioConfig& cfg, const InnovationLaw& law, Index k,
                                  RPolicy policy, const MonteCarloOptions& opts) {
    const std::uint64_t seed = replication_seed(cfg, k);
    FitOptions fit_opts = opts.fit;
    fit_opts.workers = 1;
    ReplicationRecord rec;
    try {
        const Scenario sc = generate_scenario(cfg, law, seed);
        const QuantileFit qfit = fit_panel_quantile(sc.panel, TailLevel(cfg.tau), opts.qr, 1);
        const MatrixXd zstar = pseudo_response_matrix(sc.panel, qfit.A, TailLevel(cfg.tau));
        const ESFactorFit esr = fit_factor_regression(sc.panel, zstar, 0, fit_opts);
        if (policy.kind == RPolicy::Kind::Fixed) {
            const ESFactorFit esfm = fit_factor_regression(sc.panel, zstar, policy.r, fit_opts);
            rec = evaluate_fit(esfm, esr, sc.truth, sc.panel);
        } else {
            ICSelection sel = select_num_factors_for(sc.panel, zstar, policy.r_max, fit_opts);
            rec = evaluate_fit(sel.fits[static_cast<std::size_t>(sel.r_hat)], esr, sc.truth, sc.panel);
        }
    } catch (const std::exception& e) {
        rec = ReplicationRecord{};
        rec.ok = false;
        rec.failure = e.what();
    }
    rec.replication = k;
    rec.seed = seed;
    return rec;
}

SimulationAggregates aggregate(const std::vector<ReplicationRecord>& records) {
    SimulationAggregates agg;
    std::vector<double> med_esr;
    std::vector<double> med_esfm;
    double r_sum = 0.0;
    for (const auto& rec : records) {
        if (!rec.ok) {
            ++agg.failed;
            continue;
        }
        ++agg.completed;
        agg.rmse_beta_esr += rec.rmse_beta_esr * rec.rmse_beta_esr;
        agg.rmse_beta_esfm += rec.rmse_beta_esfm * rec.rmse_beta_esfm;
        med_esr.push_back(rec.median_abs_slope_error_esr);
        med_esfm.push_back(rec.median_abs_slope_error_esfm);
        agg.factor_space_error += rec.factor_space_error;
        agg.es_bias_signed_esr += rec.es_bias_signed_esr;
        agg.es_bias_signed_esfm += rec.es_bias_signed_esfm;
        agg.es_bias_abs_esr += rec.es_bias_abs_esr;
        agg.es_bias_abs_esfm += rec.es_bias_abs_esfm;
        r_sum += static_cast<double>(rec.r_used);
    }
    if (agg.completed == 0) return agg;
    const double m = static_cast<double>(agg.completed);
    agg.rmse_beta_esr = std::sqrt(agg.rmse_beta_esr / m);
    agg.rmse_beta_esfm = std::sqrt(agg.rmse_beta_esfm / m);
    agg.median_abs_slope_error_esr = median(std::move(med_esr));
    agg.median_abs_slope_error_esfm = median(std::move(med_esfm));
    agg.factor_space_error /= m;
    agg.es_bias_signed_esr /= m;
    agg.es_bias_signed_esfm /= m;
    agg.es_bias_abs_esr /= m;
    agg.es_bias_abs_esfm /= m;
    agg.r_hat_mean = r_sum / m;
    return agg;
}

SimulationReport run_monte_carlo(const ScenarioConfig& cfg, Index replications, RPolicy policy,
                                 const MonteCarloOptions& opts) {
    cfg.validate();
    if (replications < 1) throw ValidationError("replications must be at least 1");
    if (policy.kind == RPolicy::Kind::Fixed && (policy.r < 0 || policy.r > std::min(cfg.N, cfg.T))) {
        throw ValidationError("fixed r must lie in [0, min(N, T)]");
    }
    if (policy.kind == RPolicy::Kind::IC &&
        (policy.r_max < 0 || policy.r_max > std::min(cfg.N, cfg.T) - 1)) {
        throw ValidationError("r_max must lie in [0, min(N, T) - 1]");
    }
    opts.qr.validate();
    opts.fit.validate();

    const InnovationLaw law = InnovationLaw::simulate(cfg, oracle_seed(cfg));
    SimulationReport report;
    report.config = cfg;
    report.policy = policy;
    report.replications = replications;
    report.records.resize(static_cast<std::size_t>(replications));
    parallel_for(static_cast<std::size_t>(replications), opts.workers, [&](std::size_t k) {
        report.records[k] = run_replication(cfg, law, static_cast<Index>(k), policy, opts);
    });
    report.aggregates = aggregate(report.records);
    return report;
}

}  // namespace esfm
