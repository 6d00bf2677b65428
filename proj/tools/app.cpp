#include "app.hpp"

#include "esfm/asset_pricing.hpp"
#include "esfm/inference.hpp"
#include "esfm/io.hpp"
#include "esfm/selection.hpp"
#include "esfm/simulation.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <iostream>

#ifndef ESFM_VERSION
#define ESFM_VERSION "unknown"
#endif

namespace esfm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Files written by the current run, removed again if it fails.
class OutputSet {
public:
    explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {}

    fs::path claim(const std::string& name) {
        fs::path p = dir_ / name;
        written_.push_back(p);
        return p;
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& p : written_) out.push_back(p.filename().string());
        return out;
    }

    void remove_all() noexcept {
        for (const auto& p : written_) {
            std::error_code ec;
            fs::remove(p, ec);
        }
        written_.clear();
    }

private:
    fs::path dir_;
    std::vector<fs::path> written_;
};

std::vector<std::string> numbered(const std::string& prefix, Index count, Index first = 0) {
    std::vector<std::string> out;
    for (Index j = 0; j < count; ++j) out.push_back(prefix + std::to_string(j + first));
    return out;
}

void add_solver_options(CLI::App* sub, RunConfig& c) {
    sub->add_option("--qr-decay", c.qr.bandwidth_decay, "Stage-1 bandwidth shrink factor");
    sub->add_option("--qr-min-bandwidth", c.qr.min_bandwidth, "Stage-1 final bandwidth");
    sub->add_option("--qr-tol", c.qr.tolerance, "Stage-1 convergence tolerance");
    sub->add_option("--qr-max-iter", c.qr.max_iterations, "Stage-1 iterations per bandwidth level");
    sub->add_option("--max-iter", c.fit.max_iterations, "Stage-2 iteration cap");
    sub->add_option("--tol", c.fit.tolerance, "Stage-2 relative objective tolerance");
}

json config_json(const RunConfig& c) {
    json j{{"command", c.command},
           {"out_dir", c.out_dir.string()},
           {"seed", c.seed},
           {"workers", c.workers},
           {"qr", {{"bandwidth_decay", c.qr.bandwidth_decay},
                   {"min_bandwidth", c.qr.min_bandwidth},
                   {"tolerance", c.qr.tolerance},
                   {"max_iterations", c.qr.max_iterations}}},
           {"fit", {{"max_iterations", c.fit.max_iterations}, {"tolerance", c.fit.tolerance}}}};
    if (c.command == "estimate" || c.command == "select-r" || c.command == "sort" || c.command == "fm") {
        j["panel"] = c.panel.string();
        j["tau"] = c.tau;
        if (c.r) j["r"] = *c.r;
        if (c.r_max) j["r_max"] = *c.r_max;
    }
    if (c.command == "estimate") {
        j["hac_lag"] = c.hac_lag;
        j["standard_errors"] = c.standard_errors;
    }
    if (c.command == "simulate") {
        j["scenarios"] = c.scenarios;
        j["N"] = c.n_values;
        j["T"] = c.t_values;
        j["tau"] = c.tau_values;
        j["replications"] = c.replications;
        j["p"] = c.p;
        j["r0"] = c.r0;
        j["oracle_draws"] = c.oracle_draws;
        if (c.r) j["r"] = *c.r;
        if (c.r_max) j["r_max"] = *c.r_max;
        if (c.tail_loading) j["tail_loading"] = *c.tail_loading;
        if (c.c_sigma) j["c_sigma"] = *c.c_sigma;
    }
    if (c.command == "sort" || c.command == "fm") {
        j["factors"] = c.factors.string();
        j["window"] = c.window;
        j["groups"] = c.groups;
        j["sort_on"] = c.sort_on;
        j["nw_lags"] = c.nw_lags;
    }
    if (c.command == "gc") {
        j["factors"] = c.factors.string();
        j["factors_b"] = c.factors_b.string();
    }
    return j;
}

// ---- commands ----

struct Estimation {
    QuantileFit qfit;
    ESFactorFit fit;
    std::optional<ICSelection> selection;
};

Estimation estimate_panel(const PanelData& panel, const RunConfig& c) {
    const TailLevel tau(c.tau);
    FitOptions fo = c.fit;
    fo.workers = c.workers;
    Estimation e;
    e.qfit = fit_panel_quantile(panel, tau, c.qr, c.workers);
    if (c.r_max) {
        e.selection = select_num_factors(panel, e.qfit, tau, *c.r_max, fo);
        e.fit = e.selection->fits[static_cast<std::size_t>(e.selection->r_hat)];
    } else {
        e.fit = fit_es_factor_model(panel, e.qfit, tau, c.r.value_or(2), fo);
    }
    if (!e.fit.converged) std::cerr << "warning: Stage-2 iterations hit the cap before converging\n";
    if (!e.qfit.all_converged()) std::cerr << "warning: some Stage-1 fits did not converge\n";
    return e;
}

CsvTable ic_table(const ICSelection& sel) {
    CsvTable t;
    t.header = {"r", "V", "IC"};
    for (std::size_t j = 0; j < sel.candidates.size(); ++j) {
        t.rows.push_back({std::to_string(sel.candidates[j]), format_double(sel.V[j]),
                          format_double(sel.IC[j])});
    }
    return t;
}

json run_estimate(const RunConfig& c, OutputSet& out) {
    const PanelData panel = load_panel_csv(c.panel);
    const Estimation e = estimate_panel(panel, c);
    const Index k = panel.num_coefficients();
    const Index r = e.fit.rank();

    write_csv(out.claim("coefficients.csv"),
              matrix_table("unit", panel.unit_labels(), numbered("b", k), e.fit.B));
    write_csv(out.claim("factors.csv"),
              matrix_table("time", panel.time_labels(), numbered("f", r, 1), e.fit.factors.F));
    write_csv(out.claim("loadings.csv"),
              matrix_table("unit", panel.unit_labels(), numbered("l", r, 1), e.fit.factors.Lambda));
    if (e.selection) write_csv(out.claim("ic.csv"), ic_table(*e.selection));

    json summary{{"r", r},
                 {"objective", e.fit.final_objective()},
                 {"iterations", e.fit.iterations},
                 {"converged", e.fit.converged},
                 {"quantile_converged", e.qfit.all_converged()}};
    if (c.standard_errors) {
        const VarianceEstimate ve = estimate_omega(e.fit, panel, c.hac_lag);
        const CoefficientTests tests = standard_errors(ve, e.fit);
        MatrixXd both(panel.num_units(), 2 * k);
        both << tests.se, tests.t_stat;
        auto names = numbered("se_b", k);
        const auto t_names = numbered("t_b", k);
        names.insert(names.end(), t_names.begin(), t_names.end());
        write_csv(out.claim("se.csv"), matrix_table("unit", panel.unit_labels(), names, both));
        summary["hac_lag"] = ve.hac_lag;
        summary["min_singular_value"] = ve.min_singular_value;
        summary["null_dimension"] = ve.null_dimension;
    }
    return summary;
}

json run_select_r(const RunConfig& c, OutputSet& out) {
    const PanelData panel = load_panel_csv(c.panel);
    const TailLevel tau(c.tau);
    FitOptions fo = c.fit;
    fo.workers = c.workers;
    const QuantileFit qfit = fit_panel_quantile(panel, tau, c.qr, c.workers);
    const Index r_max = c.r_max.value_or(std::min<Index>(8, std::min(panel.num_units(), panel.num_periods()) - 1));
    const ICSelection sel = select_num_factors(panel, qfit, tau, r_max, fo);
    write_csv(out.claim("ic.csv"), ic_table(sel));
    json doc{{"r_hat", sel.r_hat}, {"penalty", sel.penalty}, {"r_max", r_max}, {"IC", sel.IC}, {"V", sel.V}};
    write_text(out.claim("select_r.json"), doc.dump(2) + "\n");
    return json{{"r_hat", sel.r_hat}};
}

json run_simulate(const RunConfig& c, OutputSet& out) {
    if (c.replications < 1) throw ValidationError("--replications must be at least 1");
    const RPolicy policy = c.r_max ? RPolicy::ic(*c.r_max) : RPolicy::fixed(c.r.value_or(2));
    MonteCarloOptions mc;
    mc.qr = c.qr;
    mc.fit = c.fit;
    mc.workers = c.workers;
    std::vector<SimulationReport> reports;
    for (const int sc : c.scenarios) {
        for (const Index n : c.n_values) {
            for (const Index t : c.t_values) {
                for (const double tau : c.tau_values) {
                    ScenarioConfig cfg = ScenarioConfig::defaults(sc);
                    cfg.N = n;
                    cfg.T = t;
                    cfg.tau = tau;
                    cfg.p = c.p;
                    cfg.r0 = c.r0;
                    cfg.seed = c.seed;
                    cfg.oracle_draws = c.oracle_draws;
                    if (c.tail_loading) cfg.tail_loading = *c.tail_loading;
                    if (c.c_sigma) cfg.c_sigma = *c.c_sigma;
                    reports.push_back(run_monte_carlo(cfg, c.replications, policy, mc));
                }
            }
        }
    }
    write_csv(out.claim("sim_rmse.csv"), rmse_table(reports));
    write_csv(out.claim("sim_facerr.csv"), factor_error_table(reports));
    write_csv(out.claim("sim_esbias.csv"), es_bias_table(reports));
    write_text(out.claim("sim_report.json"), simulation_reports_to_json(reports));
    Index failed = 0;
    for (const auto& r : reports) failed += r.aggregates.failed;
    return json{{"cells", reports.size()}, {"failed_replications", failed}};
}

std::optional<FactorTable> maybe_factors(const fs::path& path, Index periods) {
    if (path.empty()) return std::nullopt;
    FactorTable f = load_factor_csv(path);
    if (f.values.rows() != periods) {
        throw ValidationError("factor file has " + std::to_string(f.values.rows()) +
                              " rows but the panel has T = " + std::to_string(periods));
    }
    return f;
}

// Model factor series the exposures are estimated on.
VectorXd sort_factor(const RunConfig& c, const PanelData& panel, const std::optional<FactorTable>& obs) {
    const Index r = c.r.value_or(2);
    if (c.sort_on == "esfm" || c.sort_on == "mean") {
        if (r < 1) throw ValidationError("--sort-on " + c.sort_on + " needs r >= 1");
        FitOptions fo = c.fit;
        fo.workers = c.workers;
        const ESFactorFit fit =
            c.sort_on == "esfm"
                ? fit_es_factor_model(panel, fit_panel_quantile(panel, TailLevel(c.tau), c.qr, c.workers),
                                      TailLevel(c.tau), r, fo)
                : fit_mean_factor_model(panel, r, fo);
        return fit.factors.F.col(0);
    }
    if (!obs) throw ValidationError("--sort-on " + c.sort_on + " needs --factors");
    for (std::size_t j = 0; j < obs->names.size(); ++j) {
        if (obs->names[j] == c.sort_on) return obs->values.col(static_cast<Index>(j));
    }
    throw ValidationError("factor column '" + c.sort_on + "' not found");
}

std::vector<Benchmark> benchmark_sets(const FactorTable& f, Index from) {
    std::vector<Benchmark> out;
    const Index rows = f.values.rows() - from;
    const std::pair<const char*, Index> sets[] = {{"CAPM", 1}, {"FF3", 3}, {"FF5", 5}};
    for (const auto& [label, k] : sets) {
        if (f.values.cols() >= k) out.push_back({label, f.values.block(from, 0, rows, k)});
    }
    return out;
}

json run_sort(const RunConfig& c, OutputSet& out) {
    const PanelData panel = load_panel_csv(c.panel);
    const auto obs = maybe_factors(c.factors, panel.num_periods());
    const VectorXd factor = sort_factor(c, panel, obs);
    const MatrixXd& y = panel.y();

    const auto exposures = rolling_exposures(y, factor, c.window);
    const auto dates = static_cast<Index>(exposures.size());
    MatrixXd beta(y.rows(), dates);
    for (Index d = 0; d < dates; ++d) beta.col(d) = exposures[static_cast<std::size_t>(d)].col(0);
    SortSeries series = sort_portfolios(beta, y.rightCols(dates), c.groups);
    if (obs && obs->rf.size() > 0) {
        series.group_returns.colwise() -= obs->rf.tail(dates);
    }
    const std::vector<Benchmark> benchmarks =
        obs ? benchmark_sets(*obs, c.window) : std::vector<Benchmark>{};
    const SortResult result = summarize_sort(series, benchmarks, c.nw_lags);

    CsvTable t;
    t.header = {"portfolio", "avg_annualized"};
    for (const auto& b : benchmarks) {
        t.header.push_back("alpha_" + b.label);
        t.header.push_back("t_" + b.label);
    }
    const Index groups = series.group_returns.cols();
    for (Index g = 0; g <= groups; ++g) {
        const bool hl = g == groups;
        std::vector<std::string> row{hl ? "H-L" : "G" + std::to_string(g + 1),
                                     format_double(result.avg_annualized(g))};
        for (std::size_t b = 0; b < benchmarks.size(); ++b) {
            const AlphaEstimate a =
                hl ? result.alphas[b]
                   : alpha_regression(series.group_returns.col(g), benchmarks[b].factors, c.nw_lags);
            row.push_back(format_double(a.alpha));
            row.push_back(format_double(a.t_stat));
        }
        t.rows.push_back(std::move(row));
    }
    write_csv(out.claim("sorts.csv"), t);
    return json{{"dates", dates}, {"hl_annualized", result.avg_annualized(groups)}};
}

json run_fm(const RunConfig& c, OutputSet& out) {
    const PanelData panel = load_panel_csv(c.panel);
    const auto obs = maybe_factors(c.factors, panel.num_periods());
    const MatrixXd& y = panel.y();

    std::vector<FMResult> results;
    if (obs) results.push_back(fama_macbeth(y, obs->values, "factors"));
    for (const std::string model : {"esfm", "mean"}) {
        RunConfig mc = c;
        mc.sort_on = model;
        const VectorXd mimic = factor_mimicking_series(y, sort_factor(mc, panel, obs), c.window, c.groups);
        results.push_back(fama_macbeth(y.rightCols(mimic.size()), mimic, model));
    }

    CsvTable t;
    t.header = {"specification", "term", "value"};
    for (const auto& r : results) {
        t.rows.push_back({r.label, "intercept", format_double(r.intercept)});
        for (Index j = 0; j < r.premia.size(); ++j) {
            std::string name = "premium_" + std::to_string(j + 1);
            if (r.label == "factors") name = "premium_" + obs->names[static_cast<std::size_t>(j)];
            t.rows.push_back({r.label, name, format_double(r.premia(j))});
        }
        t.rows.push_back({r.label, "adj_r2", format_double(r.adj_r2)});
    }
    write_csv(out.claim("fm.csv"), t);
    return json{{"specifications", results.size()}};
}

json run_gc(const RunConfig& c, OutputSet& out) {
    const FactorTable a = load_factor_csv(c.factors);
    const FactorTable b = load_factor_csv(c.factors_b);
    if (a.values.rows() != b.values.rows()) {
        throw ValidationError("factor files differ in length (" + std::to_string(a.values.rows()) +
                              " vs " + std::to_string(b.values.rows()) + ")");
    }
    const VectorXd gc = generalized_correlations(a.values, b.values);
    CsvTable t;
    t.header = {"index", "gc"};
    for (Index j = 0; j < gc.size(); ++j) t.rows.push_back({std::to_string(j + 1), format_double(gc(j))});
    write_csv(out.claim("gc.csv"), t);
    return json{{"gc", std::vector<double>(gc.data(), gc.data() + gc.size())}};
}

void validate(const RunConfig& c) {
    TailLevel{c.tau};
    for (const double t : c.tau_values) TailLevel{t};
    c.qr.validate();
    c.fit.validate();
    auto need = [&](const fs::path& p, const char* flag) {
        if (p.empty()) throw ValidationError(c.command + " requires " + flag);
    };
    if (c.command == "estimate" || c.command == "select-r" || c.command == "sort" || c.command == "fm") {
        need(c.panel, "--panel");
    }
    if (c.command == "fm" && c.sort_on != "esfm") {
        throw ValidationError("fm builds its own mimicking factors; --sort-on does not apply");
    }
    if (c.command == "gc") {
        need(c.factors, "--factors");
        need(c.factors_b, "--factors-b");
    }
    if (c.r && *c.r < 0) throw ValidationError("--r must be nonnegative");
    if (c.r_max && *c.r_max < 0) throw ValidationError("--r-max must be nonnegative");
    if (c.groups < 2) throw ValidationError("--groups must be at least 2");
    if (c.nw_lags < 0) throw ValidationError("--lags must be nonnegative");
    if (c.workers < 0) throw ValidationError("--workers must be nonnegative");
}

}  // namespace

std::optional<RunConfig> parse_args(int argc, const char* const* argv) {
    RunConfig c;
    CLI::App app{"Expected shortfall factor models: estimation, simulation and asset-pricing tables",
                 "esfm"};
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.set_config("--config", "", "TOML/INI file with option values; flags override it");
    app.set_version_flag("--version", ESFM_VERSION);
    app.require_subcommand(1, 1);
    app.add_option("--out", c.out_dir, "Output directory (created if missing)");
    app.add_option("--seed", c.seed, "Master seed");
    app.add_option("--workers", c.workers, "Worker threads (0 = all cores)")->envname("ESFM_WORKERS");

    auto* est = app.add_subcommand("estimate", "Fit Stages 1 and 2 and write coefficients, factors, loadings, SEs");
    auto* sel = app.add_subcommand("select-r", "Information-criterion table for the number of factors");
    auto* sim = app.add_subcommand("simulate", "Monte Carlo campaign over scenarios x N x T x tau");
    auto* srt = app.add_subcommand("sort", "Rolling-exposure portfolio sorts with alphas");
    auto* fmc = app.add_subcommand("fm", "Two-pass Fama-MacBeth regressions");
    auto* gcc = app.add_subcommand("gc", "Generalized correlations between two factor files");

    for (auto* sub : {est, sel, srt, fmc}) {
        sub->add_option("--panel", c.panel, "Long-format panel CSV unit,time,y,x1..xp");
        sub->add_option("--tau", c.tau, "Tail level in (0, 1)");
        add_solver_options(sub, c);
    }
    for (auto* sub : {est, srt, fmc}) sub->add_option("--r", c.r, "Number of factors");
    est->add_option("--r-max", c.r_max, "Select r by IC over 0..r-max instead of fixing it")->excludes("--r");
    est->add_option("--hac-lag", c.hac_lag, "Bartlett lag for the variance (default floor(4(T/100)^(2/9)))");
    est->add_flag("!--no-se", c.standard_errors, "Skip standard errors");
    sel->add_option("--r-max", c.r_max, "Largest candidate (default min(8, min(N,T)-1))");

    sim->add_option("--scenarios", c.scenarios, "Scenario ids 1..7")->delimiter(',');
    sim->add_option("--N", c.n_values, "Cross-section sizes")->delimiter(',');
    sim->add_option("--T", c.t_values, "Sample lengths")->delimiter(',');
    sim->add_option("--tau", c.tau_values, "Tail levels")->delimiter(',');
    sim->add_option("--replications", c.replications, "Replications per cell");
    auto* sim_r = sim->add_option("--r", c.r, "Fixed factor count for ESFM (default 2)");
    sim->add_option("--r-max", c.r_max, "Select r per replication by IC instead")->excludes(sim_r);
    sim->add_option("--p", c.p, "Covariates per unit");
    sim->add_option("--r0", c.r0, "True number of factors");
    sim->add_option("--tail-loading", c.tail_loading, "Override the factor weight in the location");
    sim->add_option("--c-sigma", c.c_sigma, "Override the factor weight in log sigma");
    sim->add_option("--oracle-draws", c.oracle_draws, "Draws for the innovation-law oracle");
    add_solver_options(sim, c);

    for (auto* sub : {srt, fmc}) {
        sub->add_option("--factors", c.factors, "Observable factor CSV time,f1..fk[,rf]");
        sub->add_option("--window", c.window, "Rolling window length");
        sub->add_option("--groups", c.groups, "Number of portfolios");
    }
    srt->add_option("--lags", c.nw_lags, "Newey-West lags");
    srt->add_option("--sort-on", c.sort_on, "esfm, mean, or a column of --factors");
    gcc->add_option("--factors", c.factors, "First factor CSV");
    gcc->add_option("--factors-b", c.factors_b, "Second factor CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e);
        return std::nullopt;
    } catch (const CLI::CallForAllHelp& e) {
        app.exit(e);
        return std::nullopt;
    } catch (const CLI::CallForVersion& e) {
        app.exit(e);
        return std::nullopt;
    } catch (const CLI::ParseError& e) {
        throw ValidationError(e.what());
    }
    c.command = app.get_subcommands().front()->get_name();
    validate(c);
    return c;
}

void dispatch(const RunConfig& c) {
    const auto start = std::chrono::steady_clock::now();
    std::error_code ec;
    fs::create_directories(c.out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + c.out_dir.string() + ": " + ec.message());

    OutputSet out(c.out_dir);
    try {
        json summary;
        if (c.command == "estimate") {
            summary = run_estimate(c, out);
        } else if (c.command == "select-r") {
            summary = run_select_r(c, out);
        } else if (c.command == "simulate") {
            summary = run_simulate(c, out);
        } else if (c.command == "sort") {
            summary = run_sort(c, out);
        } else if (c.command == "fm") {
            summary = run_fm(c, out);
        } else if (c.command == "gc") {
            summary = run_gc(c, out);
        } else {
            throw ValidationError("unknown command " + c.command);
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const auto outputs = out.names();
        json manifest{{"command", c.command},
                      {"config", config_json(c)},
                      {"seed", c.seed},
                      {"versions", {{"esfm", ESFM_VERSION},
                                    {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                                  std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                                  std::to_string(EIGEN_MINOR_VERSION)},
                                    {"compiler", __VERSION__}}},
                      {"wall_clock_seconds", secs},
                      {"outputs", outputs},
                      {"summary", summary}};
        write_text(out.claim("manifest.json"), manifest.dump(2) + "\n");
    } catch (...) {
        out.remove_all();
        throw;
    }
}

int run(int argc, const char* const* argv) {
    auto fail = [](const char* kind, const std::string& msg, int code) {
        std::cerr << json{{"error", {{"kind", kind}, {"message", msg}}}}.dump() << '\n';
        return code;
    };
    try {
        const auto config = parse_args(argc, argv);
        if (!config) return kExitOk;
        dispatch(*config);
        return kExitOk;
    } catch (const ValidationError& e) {
        return fail("validation", e.what(), kExitValidation);
    } catch (const NumericalError& e) {
        return fail("numerical", e.what(), kExitNumerical);
    } catch (const IoError& e) {
        return fail("io", e.what(), kExitIo);
    } catch (const std::filesystem::filesystem_error& e) {
        return fail("io", e.what(), kExitIo);
    } catch (const std::exception& e) {
        return fail("numerical", e.what(), kExitNumerical);
    }
}

}  // namespace esfm::cli
