#include "esfm/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace esfm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split_record(const std::string& line, std::size_t line_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    bool was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
            was_quoted = true;
        } else if (c == ',') {
            fields.push_back(was_quoted ? cur : trim(cur));
            cur.clear();
            was_quoted = false;
        } else {
            cur.push_back(c);
        }
    }
    if (quoted) throw ValidationError("line " + std::to_string(line_no) + ": unterminated quote");
    fields.push_back(was_quoted ? cur : trim(cur));
    return fields;
}

std::string quote_if_needed(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (const char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

bool try_parse(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    if (*begin == '+') ++begin;
    const auto res = std::from_chars(begin, end, out);
    return res.ec == std::errc() && res.ptr == end;
}

// Numeric order when every label is a number, lexicographic otherwise.
std::vector<std::string> canonical_order(std::vector<std::string> labels) {
    std::vector<double> values(labels.size());
    bool numeric = true;
    for (std::size_t i = 0; i < labels.size() && numeric; ++i) {
        numeric = try_parse(labels[i], values[i]) && std::isfinite(values[i]);
    }
    if (!numeric) {
        std::sort(labels.begin(), labels.end());
        return labels;
    }
    std::vector<std::size_t> idx(labels.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (values[a] != values[b]) return values[a] < values[b];
        return labels[a] < labels[b];
    });
    std::vector<std::string> out;
    out.reserve(labels.size());
    for (const auto i : idx) out.push_back(labels[i]);
    return out;
}

std::string cell_location(std::size_t line, std::size_t column, const std::string& name) {
    return "line " + std::to_string(line) + ", column " + std::to_string(column) + " (" + name + ")";
}

std::vector<std::string> index_labels(Index n) {
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) out.push_back(std::to_string(i));
    return out;
}

// ---- JSON ----

json config_to_json(const ScenarioConfig& c) {
    return json{{"scenario_id", c.scenario_id}, {"N", c.N},
                {"T", c.T},
                {"tau", c.tau},
                {"p", c.p},
                {"r0", c.r0},
                {"t_dof", c.t_dof},
                {"ar_coeff", c.ar_coeff},
                {"c_sigma", c.c_sigma},
                {"sigma_lo", c.sigma_lo},
                {"sigma_hi", c.sigma_hi},
                {"tail_loading", c.tail_loading},
                {"group_count", c.group_count},
                {"group_shift", c.group_shift},
                {"endog_weight", c.endog_weight},
                {"jump_prob", c.jump_prob},
                {"jump_scale", c.jump_scale},
                {"asym_prob", c.asym_prob},
                {"asym_rate", c.asym_rate},
                {"seed", c.seed},
                {"oracle_draws", c.oracle_draws}};
}

ScenarioConfig config_from_json(const json& j) {
    ScenarioConfig c;
    j.at("scenario_id").get_to(c.scenario_id);
    j.at("N").get_to(c.N);
    j.at("T").get_to(c.T);
    j.at("tau").get_to(c.tau);
    j.at("p").get_to(c.p);
    j.at("r0").get_to(c.r0);
    j.at("t_dof").get_to(c.t_dof);
    j.at("ar_coeff").get_to(c.ar_coeff);
    j.at("c_sigma").get_to(c.c_sigma);
    j.at("sigma_lo").get_to(c.sigma_lo);
    j.at("sigma_hi").get_to(c.sigma_hi);
    j.at("tail_loading").get_to(c.tail_loading);
    j.at("group_count").get_to(c.group_count);
    j.at("group_shift").get_to(c.group_shift);
    j.at("endog_weight").get_to(c.endog_weight);
    j.at("jump_prob").get_to(c.jump_prob);
    j.at("jump_scale").get_to(c.jump_scale);
    j.at("asym_prob").get_to(c.asym_prob);
    j.at("asym_rate").get_to(c.asym_rate);
    j.at("seed").get_to(c.seed);
    j.at("oracle_draws").get_to(c.oracle_draws);
    return c;
}

json record_to_json(const ReplicationRecord& r) {
    return json{{"replication", r.replication},
                {"seed", r.seed},
                {"ok", r.ok},
                {"failure", r.failure},
                {"r_used", r.r_used},
                {"rmse_beta_esr", r.rmse_beta_esr},
                {"rmse_beta_esfm", r.rmse_beta_esfm},
                {"median_abs_slope_error_esr", r.median_abs_slope_error_esr},
                {"median_abs_slope_error_esfm", r.median_abs_slope_error_esfm},
                {"factor_space_error", r.factor_space_error},
                {"es_bias_signed_esr", r.es_bias_signed_esr},
                {"es_bias_signed_esfm", r.es_bias_signed_esfm},
                {"es_bias_abs_esr", r.es_bias_abs_esr},
                {"es_bias_abs_esfm", r.es_bias_abs_esfm}};
}

ReplicationRecord record_from_json(const json& j) {
    ReplicationRecord r;
    j.at("replication").get_to(r.replication);
    j.at("seed").get_to(r.seed);
    j.at("ok").get_to(r.ok);
    j.at("failure").get_to(r.failure);
    j.at("r_used").get_to(r.r_used);
    j.at("rmse_beta_esr").get_to(r.rmse_beta_esr);
    j.at("rmse_beta_esfm").get_to(r.rmse_beta_esfm);
    j.at("median_abs_slope_error_esr").get_to(r.median_abs_slope_error_esr);
    j.at("median_abs_slope_error_esfm").get_to(r.median_abs_slope_error_esfm);
    j.at("factor_space_error").get_to(r.factor_space_error);
    j.at("es_bias_signed_esr").get_to(r.es_bias_signed_esr);
    j.at("es_bias_signed_esfm").get_to(r.es_bias_signed_esfm);
    j.at("es_bias_abs_esr").get_to(r.es_bias_abs_esr);
    j.at("es_bias_abs_esfm").get_to(r.es_bias_abs_esfm);
    return r;
}

json aggregates_to_json(const SimulationAggregates& a) {
    return json{{"completed", a.completed},
                {"failed", a.failed},
                {"rmse_beta_esr", a.rmse_beta_esr},
                {"rmse_beta_esfm", a.rmse_beta_esfm},
                {"median_abs_slope_error_esr", a.median_abs_slope_error_esr},
                {"median_abs_slope_error_esfm", a.median_abs_slope_error_esfm},
                {"factor_space_error", a.factor_space_error},
                {"es_bias_signed_esr", a.es_bias_signed_esr},
                {"es_bias_signed_esfm", a.es_bias_signed_esfm},
                {"es_bias_abs_esr", a.es_bias_abs_esr},
                {"es_bias_abs_esfm", a.es_bias_abs_esfm},
                {"r_hat_mean", a.r_hat_mean}};
}

SimulationAggregates aggregates_from_json(const json& j) {
    SimulationAggregates a;
    j.at("completed").get_to(a.completed);
    j.at("failed").get_to(a.failed);
    j.at("rmse_beta_esr").get_to(a.rmse_beta_esr);
    j.at("rmse_beta_esfm").get_to(a.rmse_beta_esfm);
    j.at("median_abs_slope_error_esr").get_to(a.median_abs_slope_error_esr);
    j.at("median_abs_slope_error_esfm").get_to(a.median_abs_slope_error_esfm);
    j.at("factor_space_error").get_to(a.factor_space_error);
    j.at("es_bias_signed_esr").get_to(a.es_bias_signed_esr);
    j.at("es_bias_signed_esfm").get_to(a.es_bias_signed_esfm);
    j.at("es_bias_abs_esr").get_to(a.es_bias_abs_esr);
    j.at("es_bias_abs_esfm").get_to(a.es_bias_abs_esfm);
    j.at("r_hat_mean").get_to(a.r_hat_mean);
    return a;
}

std::vector<std::string> cell_key(const SimulationReport& r) {
    const auto& c = r.config;
    return {std::to_string(c.scenario_id), std::to_string(c.N), std::to_string(c.T),
            format_double(c.tau)};
}

}  // namespace

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

double parse_double(const std::string& field, const std::string& where) {
    double v = 0.0;
    if (!try_parse(field, v)) {
        throw ValidationError(where + ": not a number: '" + field + "'");
    }
    return v;
}

CsvTable read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    CsvTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = split_record(line, line_no);
        if (table.header.empty()) {
            table.header = std::move(fields);
            continue;
        }
        if (fields.size() != table.header.size()) {
            throw ValidationError("line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(table.header.size()) + " fields, found " +
                                  std::to_string(fields.size()));
        }
        table.rows.push_back(std::move(fields));
        table.lines.push_back(line_no);
    }
    if (in.bad()) throw IoError("read error on " + path.string());
    if (table.header.empty()) throw ValidationError(path.string() + ": missing header");
    return table;
}

void write_csv(const fs::path& path, const CsvTable& table) {
    std::ostringstream out;
    auto emit = [&](const std::vector<std::string>& fields) {
        for (std::size_t j = 0; j < fields.size(); ++j) {
            if (j) out << ',';
            out << quote_if_needed(fields[j]);
        }
        out << '\n';
    };
    emit(table.header);
    for (const auto& row : table.rows) emit(row);
    write_text(path, out.str());
}

PanelData load_panel_csv(const fs::path& path) {
    const CsvTable table = read_csv(path);
    const auto& h = table.header;
    if (h.size() < 3 || lower(h[0]) != "unit" || lower(h[1]) != "time" || lower(h[2]) != "y") {
        throw ValidationError(path.string() + ": header must start with unit,time,y");
    }
    const std::size_t p = h.size() - 3;

    std::map<std::pair<std::string, std::string>, std::size_t> cells;
    std::map<std::string, int> units_seen;
    std::map<std::string, int> times_seen;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::size_t line = table.lines[r];
        if (row[0].empty()) throw ValidationError(cell_location(line, 1, "unit") + ": empty label");
        if (row[1].empty()) throw ValidationError(cell_location(line, 2, "time") + ": empty label");
        auto [it, inserted] = cells.emplace(std::make_pair(row[0], row[1]), r);
        if (!inserted) {
            throw ValidationError("duplicate cell (unit=" + row[0] + ", time=" + row[1] +
                                  ") on lines " + std::to_string(table.lines[it->second]) + " and " +
                                  std::to_string(line));
        }
        units_seen[row[0]] = 1;
        times_seen[row[1]] = 1;
    }
    std::vector<std::string> units;
    std::vector<std::string> times;
    for (const auto& kv : units_seen) units.push_back(kv.first);
    for (const auto& kv : times_seen) times.push_back(kv.first);
    units = canonical_order(std::move(units));
    times = canonical_order(std::move(times));
    if (units.empty()) throw ValidationError(path.string() + ": no data rows");

    const auto n = static_cast<Index>(units.size());
    const auto periods = static_cast<Index>(times.size());
    MatrixXd y(n, periods);
    std::vector<MatrixXd> cov(units.size(), MatrixXd(periods, static_cast<Index>(p)));
    for (Index i = 0; i < n; ++i) {
        for (Index t = 0; t < periods; ++t) {
            const auto& u = units[static_cast<std::size_t>(i)];
            const auto& tm = times[static_cast<std::size_t>(t)];
            const auto it = cells.find({u, tm});
            if (it == cells.end()) {
                throw ValidationError("unbalanced panel: missing cell (unit=" + u + ", time=" + tm + ")");
            }
            const auto& row = table.rows[it->second];
            const std::size_t line = table.lines[it->second];
            for (std::size_t c = 2; c < h.size(); ++c) {
                const double v = parse_double(row[c], cell_location(line, c + 1, h[c]));
                if (!std::isfinite(v)) {
                    throw ValidationError(cell_location(line, c + 1, h[c]) + ": non-finite value");
                }
                if (c == 2) {
                    y(i, t) = v;
                } else {
                    cov[static_cast<std::size_t>(i)](t, static_cast<Index>(c - 3)) = v;
                }
            }
        }
    }
    return PanelData::from_covariates(std::move(y), cov, std::move(units), std::move(times));
}

void write_panel_csv(const fs::path& path, const PanelData& panel) {
    const Index n = panel.num_units();
    const Index periods = panel.num_periods();
    const Index p = panel.num_covariates();
    const auto units = panel.unit_labels().empty() ? index_labels(n) : panel.unit_labels();
    const auto times = panel.time_labels().empty() ? index_labels(periods) : panel.time_labels();
    CsvTable table;
    table.header = {"unit", "time", "y"};
    for (Index j = 1; j <= p; ++j) table.header.push_back("x" + std::to_string(j));
    table.rows.reserve(static_cast<std::size_t>(n * periods));
    for (Index i = 0; i < n; ++i) {
        for (Index t = 0; t < periods; ++t) {
            std::vector<std::string> row{units[static_cast<std::size_t>(i)],
                                         times[static_cast<std::size_t>(t)],
                                         format_double(panel.y()(i, t))};
            for (Index j = 1; j <= p; ++j) row.push_back(format_double(panel.x(i)(t, j)));
            table.rows.push_back(std::move(row));
        }
    }
    write_csv(path, table);
}

FactorTable load_factor_csv(const fs::path& path) {
    const CsvTable table = read_csv(path);
    const auto& h = table.header;
    if (h.size() < 2 || lower(h[0]) != "time") {
        throw ValidationError(path.string() + ": header must be time,f1..fk[,rf]");
    }
    const bool has_rf = lower(h.back()) == "rf";
    const std::size_t k = h.size() - 1 - (has_rf ? 1 : 0);
    if (table.rows.empty()) throw ValidationError(path.string() + ": no data rows");

    FactorTable out;
    out.names.assign(h.begin() + 1, h.begin() + 1 + static_cast<std::ptrdiff_t>(k));
    const auto periods = static_cast<Index>(table.rows.size());
    out.values.resize(periods, static_cast<Index>(k));
    if (has_rf) out.rf.resize(periods);
    std::map<std::string, std::size_t> seen;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::size_t line = table.lines[r];
        if (!seen.emplace(row[0], line).second) {
            throw ValidationError("duplicate time label '" + row[0] + "' on lines " +
                                  std::to_string(seen[row[0]]) + " and " + std::to_string(line));
        }
        out.time_labels.push_back(row[0]);
        for (std::size_t c = 1; c < h.size(); ++c) {
            const double v = parse_double(row[c], cell_location(line, c + 1, h[c]));
            if (!std::isfinite(v)) {
                throw ValidationError(cell_location(line, c + 1, h[c]) + ": non-finite value");
            }
            if (c <= k) {
                out.values(static_cast<Index>(r), static_cast<Index>(c - 1)) = v;
            } else {
                out.rf(static_cast<Index>(r)) = v;
            }
        }
    }
    return out;
}

void write_factor_csv(const fs::path& path, const FactorTable& table) {
    const Index periods = table.values.rows();
    const auto times = table.time_labels.empty() ? index_labels(periods) : table.time_labels;
    CsvTable out;
    out.header = {"time"};
    for (Index j = 0; j < table.values.cols(); ++j) {
        out.header.push_back(static_cast<std::size_t>(j) < table.names.size()
                                 ? table.names[static_cast<std::size_t>(j)]
                                 : "f" + std::to_string(j + 1));
    }
    const bool has_rf = table.rf.size() == periods && periods > 0;
    if (has_rf) out.header.push_back("rf");
    for (Index t = 0; t < periods; ++t) {
        std::vector<std::string> row{times[static_cast<std::size_t>(t)]};
        for (Index j = 0; j < table.values.cols(); ++j) row.push_back(format_double(table.values(t, j)));
        if (has_rf) row.push_back(format_double(table.rf(t)));
        out.rows.push_back(std::move(row));
    }
    write_csv(path, out);
}

CsvTable matrix_table(const std::string& label_name, const std::vector<std::string>& row_labels,
                      const std::vector<std::string>& column_names, const MatrixXd& m) {
    if (static_cast<Index>(column_names.size()) != m.cols()) {
        throw ValidationError("matrix_table: column name count does not match");
    }
    const auto labels = row_labels.empty() ? index_labels(m.rows()) : row_labels;
    if (static_cast<Index>(labels.size()) != m.rows()) {
        throw ValidationError("matrix_table: row label count does not match");
    }
    CsvTable t;
    t.header.push_back(label_name);
    t.header.insert(t.header.end(), column_names.begin(), column_names.end());
    for (Index i = 0; i < m.rows(); ++i) {
        std::vector<std::string> row{labels[static_cast<std::size_t>(i)]};
        for (Index j = 0; j < m.cols(); ++j) row.push_back(format_double(m(i, j)));
        t.rows.push_back(std::move(row));
    }
    return t;
}

std::string simulation_reports_to_json(const std::vector<SimulationReport>& reports) {
    json cells = json::array();
    for (const auto& r : reports) {
        json records = json::array();
        for (const auto& rec : r.records) records.push_back(record_to_json(rec));
        cells.push_back(json{
            {"config", config_to_json(r.config)},
            {"policy", {{"kind", r.policy.kind == RPolicy::Kind::Fixed ? "fixed" : "ic"},
                        {"r", r.policy.r},
                        {"r_max", r.policy.r_max}}},
            {"replications", r.replications},
            {"aggregates", aggregates_to_json(r.aggregates)},
            {"records", std::move(records)}});
    }
    return json{{"cells", std::move(cells)}}.dump(2) + "\n";
}

std::vector<SimulationReport> simulation_reports_from_json(const std::string& text) {
    std::vector<SimulationReport> out;
    try {
        const json doc = json::parse(text);
        for (const auto& c : doc.at("cells")) {
            SimulationReport r;
            r.config = config_from_json(c.at("config"));
            const auto& pol = c.at("policy");
            const std::string kind = pol.at("kind").get<std::string>();
            if (kind != "fixed" && kind != "ic") throw ValidationError("unknown policy kind " + kind);
            r.policy.kind = kind == "fixed" ? RPolicy::Kind::Fixed : RPolicy::Kind::IC;
            pol.at("r").get_to(r.policy.r);
            pol.at("r_max").get_to(r.policy.r_max);
            c.at("replications").get_to(r.replications);
            r.aggregates = aggregates_from_json(c.at("aggregates"));
            for (const auto& rec : c.at("records")) r.records.push_back(record_from_json(rec));
            out.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed simulation report: ") + e.what());
    }
    return out;
}

CsvTable rmse_table(const std::vector<SimulationReport>& reports) {
    CsvTable t;
    t.header = {"scenario", "N", "T", "tau", "rmse_esr", "rmse_esfm", "completed", "failed"};
    for (const auto& r : reports) {
        auto row = cell_key(r);
        row.push_back(format_double(r.aggregates.rmse_beta_esr));
        row.push_back(format_double(r.aggregates.rmse_beta_esfm));
        row.push_back(std::to_string(r.aggregates.completed));
        row.push_back(std::to_string(r.aggregates.failed));
        t.rows.push_back(std::move(row));
    }
    return t;
}

CsvTable factor_error_table(const std::vector<SimulationReport>& reports) {
    CsvTable t;
    t.header = {"scenario", "N", "T", "tau", "factor_space_error", "r_hat_mean"};
    for (const auto& r : reports) {
        auto row = cell_key(r);
        row.push_back(format_double(r.aggregates.factor_space_error));
        row.push_back(format_double(r.aggregates.r_hat_mean));
        t.rows.push_back(std::move(row));
    }
    return t;
}

CsvTable es_bias_table(const std::vector<SimulationReport>& reports) {
    CsvTable t;
    t.header = {"scenario",        "N",          "T",           "tau", "bias_signed_esr",
                "bias_signed_esfm", "bias_abs_esr", "bias_abs_esfm"};
    for (const auto& r : reports) {
        auto row = cell_key(r);
        row.push_back(format_double(r.aggregates.es_bias_signed_esr));
        row.push_back(format_double(r.aggregates.es_bias_signed_esfm));
        row.push_back(format_double(r.aggregates.es_bias_abs_esr));
        row.push_back(format_double(r.aggregates.es_bias_abs_esfm));
        t.rows.push_back(std::move(row));
    }
    return t;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    out.flush();
    if (!out) throw IoError("write failed on " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read error on " + path.string());
    return ss.str();
}

}  // namespace esfm
