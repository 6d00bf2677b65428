#pragma once

#include "esfm/simulation.hpp"
#include "esfm/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace esfm {

/// "%.17g", which parses back to exactly `x`. Non-finite values become
/// "nan", "inf" or "-inf".
std::string format_double(double x);

/// Parses a whole field as a double; throws ValidationError naming `where`.
double parse_double(const std::string& field, const std::string& where);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> lines;  // 1-based source line of each row (empty when built in memory)
};

/// Minimal RFC-4180 reader: comma separated, optional double quotes, header required.
CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

/// Long-format panel `unit,time,y,x1..xp`. Rows may come in any order; the
/// result is sorted by (unit, time), numerically when every label is a number.
PanelData load_panel_csv(const std::filesystem::path& path);
void write_panel_csv(const std::filesystem::path& path, const PanelData& panel);

/// Observable factors `time,f1..fk[,rf]`; a trailing column named rf is split off.
struct FactorTable {
    std::vector<std::string> time_labels;
    std::vector<std::string> names;
    MatrixXd values;  // T x k
    VectorXd rf;      // empty when absent
};

FactorTable load_factor_csv(const std::filesystem::path& path);
void write_factor_csv(const std::filesystem::path& path, const FactorTable& table);

/// Matrix with a leading label column. `row_labels` may be empty (0-based indices).
CsvTable matrix_table(const std::string& label_name, const std::vector<std::string>& row_labels,
                      const std::vector<std::string>& column_names, const MatrixXd& m);

/// JSON with sorted keys; doubles round-trip exactly.
std::string simulation_reports_to_json(const std::vector<SimulationReport>& reports);
std::vector<SimulationReport> simulation_reports_from_json(const std::string& text);

/// Per-cell summaries (slope RMSE, factor-space error, ES bias), one row per report.
CsvTable rmse_table(const std::vector<SimulationReport>& reports);
CsvTable factor_error_table(const std::vector<SimulationReport>& reports);
CsvTable es_bias_table(const std::vector<SimulationReport>& reports);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace esfm
