#pragma once

#include "esfm/es_factor.hpp"
#include "esfm/quantile.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace esfm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitIo = 4;

struct RunConfig {
    std::string command;
    std::filesystem::path out_dir = ".";
    std::uint64_t seed = 20240601;
    int workers = 1;

    // estimation
    std::filesystem::path panel;
    double tau = 0.10;
    std::optional<Index> r;      // fixed factor count
    std::optional<Index> r_max;  // IC selection when set
    Index hac_lag = -1;
    bool standard_errors = true;
    QrOptions qr;
    FitOptions fit;

    // simulate
    std::vector<int> scenarios{1};
    std::vector<Index> n_values{100};
    std::vector<Index> t_values{100};
    std::vector<double> tau_values{0.10};
    Index replications = 20;
    Index p = 3;
    Index r0 = 2;
    std::optional<double> tail_loading;
    std::optional<double> c_sigma;
    Index oracle_draws = 1'000'000;

    // asset pricing
    std::filesystem::path factors;
    std::filesystem::path factors_b;
    Index window = 60;
    Index groups = 5;
    Index nw_lags = 6;
    std::string sort_on = "esfm";  // esfm | mean | a factor column name
};

/// Parses argv (CLI11, optional --config file, ESFM_WORKERS). Throws
/// ValidationError on bad or inconsistent flags.
/// Returns std::nullopt when only help or version output was requested.
std::optional<RunConfig> parse_args(int argc, const char* const* argv);

/// Runs one validated command. Writes its artifacts and manifest.json into
/// out_dir; on failure removes whatever it wrote and rethrows.
void dispatch(const RunConfig& config);

/// parse_args + dispatch with the exit-code mapping and a one-line JSON error
/// on stderr.
int run(int argc, const char* const* argv);

}  // namespace esfm::cli
