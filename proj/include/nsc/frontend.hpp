#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nsc/covariates.hpp"
#include "nsc/gtp.hpp"
#include "nsc/mcmc_thomas.hpp"
#include "nsc/model.hpp"

namespace nsc {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Dataset I/O
// ---------------------------------------------------------------------------

/// Pattern CSV with header `x,y`. Throws IoError naming the offending line.
std::vector<Point> read_pattern_csv(std::istream& in, const std::string& label = "pattern");
std::vector<Point> read_pattern_csv(const fs::path& path);
void write_pattern_csv(std::ostream& out, std::span<const Point> points);

struct WindowSpec {
  Window window;
  std::optional<double> dilation;
  std::optional<double> cell;  // mask / quadrature cell size
};

/// {"x_left": [...], "x_right": [...], "y_bottom": [...], "y_top": [...],
///  "dilation": r, "cell": h}. Scalars are accepted for single rectangles.
WindowSpec parse_window(const nlohmann::json& j);
WindowSpec read_window_json(const fs::path& path);
nlohmann::ordered_json window_to_json(const WindowSpec& spec);

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct ThomasTruth {
  double kappa = 0.0;
  std::vector<double> beta, mu, nu;
};

struct RunConfig {
  fs::path base_dir;  // relative paths resolve against this
  std::optional<fs::path> pattern;
  std::optional<fs::path> window;
  std::map<std::string, fs::path> rasters;
  std::vector<std::string> z_beta, z_alpha, z_omega;
  bool standardize = false;
  ThomasControl control;
  GtpControl gtp;
  std::optional<ThomasTruth> simulate;
  std::optional<GtpParams> simulate_gtp;
  std::optional<fs::path> output;
  std::uint64_t seed = 1;
};

/// Field names follow the control list conventions: NStep, BurnIn,
/// SamplingFreq, Prior_alpha_mean, ..., skappa, somega, dlambda, stheta, smove.
/// Throws ConfigError on unknown keys or wrong types.
RunConfig parse_config(const nlohmann::json& j, const fs::path& base_dir);
RunConfig load_config(const fs::path& path);

ThomasControl parse_thomas_control(const nlohmann::json& j);
GtpControl parse_gtp_control(const nlohmann::json& j);

/// Loaded data for a run.
struct Dataset {
  std::vector<Point> points;
  WindowSpec window;
  CovariateSet covs;
};

/// Loads the pattern (optional), window and covariates; checks role
/// disjointness. Coverage and point-in-window checks are done by validate().
Dataset load_dataset(const RunConfig& cfg, bool need_pattern);

/// The dilated window used for the inhomogeneous fit and simulation.
DilatedWindow thomas_dilated_window(const WindowSpec& spec);

// ---------------------------------------------------------------------------
// Trace files
// ---------------------------------------------------------------------------

struct ThomasTraceLayout {
  std::size_t n_mu = 1, n_nu = 1, n_pvalues = 0;
};

std::vector<std::string> thomas_trace_header(const ThomasTraceLayout& layout);
void write_thomas_row(std::ostream& out, const ThomasIteration& it, const ThomasTraceLayout& layout);
/// Reads a file written with write_thomas_row. Rows are marked sampled
/// according to `control`. Throws IoError naming the malformed row.
ThomasTrace read_thomas_trace(std::istream& in, const std::string& label, const ResolvedControl& control);

std::vector<std::string> gtp_trace_header();
void write_gtp_row(std::ostream& out, const GtpIteration& it);
GtpTrace read_gtp_trace(std::istream& in, const std::string& label);

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct CliOptions {
  fs::path config;
  std::optional<fs::path> out;
  std::optional<std::uint64_t> seed;
  std::size_t chains = 1;
  bool quiet = false;
  bool standardize = false;
};

/// Files written by a command, relative to the output directory.
struct Manifest {
  std::string command;
  std::vector<std::string> files;
};

Manifest cmd_validate(const CliOptions& opt);
Manifest cmd_simulate(const CliOptions& opt);
Manifest cmd_simulate_gtp(const CliOptions& opt);
Manifest cmd_fit_thomas(const CliOptions& opt);
Manifest cmd_fit_gtp(const CliOptions& opt);
Manifest cmd_report(const CliOptions& opt);

/// 0 success, 2 validation / configuration error, 3 numeric or runtime error.
int exit_code_for(const std::exception& e);

/// Parses argv with subcommands and runs the command. Returns the exit code.
int run_cli(int argc, char** argv);

}  // namespace nsc
