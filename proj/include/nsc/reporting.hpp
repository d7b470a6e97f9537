#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "nsc/covariates.hpp"
#include "nsc/gtp.hpp"
#include "nsc/mcmc_thomas.hpp"
#include "nsc/stats.hpp"

namespace nsc {

struct ParameterSummary {
  std::string parameter;
  QuantileSummary q;
};

struct CovariateSignificance {
  std::string covariate;
  double median_pvalue = 0.0;
};

struct PosteriorSummary {
  std::vector<ParameterSummary> parameters;
  std::vector<CovariateSignificance> covariates;
  std::size_t samples = 0;

  /// Throws ConfigError for an unknown name.
  const QuantileSummary& at(const std::string& parameter) const;
  /// Medians of mu_0..mu_l (resp. nu_0..nu_m).
  std::vector<double> medians(const std::string& prefix, std::size_t count) const;
};

/// Summaries over the sampled iterations: kappa, alpha = exp(mu_0),
/// omega = exp(nu_0), then mu_i and nu_i; median p-value per z_beta covariate.
/// Throws ConfigError when no iteration was sampled.
PosteriorSummary summarize(const ThomasTrace& trace, std::span<const std::string> beta_names);
PosteriorSummary summarize(const GtpSummary& summary);

nlohmann::ordered_json to_json(const PosteriorSummary& summary);

/// Estimated fields on the dilated-window lattice; cells outside the mask
/// hold the nodata value.
struct Surfaces {
  RasterCovariate intensity;  // kappa f(beta, u)
  RasterCovariate alpha;      // alpha(mu, u)
  RasterCovariate omega;      // omega(nu, u)
};

/// Evaluates the three fields at the posterior medians and the step-1 slopes.
Surfaces estimated_surfaces(const PosteriorSummary& summary, std::span<const double> beta_hat,
                            const CovariateSet& covs, const DilatedWindow& region);

/// Sliding-window mean of 0/1 (or fractional) acceptance values. Entry t
/// averages values[max(0, t - window + 1) .. t].
std::vector<double> acceptance_series(std::span<const double> flags, std::size_t window = 1000);

struct Histogram {
  std::vector<double> edges;  // bins + 1 entries
  std::vector<std::size_t> counts;
};

/// Freedman-Diaconis binning; NaN values are skipped.
Histogram fd_histogram(std::span<const double> values);
/// Fixed-width bins on [lo, hi]; values outside are skipped.
Histogram fixed_histogram(std::span<const double> values, double lo, double hi, std::size_t bins);

// ---------------------------------------------------------------------------
// Plots
// ---------------------------------------------------------------------------

enum class PlotKind { Trace, Histogram, Heatmap };

/// Tabular plot data. Trace: iter, value[, median, q025, q975].
/// Histogram: bin_left, bin_right, count. Heatmap: col, row, x, y, value.
struct PlotData {
  PlotKind kind = PlotKind::Trace;
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

PlotData trace_plot(const std::string& name, std::span<const double> iters, std::span<const double> values,
                    const QuantileSummary* rules = nullptr);
PlotData histogram_plot(const std::string& name, const Histogram& h);
PlotData heatmap_plot(const std::string& name, const RasterCovariate& surface);

std::string render_svg(const PlotData& plot);
void write_plot_csv(std::ostream& out, const PlotData& plot);
/// Infers the kind from the header. Throws IoError naming the bad line.
PlotData read_plot_csv(std::istream& in, const std::string& name);

struct Series {
  std::string name;
  std::vector<double> iters;
  std::vector<double> values;
};

struct ParameterReport {
  std::string name;
  Series trace;                  // full chain
  std::vector<double> posterior; // post burn-in samples
  QuantileSummary q;
};

struct ReportInput {
  std::vector<ParameterReport> parameters;
  std::vector<Series> pvalues;      // values only; iters unused
  std::vector<Series> diagnostics;  // loglik, n_centers
  std::vector<Series> acceptance;   // windowed fractions
  std::vector<RasterCovariate> surfaces;
};

ReportInput report_input(const ThomasTrace& trace, const PosteriorSummary& summary,
                         std::span<const std::string> beta_names, std::size_t acceptance_window = 1000);
ReportInput report_input(const GtpTrace& trace, const GtpSummary& summary, std::size_t discard, std::size_t step,
                         std::size_t acceptance_window = 1000);

/// Writes <name>.svg and <name>.csv for every plot; returns the paths
/// written, in order. Throws IoError with the path on failure.
std::vector<std::filesystem::path> emit_plots(const ReportInput& input, const std::filesystem::path& out_dir);

}  // namespace nsc
