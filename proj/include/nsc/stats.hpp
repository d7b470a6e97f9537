#pragma once

#include <span>
#include <vector>

namespace nsc {

double normal_cdf(double t);

/// P(a < Z < b) for a standard normal Z, computed on the tail closer to the
/// interval to avoid cancellation.
double normal_interval_prob(double a, double b);

/// Two-sided p-value of a standard normal test statistic.
double two_sided_pvalue(double z);

/// Type-7 (linear interpolation) quantile of already sorted values.
double quantile_sorted(std::span<const double> sorted, double p);

/// Type-7 quantile; copies and sorts. NaN entries are dropped.
double quantile(std::span<const double> values, double p);

double median(std::span<const double> values);

struct QuantileSummary {
  double median = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
};

/// Median and 2.5% / 97.5% quantiles (type 7). Throws NumericError when no
/// finite value is present.
QuantileSummary summarize_values(std::span<const double> values);

}  // namespace nsc
