#include "nsc/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "nsc/model.hpp"

namespace nsc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string exact(double v) { return fmt("%.17g", v); }

std::string file_stem(const std::string& name) {
  std::string s = name;
  for (char& c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
    if (!ok) c = '_';
  }
  return s;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

// --- Summaries -----------------------------------------------------------------

const QuantileSummary& PosteriorSummary::at(const std::string& parameter) const {
  for (const auto& p : parameters) {
    if (p.parameter == parameter) return p.q;
  }
  throw ConfigError("summary has no parameter named '" + parameter + "'");
}

std::vector<double> PosteriorSummary::medians(const std::string& prefix, std::size_t count) const {
  std::vector<double> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(at(prefix + "_" + std::to_string(i)).median);
  return out;
}

PosteriorSummary summarize(const ThomasTrace& trace, std::span<const std::string> beta_names) {
  const auto sampled = trace.sampled();
  if (sampled.empty()) throw ConfigError("summary: no sampled iterations after burn-in");
  const std::size_t l = sampled.front()->mu.size();
  const std::size_t m = sampled.front()->nu.size();

  PosteriorSummary s;
  s.samples = sampled.size();
  auto add = [&](const std::string& name, auto&& get) {
    std::vector<double> v;
    v.reserve(sampled.size());
    for (const auto* it : sampled) v.push_back(get(*it));
    s.parameters.push_back({name, summarize_values(v)});
  };
  add("kappa", [](const ThomasIteration& it) { return it.kappa; });
  add("alpha", [](const ThomasIteration& it) { return std::exp(it.mu[0]); });
  add("omega", [](const ThomasIteration& it) { return std::exp(it.nu[0]); });
  for (std::size_t i = 0; i < l; ++i) add("mu_" + std::to_string(i), [i](const ThomasIteration& it) { return it.mu[i]; });
  for (std::size_t i = 0; i < m; ++i) add("nu_" + std::to_string(i), [i](const ThomasIteration& it) { return it.nu[i]; });

  for (std::size_t j = 0; j < beta_names.size(); ++j) {
    std::vector<double> p;
    for (const auto* it : sampled) {
      if (j < it->pvalues.size()) p.push_back(it->pvalues[j]);
    }
    bool any = std::any_of(p.begin(), p.end(), [](double v) { return !std::isnan(v); });
    s.covariates.push_back({beta_names[j], any ? median(p) : kNaN});
  }
  return s;
}

PosteriorSummary summarize(const GtpSummary& g) {
  PosteriorSummary s;
  s.samples = g.samples;
  s.parameters = {{"kappa", g.kappa}, {"omega", g.omega}, {"lambda", g.lambda}, {"theta", g.theta}};
  return s;
}

nlohmann::ordered_json to_json(const PosteriorSummary& summary) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr); };
  nlohmann::ordered_json j;
  auto params = nlohmann::ordered_json::array();
  for (const auto& p : summary.parameters) {
    params.push_back({{"parameter", p.parameter}, {"median", num(p.q.median)}, {"q025", num(p.q.q025)},
                      {"q975", num(p.q.q975)}});
  }
  j["parameters"] = std::move(params);
  auto covs = nlohmann::ordered_json::array();
  for (const auto& c : summary.covariates) {
    covs.push_back({{"covariate", c.covariate}, {"median_pvalue", num(c.median_pvalue)}});
  }
  j["covariates"] = std::move(covs);
  j["samples"] = summary.samples;
  return j;
}

Surfaces estimated_surfaces(const PosteriorSummary& summary, std::span<const double> beta_hat,
                            const CovariateSet& covs, const DilatedWindow& region) {
  const double kappa = summary.at("kappa").median;
  const auto mu = summary.medians("mu", covs.z_alpha.size() + 1);
  const auto nu = summary.medians("nu", covs.z_omega.size() + 1);
  const std::size_t nc = region.ncols(), nr = region.nrows();
  const double nodata = -9999.0;
  std::vector<double> vi(nc * nr, nodata), va(nc * nr, nodata), vo(nc * nr, nodata);
  for (std::size_t idx : region.active_cells()) {
    const Point u = region.cell_center(idx);
    vi[idx] = kappa * f_centers(beta_hat, covs.z_beta, u);
    va[idx] = alpha_at(mu, covs.z_alpha, u);
    vo[idx] = omega_at(nu, covs.z_omega, u);
  }
  return Surfaces{RasterCovariate("intensity", region.origin(), region.cell(), nc, nr, std::move(vi), nodata),
                  RasterCovariate("alpha", region.origin(), region.cell(), nc, nr, std::move(va), nodata),
                  RasterCovariate("omega", region.origin(), region.cell(), nc, nr, std::move(vo), nodata)};
}

std::vector<double> acceptance_series(std::span<const double> flags, std::size_t window) {
  if (window == 0) throw ConfigError("acceptance window must be >= 1");
  std::vector<double> out(flags.size());
  for (std::size_t t = 0; t < flags.size(); ++t) {
    const std::size_t lo = t + 1 >= window ? t + 1 - window : 0;
    double s = 0.0;
    for (std::size_t i = lo; i <= t; ++i) s += flags[i];
    out[t] = s / static_cast<double>(t - lo + 1);
  }
  return out;
}

Histogram fixed_histogram(std::span<const double> values, double lo, double hi, std::size_t bins) {
  if (bins == 0 || !(hi > lo)) throw ConfigError("histogram: need bins >= 1 and hi > lo");
  Histogram h;
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b <= bins; ++b) h.edges.push_back(b == bins ? hi : lo + width * static_cast<double>(b));
  h.counts.assign(bins, 0);
  for (double v : values) {
    if (std::isnan(v) || v < lo || v > hi) continue;
    auto b = static_cast<std::size_t>((v - lo) / width);
    ++h.counts[std::min(b, bins - 1)];
  }
  return h;
}

Histogram fd_histogram(std::span<const double> values) {
  std::vector<double> v;
  for (double x : values) {
    if (!std::isnan(x)) v.push_back(x);
  }
  if (v.empty()) return Histogram{{0.0, 1.0}, {0}};
  std::sort(v.begin(), v.end());
  const double lo = v.front(), hi = v.back();
  if (!(hi > lo)) return fixed_histogram(v, lo - 0.5, hi + 0.5, 1);
  const double iqr = quantile_sorted(v, 0.75) - quantile_sorted(v, 0.25);
  const double width = 2.0 * iqr / std::cbrt(static_cast<double>(v.size()));
  std::size_t bins = 1;
  if (width > 0.0) bins = static_cast<std::size_t>(std::ceil((hi - lo) / width));
  bins = std::clamp<std::size_t>(bins, 1, 200);
  return fixed_histogram(v, lo, hi, bins);
}

// --- Plot data -----------------------------------------------------------------

PlotData trace_plot(const std::string& name, std::span<const double> iters, std::span<const double> values,
                    const QuantileSummary* rules) {
  PlotData p{PlotKind::Trace, name, {"iter", "value"}, {}};
  if (rules) p.columns.insert(p.columns.end(), {"median", "q025", "q975"});
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::vector<double> row{iters[i], values[i]};
    if (rules) row.insert(row.end(), {rules->median, rules->q025, rules->q975});
    p.rows.push_back(std::move(row));
  }
  return p;
}

PlotData histogram_plot(const std::string& name, const Histogram& h) {
  PlotData p{PlotKind::Histogram, name, {"bin_left", "bin_right", "count"}, {}};
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    p.rows.push_back({h.edges[b], h.edges[b + 1], static_cast<double>(h.counts[b])});
  }
  return p;
}

PlotData heatmap_plot(const std::string& name, const RasterCovariate& s) {
  PlotData p{PlotKind::Heatmap, name, {"col", "row", "x", "y", "value"}, {}};
  for (std::size_t r = 0; r < s.nrows(); ++r) {
    for (std::size_t c = 0; c < s.ncols(); ++c) {
      const double v = s.at(c, r);
      if (s.is_nodata(v)) continue;
      p.rows.push_back({static_cast<double>(c), static_cast<double>(r),
                        s.origin().x + (static_cast<double>(c) + 0.5) * s.cell(),
                        s.origin().y + (static_cast<double>(r) + 0.5) * s.cell(), v});
    }
  }
  return p;
}

// --- SVG -----------------------------------------------------------------------

namespace {

constexpr double kW = 640, kH = 400, kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;
constexpr double kPw = kW - kLeft - kRight, kPh = kH - kTop - kBottom;

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!(lo <= hi)) lo = 0.0, hi = 1.0;
    if (hi == lo) lo -= 0.5, hi += 0.5;
  }
  double map(double v, double pixels) const { return (v - lo) / (hi - lo) * pixels; }
};

void open_svg(std::ostringstream& s, const std::string& title, const std::string& xlabel, const std::string& ylabel,
              const Range& x, const Range& y) {
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << kW << "\" height=\"" << kH
    << "\" viewBox=\"0 0 " << kW << ' ' << kH << "\">\n"
    << "<rect x=\"0\" y=\"0\" width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n"
    << "<text x=\"" << kW / 2 << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">"
    << xml_escape(title) << "</text>\n"
    << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kPw << "\" height=\"" << kPh
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  const double yb = kTop + kPh;
  s << "<g font-family=\"sans-serif\" font-size=\"11\">\n"
    << "<text x=\"" << kLeft << "\" y=\"" << yb + 16 << "\" text-anchor=\"start\">" << fmt("%.4g", x.lo) << "</text>\n"
    << "<text x=\"" << kLeft + kPw << "\" y=\"" << yb + 16 << "\" text-anchor=\"end\">" << fmt("%.4g", x.hi)
    << "</text>\n"
    << "<text x=\"" << kLeft - 4 << "\" y=\"" << yb << "\" text-anchor=\"end\">" << fmt("%.4g", y.lo) << "</text>\n"
    << "<text x=\"" << kLeft - 4 << "\" y=\"" << kTop + 10 << "\" text-anchor=\"end\">" << fmt("%.4g", y.hi)
    << "</text>\n"
    << "<text x=\"" << kLeft + kPw / 2 << "\" y=\"" << yb + 36 << "\" text-anchor=\"middle\">" << xml_escape(xlabel)
    << "</text>\n"
    << "<text x=\"16\" y=\"" << kTop + kPh / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << kTop + kPh / 2 << ")\">" << xml_escape(ylabel) << "</text>\n"
    << "</g>\n";
}

std::string px(double v) { return fmt("%.2f", v); }

std::string render_trace(const PlotData& p) {
  Range x, y;
  for (const auto& r : p.rows) {
    x.add(r[0]);
    for (std::size_t c = 1; c < r.size(); ++c) y.add(r[c]);
  }
  x.finish();
  y.finish();
  std::ostringstream s;
  open_svg(s, p.name, "iteration", p.name, x, y);
  const std::size_t stride = std::max<std::size_t>(1, (p.rows.size() + 3999) / 4000);
  s << "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"0.8\" points=\"";
  bool first = true;
  for (std::size_t i = 0; i < p.rows.size(); i += stride) {
    const auto& r = p.rows[i];
    if (!std::isfinite(r[1])) continue;
    if (!first) s << ' ';
    first = false;
    s << px(kLeft + x.map(r[0], kPw)) << ',' << px(kTop + kPh - y.map(r[1], kPh));
  }
  s << "\"/>\n";
  if (p.columns.size() >= 5 && !p.rows.empty()) {
    const auto& r = p.rows.front();
    for (std::size_t c = 2; c < 5; ++c) {
      if (!std::isfinite(r[c])) continue;
      const std::string yy = px(kTop + kPh - y.map(r[c], kPh));
      s << "<line x1=\"" << px(kLeft) << "\" y1=\"" << yy << "\" x2=\"" << px(kLeft + kPw) << "\" y2=\"" << yy
        << "\" stroke=\"red\" stroke-width=\"1.5\"" << (c == 2 ? "" : " stroke-dasharray=\"6,4\"") << "/>\n";
    }
  }
  s << "</svg>\n";
  return s.str();
}

std::string render_histogram(const PlotData& p) {
  Range x, y;
  y.add(0.0);
  for (const auto& r : p.rows) {
    x.add(r[0]);
    x.add(r[1]);
    y.add(r[2]);
  }
  x.finish();
  y.finish();
  std::ostringstream s;
  open_svg(s, p.name, p.name, "count", x, y);
  for (const auto& r : p.rows) {
    const double x0 = kLeft + x.map(r[0], kPw), x1 = kLeft + x.map(r[1], kPw);
    const double h = y.map(r[2], kPh) - y.map(0.0, kPh);
    s << "<rect x=\"" << px(x0) << "\" y=\"" << px(kTop + kPh - y.map(0.0, kPh) - h) << "\" width=\""
      << px(std::max(0.0, x1 - x0)) << "\" height=\"" << px(h) << "\" fill=\"steelblue\" stroke=\"white\"/>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::string colour(double t) {
  // Dark blue -> teal -> yellow.
  static constexpr double stops[3][3] = {{68, 1, 84}, {33, 145, 140}, {253, 231, 37}};
  t = std::clamp(t, 0.0, 1.0);
  const int k = t < 0.5 ? 0 : 1;
  const double u = t < 0.5 ? t * 2.0 : (t - 0.5) * 2.0;
  int rgb[3];
  for (int i = 0; i < 3; ++i) rgb[i] = static_cast<int>(std::lround(stops[k][i] + u * (stops[k + 1][i] - stops[k][i])));
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
  return buf;
}

std::string render_heatmap(const PlotData& p) {
  Range cols, rows, x, y, v;
  for (const auto& r : p.rows) {
    cols.add(r[0]);
    rows.add(r[1]);
    x.add(r[2]);
    y.add(r[3]);
    v.add(r[4]);
  }
  const bool empty = p.rows.empty();
  x.finish();
  y.finish();
  const double vlo = v.lo, vhi = v.hi;
  std::ostringstream s;
  open_svg(s, p.name, "x", "y", x, y);
  if (!empty) {
    const double nc = cols.hi - cols.lo + 1.0, nr = rows.hi - rows.lo + 1.0;
    const double cell = std::min(kPw / nc, kPh / nr);
    for (const auto& r : p.rows) {
      if (!std::isfinite(r[4])) continue;
      const double t = vhi > vlo ? (r[4] - vlo) / (vhi - vlo) : 0.5;
      const double x0 = kLeft + (r[0] - cols.lo) * cell;
      const double y0 = kTop + kPh - (r[1] - rows.lo + 1.0) * cell;
      s << "<rect x=\"" << px(x0) << "\" y=\"" << px(y0) << "\" width=\"" << px(cell) << "\" height=\"" << px(cell)
        << "\" fill=\"" << colour(t) << "\"/>\n";
    }
    s << "<text x=\"" << kW - kRight << "\" y=\"" << kTop - 6
      << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" << fmt("%.4g", vlo) << " .. "
      << fmt("%.4g", vhi) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace

std::string render_svg(const PlotData& plot) {
  switch (plot.kind) {
    case PlotKind::Trace: return render_trace(plot);
    case PlotKind::Histogram: return render_histogram(plot);
    case PlotKind::Heatmap: return render_heatmap(plot);
  }
  return {};
}

void write_plot_csv(std::ostream& out, const PlotData& plot) {
  for (std::size_t c = 0; c < plot.columns.size(); ++c) out << (c ? "," : "") << plot.columns[c];
  out << '\n';
  for (const auto& r : plot.rows) {
    for (std::size_t c = 0; c < r.size(); ++c) out << (c ? "," : "") << exact(r[c]);
    out << '\n';
  }
}

PlotData read_plot_csv(std::istream& in, const std::string& name) {
  PlotData p;
  p.name = name;
  std::string line;
  if (!std::getline(in, line)) throw IoError("plot CSV '" + name + "': missing header");
  p.columns = split(line, ',');
  if (p.columns.front() == "iter") {
    p.kind = PlotKind::Trace;
  } else if (p.columns.front() == "bin_left") {
    p.kind = PlotKind::Histogram;
  } else if (p.columns.front() == "col") {
    p.kind = PlotKind::Heatmap;
  } else {
    throw IoError("plot CSV '" + name + "': unrecognised header '" + line + "'");
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line, ',');
    if (cells.size() != p.columns.size()) {
      throw IoError("plot CSV '" + name + "' line " + std::to_string(lineno) + ": expected " +
                    std::to_string(p.columns.size()) + " fields, got " + std::to_string(cells.size()));
    }
    std::vector<double> row;
    for (const auto& c : cells) {
      char* end = nullptr;
      const double v = std::strtod(c.c_str(), &end);
      if (c.empty() || *end != '\0') {
        throw IoError("plot CSV '" + name + "' line " + std::to_string(lineno) + ": bad number '" + c + "'");
      }
      row.push_back(v);
    }
    p.rows.push_back(std::move(row));
  }
  return p;
}

// --- Report assembly -----------------------------------------------------------

ReportInput report_input(const ThomasTrace& trace, const PosteriorSummary& summary,
                         std::span<const std::string> beta_names, std::size_t acceptance_window) {
  ReportInput in;
  if (trace.iterations.empty()) return in;
  const auto sampled = trace.sampled();
  std::vector<double> iters;
  for (const auto& it : trace.iterations) iters.push_back(static_cast<double>(it.iter));

  auto param = [&](const std::string& name, auto&& get) {
    ParameterReport r;
    r.name = name;
    r.trace.name = name;
    r.trace.iters = iters;
    for (const auto& it : trace.iterations) r.trace.values.push_back(get(it));
    for (const auto* it : sampled) r.posterior.push_back(get(*it));
    r.q = summary.at(name);
    in.parameters.push_back(std::move(r));
  };
  param("kappa", [](const ThomasIteration& it) { return it.kappa; });
  param("alpha", [](const ThomasIteration& it) { return std::exp(it.mu[0]); });
  param("omega", [](const ThomasIteration& it) { return std::exp(it.nu[0]); });
  const auto& first = trace.iterations.front();
  for (std::size_t i = 1; i < first.mu.size(); ++i) {
    param("mu_" + std::to_string(i), [i](const ThomasIteration& it) { return it.mu[i]; });
  }
  for (std::size_t i = 1; i < first.nu.size(); ++i) {
    param("nu_" + std::to_string(i), [i](const ThomasIteration& it) { return it.nu[i]; });
  }

  for (std::size_t j = 0; j < beta_names.size(); ++j) {
    Series s;
    s.name = beta_names[j];
    for (const auto* it : sampled) {
      if (j < it->pvalues.size()) s.values.push_back(it->pvalues[j]);
    }
    in.pvalues.push_back(std::move(s));
  }

  Series ll{"loglik", iters, {}}, nc{"n_centers", iters, {}};
  std::vector<double> bdm, mu, nu;
  for (const auto& it : trace.iterations) {
    ll.values.push_back(it.loglik);
    nc.values.push_back(static_cast<double>(it.n_centers));
    bdm.push_back(it.acc_bdm ? 1.0 : 0.0);
    mu.push_back(it.acc_mu ? 1.0 : 0.0);
    nu.push_back(it.acc_nu ? 1.0 : 0.0);
  }
  in.diagnostics = {std::move(ll), std::move(nc)};
  in.acceptance = {{"bdm", iters, acceptance_series(bdm, acceptance_window)},
                   {"mu", iters, acceptance_series(mu, acceptance_window)},
                   {"nu", iters, acceptance_series(nu, acceptance_window)}};
  return in;
}

ReportInput report_input(const GtpTrace& trace, const GtpSummary& summary, std::size_t discard, std::size_t step,
                         std::size_t acceptance_window) {
  ReportInput in;
  if (trace.iterations.empty()) return in;
  std::vector<double> iters;
  for (const auto& it : trace.iterations) iters.push_back(static_cast<double>(it.iter));
  auto param = [&](const std::string& name, const QuantileSummary& q, auto&& get) {
    ParameterReport r;
    r.name = name;
    r.trace = {name, iters, {}};
    for (const auto& it : trace.iterations) r.trace.values.push_back(get(it));
    for (std::size_t i = discard; i < trace.iterations.size(); i += step) r.posterior.push_back(get(trace.iterations[i]));
    r.q = q;
    in.parameters.push_back(std::move(r));
  };
  param("kappa", summary.kappa, [](const GtpIteration& it) { return it.kappa; });
  param("omega", summary.omega, [](const GtpIteration& it) { return it.omega; });
  param("lambda", summary.lambda, [](const GtpIteration& it) { return it.lambda; });
  param("theta", summary.theta, [](const GtpIteration& it) { return it.theta; });

  Series ll{"loglik", iters, {}}, nc{"n_centers", iters, {}};
  std::vector<std::vector<double>> acc(6);
  for (const auto& it : trace.iterations) {
    ll.values.push_back(it.loglik);
    nc.values.push_back(static_cast<double>(it.n_centers));
    acc[0].push_back(it.acc_kappa ? 1.0 : 0.0);
    acc[1].push_back(it.acc_omega ? 1.0 : 0.0);
    acc[2].push_back(it.acc_lambda ? 1.0 : 0.0);
    acc[3].push_back(it.acc_theta ? 1.0 : 0.0);
    acc[4].push_back(it.acc_centers ? 1.0 : 0.0);
    acc[5].push_back(it.acc_conn);
  }
  in.diagnostics = {std::move(ll), std::move(nc)};
  const char* names[6] = {"kappa", "omega", "lambda", "theta", "centers", "conn"};
  for (std::size_t k = 0; k < 6; ++k) in.acceptance.push_back({names[k], iters, acceptance_series(acc[k], acceptance_window)});
  return in;
}

std::vector<std::filesystem::path> emit_plots(const ReportInput& input, const std::filesystem::path& out_dir) {
  std::vector<PlotData> plots;
  for (const auto& p : input.parameters) {
    plots.push_back(trace_plot("trace_" + p.name, p.trace.iters, p.trace.values, &p.q));
    plots.push_back(histogram_plot("hist_" + p.name, fd_histogram(p.posterior)));
  }
  for (const auto& s : input.pvalues) plots.push_back(histogram_plot("pvalues_" + s.name, fixed_histogram(s.values, 0.0, 1.0, 20)));
  for (const auto& s : input.diagnostics) plots.push_back(trace_plot("trace_" + s.name, s.iters, s.values));
  for (const auto& s : input.acceptance) plots.push_back(trace_plot("acceptance_" + s.name, s.iters, s.values));
  for (const auto& r : input.surfaces) plots.push_back(heatmap_plot("surface_" + r.name(), r));

  std::vector<std::filesystem::path> written;
  if (plots.empty()) return written;
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create directory " + out_dir.string() + ": " + ec.message());
  for (auto& p : plots) {
    p.name = file_stem(p.name);  // the title must survive a CSV round trip
    const std::string& stem = p.name;
    const auto csv = out_dir / (stem + ".csv");
    const auto svg = out_dir / (stem + ".svg");
    {
      std::ofstream f(csv);
      if (!f) throw IoError("cannot write " + csv.string());
      write_plot_csv(f, p);
      if (!f) throw IoError("write failed: " + csv.string());
    }
    {
      std::ofstream f(svg);
      if (!f) throw IoError("cannot write " + svg.string());
      f << render_svg(p);
      if (!f) throw IoError("write failed: " + svg.string());
    }
    written.push_back(svg);
    written.push_back(csv);
  }
  return written;
}

}  // namespace nsc
