#include "nsc/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "nsc/firstorder.hpp"
#include "nsc/reporting.hpp"

namespace nsc {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_number(const std::string& cell, const std::string& label, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (cell.empty() || *end != '\0') {
    throw IoError(label + " line " + std::to_string(line) + ": bad number '" + cell + "'");
  }
  return v;
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

json parse_json_file(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// --- JSON field helpers --------------------------------------------------------

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

double get_number(const json& j, const std::string& key, const std::string& where) {
  const auto& v = j.at(key);
  if (!v.is_number()) throw ConfigError(where + ": '" + key + "' must be a number");
  return v.get<double>();
}

std::size_t get_count(const json& j, const std::string& key, const std::string& where) {
  const auto& v = j.at(key);
  if (!v.is_number_integer() && !(v.is_number() && v.get<double>() == std::floor(v.get<double>()))) {
    throw ConfigError(where + ": '" + key + "' must be a non-negative integer");
  }
  const double d = v.get<double>();
  if (d < 0) throw ConfigError(where + ": '" + key + "' must be a non-negative integer");
  return static_cast<std::size_t>(d);
}

std::vector<double> get_vector(const json& j, const std::string& key, const std::string& where) {
  const auto& v = j.at(key);
  if (v.is_number()) return {v.get<double>()};
  if (!v.is_array()) throw ConfigError(where + ": '" + key + "' must be a number or an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw ConfigError(where + ": '" + key + "' must contain numbers only");
    out.push_back(e.get<double>());
  }
  return out;
}

std::vector<std::string> get_names(const json& j, const std::string& key, const std::string& where) {
  const auto& v = j.at(key);
  if (v.is_string()) return {v.get<std::string>()};
  if (!v.is_array()) throw ConfigError(where + ": '" + key + "' must be a list of covariate names");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) throw ConfigError(where + ": '" + key + "' must contain names only");
    out.push_back(e.get<std::string>());
  }
  return out;
}

fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : base / p; }

// Re-throws an error with a stage label, keeping its category.
template <class F>
auto staged(const std::string& stage, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ChainError&) {
    throw;
  } catch (const GtpChainError&) {
    throw;
  } catch (const ConfigError& e) {
    throw ConfigError(stage + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(stage + ": " + e.what());
  } catch (const EvaluationError& e) {
    throw EvaluationError(stage + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError(stage + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(stage + ": " + e.what());
  }
}

fs::path output_dir(const CliOptions& opt, const RunConfig& cfg) {
  if (opt.out) return *opt.out;
  if (cfg.output) return *cfg.output;
  throw ConfigError("no output directory: pass --out or set \"output\" in the config");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::string rel(const fs::path& p, const fs::path& base) { return fs::relative(p, base).generic_string(); }

void write_manifest(const fs::path& dir, Manifest& m) {
  std::sort(m.files.begin(), m.files.end());
  ojson j;
  j["command"] = m.command;
  j["files"] = m.files;
  write_text(dir / "manifest.json", j.dump(2) + "\n");
}

RunConfig load_with_overrides(const CliOptions& opt) {
  RunConfig cfg = load_config(opt.config);
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.standardize) cfg.standardize = true;
  return cfg;
}

void check_points_in_window(std::span<const Point> pts, const Window& w) {
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!w.contains(pts[i])) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "point " << i + 1 << " (" << pts[i].x << ", " << pts[i].y << ") lies outside the observation window";
      throw ValidationError(msg.str());
    }
  }
}

void write_simulation(const fs::path& dir, const SimulatedPattern& sim, Manifest& m) {
  ensure_dir(dir);
  {
    std::ostringstream s;
    write_pattern_csv(s, sim.points);
    write_text(dir / "pattern.csv", s.str());
  }
  {
    std::ostringstream s;
    s << "id,x,y,cluster_size\n";
    for (std::size_t j = 0; j < sim.parents.size(); ++j) {
      s << j << ',' << exact(sim.parents[j].x) << ',' << exact(sim.parents[j].y) << ',' << sim.cluster_size[j] << '\n';
    }
    write_text(dir / "parents.csv", s.str());
  }
  {
    std::ostringstream s;
    s << "point,parent\n";
    for (std::size_t i = 0; i < sim.parent_index.size(); ++i) s << i << ',' << sim.parent_index[i] << '\n';
    write_text(dir / "allocation.csv", s.str());
  }
  m.files.insert(m.files.end(), {"pattern.csv", "parents.csv", "allocation.csv"});
}

std::vector<std::string> names_of(std::span<const RasterCovariate> covs) {
  std::vector<std::string> out;
  for (const auto& c : covs) out.push_back(c.name());
  return out;
}

ojson priors_json(const ResolvedControl& rc) {
  ojson j;
  j["NStep"] = rc.n_step;
  j["BurnIn"] = rc.burn_in;
  j["SamplingFreq"] = rc.sampling_freq;
  j["Prior_alpha_mean"] = rc.prior_mu_mean[0];
  j["Prior_alpha_SD"] = rc.prior_mu_sd[0];
  j["Prior_omega_mean"] = rc.prior_nu_mean[0];
  j["Prior_omega_SD"] = rc.prior_nu_sd[0];
  j["Prior_alphavec_SD"] = std::vector<double>(rc.prior_mu_sd.begin() + 1, rc.prior_mu_sd.end());
  j["Prior_omegavec_SD"] = std::vector<double>(rc.prior_nu_sd.begin() + 1, rc.prior_nu_sd.end());
  j["Proposal_alpha_SD"] = rc.proposal_mu_sd;
  j["Proposal_omega_SD"] = rc.proposal_nu_sd;
  j["CenterMove_SD"] = rc.center_move_sd;
  return j;
}

ojson gtp_settings_json(const GtpControl& c) {
  ojson j;
  j["a_kappa"] = c.a_kappa;
  j["b_kappa"] = c.b_kappa;
  j["a_omega"] = c.a_omega;
  j["b_omega"] = c.b_omega;
  j["l_lambda"] = c.l_lambda;
  j["u_lambda"] = c.u_lambda;
  j["a_theta"] = c.a_theta;
  j["b_theta"] = c.b_theta;
  j["skappa"] = c.skappa.value_or(lognormal_mean(c.a_kappa, c.b_kappa) / 100.0);
  j["somega"] = c.somega.value_or(lognormal_mean(c.a_omega, c.b_omega) / 100.0);
  j["stheta"] = c.stheta.value_or(lognormal_mean(c.a_theta, c.b_theta) / 100.0);
  j["dlambda"] = c.dlambda;
  j["smove"] = c.smove;
  j["iter"] = c.iter;
  j["discard"] = c.discard;
  j["step"] = c.step;
  j["conn_multiplier"] = c.conn_multiplier;
  j["dilation"] = c.dilation.value_or(std::exp(c.a_omega));
  if (c.fixed_lambda) j["fixed_lambda"] = *c.fixed_lambda;
  return j;
}

std::uint64_t chain_seed(std::uint64_t root, std::size_t chain, std::size_t chains) {
  return chains > 1 ? derive_seed(root, "chain-" + std::to_string(chain)) : root;
}

// Runs fn(k) for each chain on its own thread and rethrows the first error.
template <class F>
void run_chains(std::size_t chains, F&& fn) {
  if (chains <= 1) {
    fn(0);
    return;
  }
  std::vector<std::exception_ptr> errors(chains);
  std::vector<std::thread> threads;
  for (std::size_t k = 0; k < chains; ++k) {
    threads.emplace_back([&, k] {
      try {
        fn(k);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

class Progress {
 public:
  Progress(bool quiet, std::string label, std::size_t total) : quiet_(quiet), label_(std::move(label)), total_(total) {}
  void operator()(std::size_t iter) const {
    if (quiet_ || total_ < 10) return;
    if (iter % (total_ / 10) == 0) std::cerr << label_ << ": iteration " << iter << " / " << total_ << '\n';
  }

 private:
  bool quiet_;
  std::string label_;
  std::size_t total_;
};

}  // namespace

// --- Pattern / window ----------------------------------------------------------

std::vector<Point> read_pattern_csv(std::istream& in, const std::string& label) {
  std::string line;
  if (!std::getline(in, line)) throw IoError(label + ": empty file, expected header 'x,y'");
  const auto head = split_csv(line);
  if (head.size() != 2 || head[0] != "x" || head[1] != "y") {
    throw IoError(label + " line 1: expected header 'x,y', got '" + line + "'");
  }
  std::vector<Point> pts;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv(line);
    if (cells.size() != 2) {
      throw IoError(label + " line " + std::to_string(lineno) + ": expected 2 fields, got " +
                    std::to_string(cells.size()));
    }
    const Point p{parse_number(cells[0], label, lineno), parse_number(cells[1], label, lineno)};
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw IoError(label + " line " + std::to_string(lineno) + ": coordinates must be finite");
    }
    pts.push_back(p);
  }
  return pts;
}

std::vector<Point> read_pattern_csv(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open pattern file " + path.string());
  return read_pattern_csv(f, path.string());
}

void write_pattern_csv(std::ostream& out, std::span<const Point> points) {
  out << "x,y\n";
  for (const Point& p : points) out << exact(p.x) << ',' << exact(p.y) << '\n';
}

WindowSpec parse_window(const json& j) {
  check_keys(j, {"x_left", "x_right", "y_bottom", "y_top", "dilation", "cell"}, "window");
  for (const char* k : {"x_left", "x_right", "y_bottom", "y_top"}) {
    if (!j.contains(k)) throw ConfigError(std::string("window: missing '") + k + "'");
  }
  const auto xl = get_vector(j, "x_left", "window");
  const auto xr = get_vector(j, "x_right", "window");
  const auto yb = get_vector(j, "y_bottom", "window");
  const auto yt = get_vector(j, "y_top", "window");
  if (xl.size() != xr.size() || xl.size() != yb.size() || xl.size() != yt.size()) {
    throw ConfigError("window: x_left, x_right, y_bottom, y_top must have equal lengths");
  }
  std::vector<Rect> rects;
  for (std::size_t i = 0; i < xl.size(); ++i) rects.push_back({xl[i], xr[i], yb[i], yt[i]});
  WindowSpec spec{Window(std::move(rects)), std::nullopt, std::nullopt};
  if (j.contains("dilation")) spec.dilation = get_number(j, "dilation", "window");
  if (j.contains("cell")) spec.cell = get_number(j, "cell", "window");
  return spec;
}

WindowSpec read_window_json(const fs::path& path) { return staged(path.string(), [&] { return parse_window(parse_json_file(path)); }); }

ojson window_to_json(const WindowSpec& spec) {
  ojson j;
  std::vector<double> xl, xr, yb, yt;
  for (const Rect& r : spec.window.rects()) {
    xl.push_back(r.x_left);
    xr.push_back(r.x_right);
    yb.push_back(r.y_bottom);
    yt.push_back(r.y_top);
  }
  j["x_left"] = xl;
  j["x_right"] = xr;
  j["y_bottom"] = yb;
  j["y_top"] = yt;
  if (spec.dilation) j["dilation"] = *spec.dilation;
  if (spec.cell) j["cell"] = *spec.cell;
  return j;
}

// --- Config --------------------------------------------------------------------

ThomasControl parse_thomas_control(const json& j) {
  const std::string where = "control";
  check_keys(j, {"NStep", "BurnIn", "SamplingFreq", "Prior_alpha_mean", "Prior_alpha_SD", "Prior_omega_mean",
                 "Prior_omega_SD", "Prior_alphavec_SD", "Prior_omegavec_SD", "Proposal_alpha_SD",
                 "Proposal_omega_SD", "CenterMove_SD"},
             where);
  ThomasControl c;
  if (j.contains("NStep")) c.n_step = get_count(j, "NStep", where);
  if (j.contains("BurnIn")) c.burn_in = get_count(j, "BurnIn", where);
  if (j.contains("SamplingFreq")) c.sampling_freq = get_count(j, "SamplingFreq", where);
  if (j.contains("Prior_alpha_mean")) c.prior_alpha_mean = get_number(j, "Prior_alpha_mean", where);
  if (j.contains("Prior_alpha_SD")) c.prior_alpha_sd = get_number(j, "Prior_alpha_SD", where);
  if (j.contains("Prior_omega_mean")) c.prior_omega_mean = get_number(j, "Prior_omega_mean", where);
  if (j.contains("Prior_omega_SD")) c.prior_omega_sd = get_number(j, "Prior_omega_SD", where);
  if (j.contains("Prior_alphavec_SD")) c.prior_alphavec_sd = get_vector(j, "Prior_alphavec_SD", where);
  if (j.contains("Prior_omegavec_SD")) c.prior_omegavec_sd = get_vector(j, "Prior_omegavec_SD", where);
  if (j.contains("Proposal_alpha_SD")) c.proposal_mu_sd = get_vector(j, "Proposal_alpha_SD", where);
  if (j.contains("Proposal_omega_SD")) c.proposal_nu_sd = get_vector(j, "Proposal_omega_SD", where);
  if (j.contains("CenterMove_SD")) c.center_move_sd = get_number(j, "CenterMove_SD", where);
  return c;
}

GtpControl parse_gtp_control(const json& j) {
  const std::string where = "gtp";
  check_keys(j, {"skappa", "somega", "dlambda", "stheta", "smove", "a_kappa", "b_kappa", "a_omega", "b_omega",
                 "l_lambda", "u_lambda", "a_theta", "b_theta", "iter", "discard", "step", "conn_multiplier",
                 "dilation", "fixed_lambda"},
             where);
  GtpControl c;
  auto num = [&](const char* k, double& dst) {
    if (j.contains(k)) dst = get_number(j, k, where);
  };
  auto opt = [&](const char* k, std::optional<double>& dst) {
    if (j.contains(k)) dst = get_number(j, k, where);
  };
  auto cnt = [&](const char* k, std::size_t& dst) {
    if (j.contains(k)) dst = get_count(j, k, where);
  };
  opt("skappa", c.skappa);
  opt("somega", c.somega);
  opt("stheta", c.stheta);
  num("dlambda", c.dlambda);
  num("smove", c.smove);
  num("a_kappa", c.a_kappa);
  num("b_kappa", c.b_kappa);
  num("a_omega", c.a_omega);
  num("b_omega", c.b_omega);
  num("l_lambda", c.l_lambda);
  num("u_lambda", c.u_lambda);
  num("a_theta", c.a_theta);
  num("b_theta", c.b_theta);
  cnt("iter", c.iter);
  cnt("discard", c.discard);
  cnt("step", c.step);
  cnt("conn_multiplier", c.conn_multiplier);
  opt("dilation", c.dilation);
  opt("fixed_lambda", c.fixed_lambda);
  validate(c);
  return c;
}

RunConfig parse_config(const json& j, const fs::path& base_dir) {
  check_keys(j, {"pattern", "window", "covariates", "z_beta", "z_alpha", "z_omega", "standardize", "control", "gtp",
                 "simulate", "simulate_gtp", "output", "seed"},
             "config");
  RunConfig cfg;
  cfg.base_dir = base_dir;
  auto path_of = [&](const char* key) {
    if (!j.at(key).is_string()) throw ConfigError(std::string("config: '") + key + "' must be a path string");
    return resolve(base_dir, j.at(key).get<std::string>());
  };
  if (j.contains("pattern")) cfg.pattern = path_of("pattern");
  if (j.contains("window")) cfg.window = path_of("window");
  if (j.contains("output")) cfg.output = path_of("output");
  if (j.contains("covariates")) {
    const auto& c = j.at("covariates");
    if (!c.is_object()) throw ConfigError("config: 'covariates' must map names to raster paths");
    for (const auto& [name, p] : c.items()) {
      if (!p.is_string()) throw ConfigError("config: covariate '" + name + "' must map to a path string");
      cfg.rasters[name] = resolve(base_dir, p.get<std::string>());
    }
  }
  if (j.contains("z_beta")) cfg.z_beta = get_names(j, "z_beta", "config");
  if (j.contains("z_alpha")) cfg.z_alpha = get_names(j, "z_alpha", "config");
  if (j.contains("z_omega")) cfg.z_omega = get_names(j, "z_omega", "config");
  if (j.contains("standardize")) {
    if (!j.at("standardize").is_boolean()) throw ConfigError("config: 'standardize' must be true or false");
    cfg.standardize = j.at("standardize").get<bool>();
  }
  if (j.contains("seed")) {
    const auto& s = j.at("seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0)) {
      throw ConfigError("config: 'seed' must be a non-negative integer");
    }
    cfg.seed = s.get<std::uint64_t>();
  }
  if (j.contains("control")) cfg.control = parse_thomas_control(j.at("control"));
  if (j.contains("gtp")) cfg.gtp = parse_gtp_control(j.at("gtp"));
  if (j.contains("simulate")) {
    const auto& s = j.at("simulate");
    check_keys(s, {"kappa", "beta", "mu", "nu", "alpha", "omega"}, "simulate");
    ThomasTruth t;
    if (!s.contains("kappa")) throw ConfigError("simulate: missing 'kappa'");
    t.kappa = get_number(s, "kappa", "simulate");
    if (s.contains("beta")) t.beta = get_vector(s, "beta", "simulate");
    if (s.contains("mu") == s.contains("alpha")) throw ConfigError("simulate: give exactly one of 'mu' or 'alpha'");
    if (s.contains("nu") == s.contains("omega")) throw ConfigError("simulate: give exactly one of 'nu' or 'omega'");
    t.mu = s.contains("mu") ? get_vector(s, "mu", "simulate")
                            : std::vector<double>{std::log(get_number(s, "alpha", "simulate"))};
    t.nu = s.contains("nu") ? get_vector(s, "nu", "simulate")
                            : std::vector<double>{std::log(get_number(s, "omega", "simulate"))};
    cfg.simulate = t;
  }
  if (j.contains("simulate_gtp")) {
    const auto& s = j.at("simulate_gtp");
    check_keys(s, {"kappa", "omega", "lambda", "theta"}, "simulate_gtp");
    for (const char* k : {"kappa", "omega", "lambda", "theta"}) {
      if (!s.contains(k)) throw ConfigError(std::string("simulate_gtp: missing '") + k + "'");
    }
    GtpParams p;
    p.kappa = get_number(s, "kappa", "simulate_gtp");
    p.omega = get_number(s, "omega", "simulate_gtp");
    p.gpd.lambda = get_number(s, "lambda", "simulate_gtp");
    p.gpd.theta = get_number(s, "theta", "simulate_gtp");
    validate(p);
    cfg.simulate_gtp = p;
  }
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  return staged("config " + path.string(), [&] {
    return parse_config(parse_json_file(path), path.has_parent_path() ? path.parent_path() : fs::path("."));
  });
}

DilatedWindow thomas_dilated_window(const WindowSpec& spec) {
  if (!spec.dilation || !(*spec.dilation > 0.0)) {
    throw ConfigError("window: a dilation radius > 0 is required for the inhomogeneous Thomas model");
  }
  const double r = *spec.dilation;
  const double cell = spec.cell.value_or(std::min(default_cell(spec.window), r / 2.0));
  return dilate(spec.window, r, cell);
}

Dataset load_dataset(const RunConfig& cfg, bool need_pattern) {
  if (!cfg.window) throw ConfigError("config: 'window' is required");
  WindowSpec ws = read_window_json(*cfg.window);
  std::vector<Point> pts;
  if (need_pattern) {
    if (!cfg.pattern) throw ConfigError("config: 'pattern' is required");
    pts = read_pattern_csv(*cfg.pattern);
  }
  auto load = [&](const std::vector<std::string>& names) {
    std::vector<RasterCovariate> out;
    for (const auto& n : names) {
      const auto it = cfg.rasters.find(n);
      if (it == cfg.rasters.end()) throw ConfigError("covariate '" + n + "' has no raster path in 'covariates'");
      out.push_back(staged("covariate '" + n + "'", [&] { return read_esri_ascii_file(it->second.string(), n); }));
    }
    return out;
  };
  CovariateSet covs{load(cfg.z_beta), load(cfg.z_alpha), load(cfg.z_omega)};
  covs.validate();
  if (cfg.standardize && (!covs.z_beta.empty() || !covs.z_alpha.empty() || !covs.z_omega.empty())) {
    const DilatedWindow region = thomas_dilated_window(ws);
    for (auto* list : {&covs.z_beta, &covs.z_alpha, &covs.z_omega}) {
      for (auto& c : *list) c = c.standardized(region);
    }
  }
  return Dataset{std::move(pts), std::move(ws), std::move(covs)};
}

// --- Trace files ---------------------------------------------------------------

std::vector<std::string> thomas_trace_header(const ThomasTraceLayout& layout) {
  std::vector<std::string> h{"iter", "kappa"};
  for (std::size_t i = 0; i < layout.n_mu; ++i) h.push_back("mu_" + std::to_string(i));
  for (std::size_t i = 0; i < layout.n_nu; ++i) h.push_back("nu_" + std::to_string(i));
  h.insert(h.end(), {"n_centers", "loglik"});
  for (std::size_t i = 0; i < layout.n_pvalues; ++i) h.push_back("pval_" + std::to_string(i + 1));
  h.insert(h.end(), {"acc_bdm", "acc_mu", "acc_nu"});
  return h;
}

void write_thomas_row(std::ostream& out, const ThomasIteration& it, const ThomasTraceLayout& layout) {
  out << it.iter << ',' << exact(it.kappa);
  for (double v : it.mu) out << ',' << exact(v);
  for (double v : it.nu) out << ',' << exact(v);
  out << ',' << it.n_centers << ',' << exact(it.loglik);
  for (std::size_t i = 0; i < layout.n_pvalues; ++i) out << ',' << (i < it.pvalues.size() ? exact(it.pvalues[i]) : "nan");
  out << ',' << (it.acc_bdm ? 1 : 0) << ',' << (it.acc_mu ? 1 : 0) << ',' << (it.acc_nu ? 1 : 0) << '\n';
}

namespace {

std::vector<std::string> header_line(std::istream& in, const std::string& label) {
  std::string line;
  if (!std::getline(in, line)) throw IoError(label + ": missing header");
  return split_csv(line);
}

std::vector<double> data_row(const std::string& line, std::size_t width, const std::string& label, std::size_t lineno) {
  const auto cells = split_csv(line);
  if (cells.size() != width) {
    throw IoError(label + " row " + std::to_string(lineno) + ": expected " + std::to_string(width) +
                  " fields, got " + std::to_string(cells.size()));
  }
  std::vector<double> v;
  v.reserve(width);
  for (const auto& c : cells) v.push_back(parse_number(c, label, lineno));
  return v;
}

}  // namespace

ThomasTrace read_thomas_trace(std::istream& in, const std::string& label, const ResolvedControl& control) {
  const auto head = header_line(in, label);
  ThomasTraceLayout layout{0, 0, 0};
  for (const auto& h : head) {
    if (h.rfind("mu_", 0) == 0) ++layout.n_mu;
    if (h.rfind("nu_", 0) == 0) ++layout.n_nu;
    if (h.rfind("pval_", 0) == 0) ++layout.n_pvalues;
  }
  if (layout.n_mu == 0 || layout.n_nu == 0 || head != thomas_trace_header(layout)) {
    throw IoError(label + " line 1: header does not match the trace layout");
  }
  ThomasTrace trace;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto v = data_row(line, head.size(), label, lineno);
    ThomasIteration it;
    std::size_t k = 0;
    it.iter = static_cast<std::size_t>(v[k++]);
    it.kappa = v[k++];
    it.mu.assign(v.begin() + static_cast<std::ptrdiff_t>(k), v.begin() + static_cast<std::ptrdiff_t>(k + layout.n_mu));
    k += layout.n_mu;
    it.nu.assign(v.begin() + static_cast<std::ptrdiff_t>(k), v.begin() + static_cast<std::ptrdiff_t>(k + layout.n_nu));
    k += layout.n_nu;
    it.n_centers = static_cast<std::size_t>(v[k++]);
    it.loglik = v[k++];
    it.sampled = control.is_sampled(it.iter);
    for (std::size_t i = 0; i < layout.n_pvalues; ++i, ++k) {
      if (it.sampled) it.pvalues.push_back(v[k]);
    }
    it.acc_bdm = v[k++] != 0.0;
    it.acc_mu = v[k++] != 0.0;
    it.acc_nu = v[k++] != 0.0;
    trace.iterations.push_back(std::move(it));
  }
  return trace;
}

std::vector<std::string> gtp_trace_header() {
  return {"iter",      "kappa",     "omega",      "lambda",    "theta",       "n_centers", "loglik",
          "acc_kappa", "acc_omega", "acc_lambda", "acc_theta", "acc_centers", "acc_conn"};
}

void write_gtp_row(std::ostream& out, const GtpIteration& it) {
  out << it.iter << ',' << exact(it.kappa) << ',' << exact(it.omega) << ',' << exact(it.lambda) << ','
      << exact(it.theta) << ',' << it.n_centers << ',' << exact(it.loglik) << ',' << (it.acc_kappa ? 1 : 0) << ','
      << (it.acc_omega ? 1 : 0) << ',' << (it.acc_lambda ? 1 : 0) << ',' << (it.acc_theta ? 1 : 0) << ','
      << (it.acc_centers ? 1 : 0) << ',' << exact(it.acc_conn) << '\n';
}

GtpTrace read_gtp_trace(std::istream& in, const std::string& label) {
  const auto head = header_line(in, label);
  if (head != gtp_trace_header()) throw IoError(label + " line 1: header does not match the gtp trace layout");
  GtpTrace trace;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto v = data_row(line, head.size(), label, lineno);
    GtpIteration it;
    it.iter = static_cast<std::size_t>(v[0]);
    it.kappa = v[1];
    it.omega = v[2];
    it.lambda = v[3];
    it.theta = v[4];
    it.n_centers = static_cast<std::size_t>(v[5]);
    it.loglik = v[6];
    it.acc_kappa = v[7] != 0.0;
    it.acc_omega = v[8] != 0.0;
    it.acc_lambda = v[9] != 0.0;
    it.acc_theta = v[10] != 0.0;
    it.acc_centers = v[11] != 0.0;
    it.acc_conn = v[12];
    trace.iterations.push_back(it);
  }
  return trace;
}

// --- Commands ------------------------------------------------------------------

Manifest cmd_validate(const CliOptions& opt) {
  const RunConfig cfg = load_with_overrides(opt);
  const Dataset ds = staged("validate", [&] { return load_dataset(cfg, cfg.pattern.has_value()); });
  staged("validate", [&] {
    check_points_in_window(ds.points, ds.window.window);
    if (ds.window.dilation) {
      if (!(*ds.window.dilation > 0.0)) throw ConfigError("window: dilation radius must be > 0");
      ds.covs.check_coverage(thomas_dilated_window(ds.window));
    } else if (!ds.covs.z_beta.empty() || !ds.covs.z_alpha.empty() || !ds.covs.z_omega.empty()) {
      throw ConfigError("window: covariates require a dilation radius > 0");
    }
    return 0;
  });
  if (!opt.quiet) {
    std::cerr << "validate: ok (" << ds.points.size() << " points, window area " << ds.window.window.area() << ", "
              << ds.covs.z_beta.size() << "/" << ds.covs.z_alpha.size() << "/" << ds.covs.z_omega.size()
              << " beta/alpha/omega covariates)\n";
  }
  return Manifest{"validate", {}};
}

Manifest cmd_simulate(const CliOptions& opt) {
  const RunConfig cfg = load_with_overrides(opt);
  if (!cfg.simulate) throw ConfigError("config: 'simulate' block is required for simulate");
  const fs::path out = output_dir(opt, cfg);
  const Dataset ds = staged("simulate", [&] { return load_dataset(cfg, false); });
  const DilatedWindow dil = staged("simulate", [&] { return thomas_dilated_window(ds.window); });
  staged("simulate", [&] {
    ds.covs.check_coverage(dil);
    return 0;
  });
  ThomasParams params{cfg.simulate->kappa, cfg.simulate->beta, cfg.simulate->mu, cfg.simulate->nu};
  Rng rng = make_rng(cfg.seed, "simulate");
  const SimulatedPattern sim = staged("simulate", [&] {
    validate(params, ds.covs);
    return simulate_thomas(params, ds.covs, ds.window.window, dil, rng);
  });
  Manifest m{"simulate", {}};
  write_simulation(out, sim, m);
  write_manifest(out, m);
  if (!opt.quiet) std::cerr << "simulate: " << sim.points.size() << " points, " << sim.parents.size() << " parents\n";
  return m;
}

Manifest cmd_simulate_gtp(const CliOptions& opt) {
  const RunConfig cfg = load_with_overrides(opt);
  if (!cfg.simulate_gtp) throw ConfigError("config: 'simulate_gtp' block is required for simulate-gtp");
  const fs::path out = output_dir(opt, cfg);
  if (!cfg.window) throw ConfigError("config: 'window' is required");
  const WindowSpec ws = read_window_json(*cfg.window);
  Rng rng = make_rng(cfg.seed, "simulate-gtp");
  const SimulatedPattern sim =
      staged("simulate-gtp", [&] { return rgtp(*cfg.simulate_gtp, ws.window, rng, ws.cell); });
  Manifest m{"simulate-gtp", {}};
  write_simulation(out, sim, m);
  write_manifest(out, m);
  if (!opt.quiet) std::cerr << "simulate-gtp: " << sim.points.size() << " points, " << sim.parents.size() << " parents\n";
  return m;
}

namespace {

struct ThomasRunMeta {
  ResolvedControl rc;
  std::vector<std::string> beta_names;
  std::vector<double> beta_hat;
};

void emit_thomas_outputs(const fs::path& dir, const ThomasTrace& trace, const ThomasRunMeta& meta,
                         const std::optional<Surfaces>& surfaces, const ojson& extra, Manifest& m) {
  const PosteriorSummary summary = staged("summary", [&] { return summarize(trace, meta.beta_names); });
  ReportInput in = report_input(trace, summary, meta.beta_names);
  if (surfaces) {
    in.surfaces = {surfaces->intensity, surfaces->alpha, surfaces->omega};
    for (const auto* r : {&surfaces->intensity, &surfaces->alpha, &surfaces->omega}) {
      const std::string name = "surface_" + r->name() + ".asc";
      std::ostringstream s;
      write_esri_ascii(s, *r);
      write_text(dir / name, s.str());
      m.files.push_back(name);
    }
  }
  const auto plots = staged("plots", [&] { return emit_plots(in, dir / "plots"); });
  for (const auto& p : plots) m.files.push_back(rel(p, dir));

  ojson j = to_json(summary);
  auto betas = ojson::array();
  for (std::size_t i = 0; i < meta.beta_names.size(); ++i) {
    betas.push_back({{"covariate", meta.beta_names[i]},
                     {"estimate", meta.beta_hat[i]},
                     {"note", "Poisson-approximation estimate; significance via posterior median p-value"}});
  }
  j["beta_hat"] = std::move(betas);
  j["priors"] = priors_json(meta.rc);
  for (const auto& [k, v] : extra.items()) j[k] = v;
  write_text(dir / "summary.json", j.dump(2) + "\n");
  m.files.push_back("summary.json");
}

Manifest fit_thomas_chain(const CliOptions& opt, const RunConfig& cfg, const Dataset& ds, const DilatedWindow& dil,
                          const fs::path& dir, std::uint64_t seed, const std::string& label) {
  ensure_dir(dir);
  Manifest m{"fit", {}};

  const QuadratureGrid grid_w = make_grid(ds.window.window, dil.cell());
  std::vector<double> beta_hat;
  if (!ds.covs.z_beta.empty()) {
    const PoissonFit fit = staged("step 1 (Poisson fit)", [&] {
      return PoissonRegression(ds.covs.z_beta, grid_w).fit(ds.points);
    });
    beta_hat = fit.slopes();
  }
  const ThomasProblem problem =
      staged("step 2 setup", [&] { return ThomasProblem(ds.points, ds.covs, ds.window.window, dil, beta_hat); });
  ThomasControl control = cfg.control;
  control.seed = seed;
  const ResolvedControl rc = staged("control", [&] {
    return resolve_control(control, ds.points.size(), ds.window.window, ds.covs.z_alpha.size(),
                           ds.covs.z_omega.size());
  });
  if (!opt.quiet) std::cerr << label << "effective priors: " << priors_json(rc).dump() << '\n';

  const ThomasTraceLayout layout{rc.prior_mu_mean.size(), rc.prior_nu_mean.size(), ds.covs.z_beta.size()};
  std::ofstream trace_csv(dir / "trace.csv", std::ios::binary), diag_csv(dir / "diagnostics.csv", std::ios::binary);
  if (!trace_csv || !diag_csv) throw IoError("cannot write trace files in " + dir.string());
  const auto header = thomas_trace_header(layout);
  for (std::size_t i = 0; i < header.size(); ++i) {
    trace_csv << (i ? "," : "") << header[i];
    diag_csv << (i ? "," : "") << header[i];
  }
  trace_csv << '\n';
  diag_csv << '\n';
  const Progress progress(opt.quiet, label + "fit", rc.n_step);

  ThomasTrace trace;
  try {
    trace = run_chain(problem, rc, [&](const ThomasIteration& it) {
      if (it.sampled) write_thomas_row(trace_csv, it, layout);
      write_thomas_row(diag_csv, it, layout);
      progress(it.iter);
    });
  } catch (const ChainError& e) {
    trace_csv.close();
    diag_csv.close();
    write_text(dir / "state_dump.json", e.state_dump() + "\n");
    throw;
  }
  trace_csv.close();
  diag_csv.close();
  if (!trace_csv || !diag_csv) throw IoError("write failed for trace files in " + dir.string());
  m.files.insert(m.files.end(), {"trace.csv", "diagnostics.csv"});

  const ThomasRunMeta meta{rc, names_of(ds.covs.z_beta), beta_hat};
  const Surfaces surf = estimated_surfaces(summarize(trace, meta.beta_names), beta_hat, ds.covs, dil);
  ojson extra;
  extra["moves"] = {{"birth", {{"proposed", trace.birth.proposed}, {"accepted", trace.birth.accepted}}},
                    {"death", {{"proposed", trace.death.proposed}, {"accepted", trace.death.accepted}}},
                    {"move", {{"proposed", trace.move.proposed}, {"accepted", trace.move.accepted}}}};
  emit_thomas_outputs(dir, trace, meta, surf, extra, m);

  ojson run;
  run["mode"] = "fit";
  run["priors"] = priors_json(rc);
  run["seed"] = seed;
  run["z_beta"] = meta.beta_names;
  run["beta_hat"] = beta_hat;
  run["z_alpha"] = names_of(ds.covs.z_alpha);
  run["z_omega"] = names_of(ds.covs.z_omega);
  run["moves"] = extra["moves"];
  write_text(dir / "run.json", run.dump(2) + "\n");
  m.files.push_back("run.json");
  write_manifest(dir, m);
  return m;
}

void emit_gtp_outputs(const fs::path& dir, const GtpTrace& trace, const GtpControl& control, Manifest& m) {
  const GtpSummary gs = staged("summary", [&] { return summarize_gtp(trace, control.discard, control.step); });
  const ReportInput in = report_input(trace, gs, control.discard, control.step);
  const auto plots = staged("plots", [&] { return emit_plots(in, dir / "plots"); });
  for (const auto& p : plots) m.files.push_back(rel(p, dir));
  ojson j = to_json(summarize(gs));
  j["verdict"] = gs.verdict();
  j["settings"] = gtp_settings_json(control);
  write_text(dir / "summary.json", j.dump(2) + "\n");
  m.files.push_back("summary.json");
}

Manifest fit_gtp_chain(const CliOptions& opt, const RunConfig& cfg, const Dataset& ds, const fs::path& dir,
                       std::uint64_t seed, const std::string& label) {
  ensure_dir(dir);
  Manifest m{"fit-gtp", {}};
  GtpControl control = cfg.gtp;
  control.seed = seed;
  std::ofstream trace_csv(dir / "trace.csv", std::ios::binary);
  if (!trace_csv) throw IoError("cannot write " + (dir / "trace.csv").string());
  const auto header = gtp_trace_header();
  for (std::size_t i = 0; i < header.size(); ++i) trace_csv << (i ? "," : "") << header[i];
  trace_csv << '\n';
  const Progress progress(opt.quiet, label + "fit-gtp", control.iter);
  GtpTrace trace;
  try {
    trace = staged("fit-gtp", [&] {
      return estgtp(ds.points, ds.window.window, control, [&](const GtpIteration& it) {
        write_gtp_row(trace_csv, it);
        progress(it.iter);
      });
    });
  } catch (const GtpChainError& e) {
    trace_csv.close();
    write_text(dir / "state_dump.json", e.state_dump() + "\n");
    throw;
  }
  trace_csv.close();
  if (!trace_csv) throw IoError("write failed: " + (dir / "trace.csv").string());
  m.files.push_back("trace.csv");
  emit_gtp_outputs(dir, trace, control, m);
  ojson run;
  run["mode"] = "fit-gtp";
  run["settings"] = gtp_settings_json(control);
  run["seed"] = seed;
  write_text(dir / "run.json", run.dump(2) + "\n");
  m.files.push_back("run.json");
  write_manifest(dir, m);
  return m;
}

template <class ChainFn>
Manifest run_multi(const CliOptions& opt, const fs::path& out, std::uint64_t root, const std::string& command,
                   ChainFn&& chain) {
  if (opt.chains == 0) throw ConfigError("--chains must be >= 1");
  std::vector<Manifest> parts(opt.chains);
  run_chains(opt.chains, [&](std::size_t k) {
    const bool multi = opt.chains > 1;
    const fs::path dir = multi ? out / ("chain_" + std::to_string(k + 1)) : out;
    const std::string label = multi ? "[chain " + std::to_string(k + 1) + "] " : "";
    parts[k] = chain(dir, chain_seed(root, k, opt.chains), label);
  });
  if (opt.chains == 1) return parts[0];
  Manifest all{command, {}};
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::string prefix = "chain_" + std::to_string(k + 1) + "/";
    for (const auto& f : parts[k].files) all.files.push_back(prefix + f);
    all.files.push_back(prefix + "manifest.json");
  }
  write_manifest(out, all);
  return all;
}

}  // namespace

Manifest cmd_fit_thomas(const CliOptions& opt) {
  const RunConfig cfg = load_with_overrides(opt);
  const fs::path out = output_dir(opt, cfg);
  const Dataset ds = staged("load", [&] { return load_dataset(cfg, true); });
  const DilatedWindow dil = staged("window", [&] { return thomas_dilated_window(ds.window); });
  staged("validate", [&] {
    check_points_in_window(ds.points, ds.window.window);
    ds.covs.check_coverage(dil);
    if (ds.points.empty()) throw ValidationError("point pattern is empty");
    return 0;
  });
  return run_multi(opt, out, cfg.seed, "fit", [&](const fs::path& dir, std::uint64_t seed, const std::string& label) {
    return fit_thomas_chain(opt, cfg, ds, dil, dir, seed, label);
  });
}

Manifest cmd_fit_gtp(const CliOptions& opt) {
  const RunConfig cfg = load_with_overrides(opt);
  const fs::path out = output_dir(opt, cfg);
  const Dataset ds = staged("load", [&] { return load_dataset(cfg, true); });
  staged("validate", [&] {
    check_points_in_window(ds.points, ds.window.window);
    if (ds.points.empty()) throw ValidationError("point pattern is empty");
    return 0;
  });
  return run_multi(opt, out, cfg.seed, "fit-gtp",
                   [&](const fs::path& dir, std::uint64_t seed, const std::string& label) {
                     return fit_gtp_chain(opt, cfg, ds, dir, seed, label);
                   });
}

Manifest cmd_report(const CliOptions& opt) {
  if (!opt.out) throw ConfigError("report: --out must name an existing run directory");
  const fs::path dir = *opt.out;
  const json run = staged("report", [&] { return parse_json_file(dir / "run.json"); });
  const std::string mode = run.value("mode", "");
  Manifest m{"report", {}};
  if (mode == "fit") {
    ThomasControl c;
    const auto& pr = run.at("priors");
    c.n_step = pr.at("NStep").get<std::size_t>();
    c.burn_in = pr.at("BurnIn").get<std::size_t>();
    c.sampling_freq = pr.at("SamplingFreq").get<std::size_t>();
    ThomasRunMeta meta;
    meta.rc.n_step = c.n_step;
    meta.rc.burn_in = c.burn_in;
    meta.rc.sampling_freq = c.sampling_freq;
    meta.rc.prior_mu_mean = {pr.at("Prior_alpha_mean").get<double>()};
    meta.rc.prior_mu_sd = {pr.at("Prior_alpha_SD").get<double>()};
    for (double v : pr.at("Prior_alphavec_SD")) {
      meta.rc.prior_mu_mean.push_back(0.0);
      meta.rc.prior_mu_sd.push_back(v);
    }
    meta.rc.prior_nu_mean = {pr.at("Prior_omega_mean").get<double>()};
    meta.rc.prior_nu_sd = {pr.at("Prior_omega_SD").get<double>()};
    for (double v : pr.at("Prior_omegavec_SD")) {
      meta.rc.prior_nu_mean.push_back(0.0);
      meta.rc.prior_nu_sd.push_back(v);
    }
    meta.rc.proposal_mu_sd = pr.at("Proposal_alpha_SD").get<std::vector<double>>();
    meta.rc.proposal_nu_sd = pr.at("Proposal_omega_SD").get<std::vector<double>>();
    meta.rc.center_move_sd = pr.at("CenterMove_SD").get<double>();
    meta.beta_names = run.at("z_beta").get<std::vector<std::string>>();
    meta.beta_hat = run.at("beta_hat").get<std::vector<double>>();

    auto read = [&](const char* name) {
      std::ifstream f(dir / name);
      if (!f) throw IoError("cannot open " + (dir / name).string());
      return read_thomas_trace(f, (dir / name).string(), meta.rc);
    };
    const ThomasTrace recorded = read("trace.csv");
    ThomasTrace full = read("diagnostics.csv");
    if (recorded.iterations.size() != full.sampled().size()) {
      throw IoError((dir / "trace.csv").string() + ": has " + std::to_string(recorded.iterations.size()) +
                    " rows but the diagnostics file has " + std::to_string(full.sampled().size()) +
                    " sampled iterations");
    }
    std::optional<Surfaces> surf;
    if (!opt.config.empty()) {
      const RunConfig cfg = load_with_overrides(opt);
      const Dataset ds = staged("load", [&] { return load_dataset(cfg, false); });
      const DilatedWindow dil = thomas_dilated_window(ds.window);
      surf = estimated_surfaces(summarize(full, meta.beta_names), meta.beta_hat, ds.covs, dil);
    }
    ojson extra = ojson::object();
    if (run.contains("moves")) {
      for (const char* k : {"birth", "death", "move"}) {
        const auto& t = run.at("moves").at(k);
        extra["moves"][k] = {{"proposed", t.at("proposed")}, {"accepted", t.at("accepted")}};
      }
    }
    emit_thomas_outputs(dir, full, meta, surf, extra, m);
  } else if (mode == "fit-gtp") {
    const GtpControl control = parse_gtp_control(run.at("settings"));
    std::ifstream f(dir / "trace.csv");
    if (!f) throw IoError("cannot open " + (dir / "trace.csv").string());
    const GtpTrace trace = read_gtp_trace(f, (dir / "trace.csv").string());
    emit_gtp_outputs(dir, trace, control, m);
  } else {
    throw ConfigError("report: " + (dir / "run.json").string() + " has unknown mode '" + mode + "'");
  }
  ojson j;
  j["command"] = "report";
  std::sort(m.files.begin(), m.files.end());
  j["files"] = m.files;
  write_text(dir / "report_manifest.json", j.dump(2) + "\n");
  return m;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ValidationError*>(&e) ||
      dynamic_cast<const EvaluationError*>(&e) || dynamic_cast<const IoError*>(&e)) {
    return 2;
  }
  return 3;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Cluster point process simulation and Bayesian fitting"};
  app.require_subcommand(1);
  CliOptions opt;
  std::uint64_t seed = 0;

  struct Sub {
    const char* name;
    const char* help;
    Manifest (*fn)(const CliOptions&);
  };
  const Sub subs[] = {
      {"validate", "Check a configuration and its data files", cmd_validate},
      {"simulate", "Simulate an inhomogeneous Thomas process", cmd_simulate},
      {"simulate-gtp", "Simulate a generalised Thomas process", cmd_simulate_gtp},
      {"fit", "Two-step fit of the inhomogeneous Thomas process", cmd_fit_thomas},
      {"fit-gtp", "Fit the generalised Thomas process", cmd_fit_gtp},
      {"report", "Re-render plots and summaries from a finished run", cmd_report},
  };
  std::vector<std::pair<CLI::App*, const Sub*>> registered;
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    auto* cfg_opt = sub->add_option("--config", opt.config, "Run configuration (JSON)");
    if (std::string(s.name) != "report") cfg_opt->required();
    sub->add_option("--out", opt.out, "Output directory");
    sub->add_option("--seed", seed, "Root seed (overrides the config)");
    sub->add_option("--chains", opt.chains, "Independent chains, run concurrently")->check(CLI::PositiveNumber);
    sub->add_flag("--quiet", opt.quiet, "Suppress progress output");
    sub->add_flag("--standardize", opt.standardize, "Standardize covariates over the dilated window");
    registered.emplace_back(sub, &s);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  for (const auto& [sub, s] : registered) {
    if (!sub->parsed()) continue;
    if (sub->count("--seed")) opt.seed = seed;
    try {
      s->fn(opt);
      return 0;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      if (const auto* ce = dynamic_cast<const ChainError*>(&e)) {
        std::cerr << "chain state at iteration " << ce->iteration() << " written to state_dump.json\n";
      }
      return exit_code_for(e);
    }
  }
  return 2;
}

}  // namespace nsc
