#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "nsc/errors.hpp"
#include "nsc/frontend.hpp"
#include "oracles.hpp"

using namespace nsc;
using nlohmann::json;

namespace {

const fs::path kData = NSC_DATA_DIR;

// Fresh scratch directory per test.
class Frontend : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("nsc_frontend_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(dir_ / name) << text;
    return dir_ / name;
  }
  fs::path write_json(const std::string& name, const json& j) const { return write(name, j.dump()); }

  fs::path window(double dilation = 0.1) const {
    return write_json("window.json", {{"x_left", 0}, {"x_right", 1}, {"y_bottom", 0}, {"y_top", 1},
                                      {"dilation", dilation}});
  }

  CliOptions opts(const fs::path& config, const fs::path& out) const {
    CliOptions o;
    o.config = config;
    o.out = out;
    o.quiet = true;
    return o;
  }

  fs::path dir_;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream f(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(f, line)) n += line.empty() ? 0 : 1;
  return n;
}

template <class E, class F>
std::string error_of(F&& f) {
  try {
    f();
  } catch (const E& e) {
    return e.what();
  } catch (const std::exception& e) {
    return std::string("wrong exception type: ") + e.what();
  }
  return "no exception";
}

int run_cli_quiet(const std::string& args) {
  const std::string cmd = std::string(NSC_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void expect_manifest_complete(const fs::path& dir) {
  const json m = json::parse(slurp(dir / "manifest.json"));
  ASSERT_FALSE(m["files"].empty());
  for (const auto& f : m["files"]) {
    const fs::path p = dir / f.get<std::string>();
    EXPECT_TRUE(fs::exists(p)) << p;
    if (fs::exists(p)) EXPECT_GT(fs::file_size(p), 0u) << p;
  }
}

}  // namespace

TEST_F(Frontend, PatternCsvErrorsNameTheLine) {
  std::istringstream bad_header("a,b\n1,2\n");
  EXPECT_NE(error_of<IoError>([&] { read_pattern_csv(bad_header, "p.csv"); }).find("line 1"), std::string::npos);
  std::istringstream bad_number("x,y\n0.1,0.2\n0.3,abc\n");
  const auto msg = error_of<IoError>([&] { read_pattern_csv(bad_number, "p.csv"); });
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
  std::istringstream ok("x,y\n0.1,0.2\n\n0.3,0.4\n");
  EXPECT_EQ(read_pattern_csv(ok, "p.csv").size(), 2u);
}

TEST_F(Frontend, PatternCsvRoundTripIsExact) {
  const std::vector<Point> pts{{0.1, 1.0 / 3.0}, {std::nextafter(0.5, 1.0), 1e-300}};
  std::stringstream s;
  write_pattern_csv(s, pts);
  EXPECT_EQ(read_pattern_csv(s, "rt"), pts);
}

TEST_F(Frontend, WindowParsing) {
  const auto spec = parse_window(json{{"x_left", {0, 1}}, {"x_right", {1, 2}}, {"y_bottom", {0, 0}}, {"y_top", {1, 1}}});
  EXPECT_DOUBLE_EQ(spec.window.area(), 2.0);
  EXPECT_FALSE(spec.dilation.has_value());
  EXPECT_THROW(parse_window(json{{"x_left", 0}, {"x_right", 1}, {"y_bottom", 0}}), ConfigError);
  EXPECT_THROW(parse_window(json{{"x_left", {0, 1}}, {"x_right", 1}, {"y_bottom", 0}, {"y_top", 1}}), ConfigError);
  EXPECT_THROW(parse_window(json{{"x_left", 0}, {"x_right", 1}, {"y_bottom", 0}, {"y_top", 1}, {"radius", 1}}),
               ConfigError);
}

TEST_F(Frontend, ConfigRejectsUnknownKeysAndBadTypes) {
  EXPECT_THROW(parse_config(json{{"pattern", "a.csv"}, {"mode", "fit"}}, dir_), ConfigError);
  EXPECT_THROW(parse_config(json{{"control", {{"NStepp", 10}}}}, dir_), ConfigError);
  EXPECT_THROW(parse_config(json{{"control", {{"NStep", "ten"}}}}, dir_), ConfigError);
  EXPECT_THROW(parse_config(json{{"seed", -1}}, dir_), ConfigError);
  EXPECT_THROW(parse_config(json{{"simulate", {{"kappa", 1}, {"alpha", 2}}}}, dir_), ConfigError);
  EXPECT_THROW(parse_config(json{{"simulate", {{"kappa", 1}, {"alpha", 2}, {"mu", 1}, {"omega", 0.1}}}}, dir_),
               ConfigError);
  EXPECT_THROW(parse_config(json{{"gtp", {{"u_lambda", 1.0}}}}, dir_), ConfigError);
  const RunConfig c = parse_config(
      json{{"pattern", "sub/p.csv"}, {"control", {{"NStep", 10}, {"Prior_alpha_mean", 2.0}}}, {"seed", 5}}, dir_);
  EXPECT_EQ(*c.pattern, dir_ / "sub/p.csv");
  EXPECT_EQ(c.control.n_step, 10u);
  EXPECT_EQ(c.seed, 5u);
  const fs::path bad = write("broken.json", "{\"pattern\": ");
  EXPECT_THROW(load_config(bad), ConfigError);
}

TEST_F(Frontend, SharedBetaAlphaCovariateIsRejected) {
  window();
  write("p.csv", "x,y\n0.5,0.5\n");
  const auto cfg = write_json("c.json", {{"pattern", "p.csv"},
                                         {"window", "window.json"},
                                         {"covariates", {{"slope", (kData / "elevation.asc").string()}}},
                                         {"z_beta", {"slope"}},
                                         {"z_alpha", {"slope"}}});
  const auto msg = error_of<ValidationError>([&] { cmd_validate(opts(cfg, dir_ / "out")); });
  EXPECT_NE(msg.find("slope"), std::string::npos) << msg;
}

TEST_F(Frontend, PointOutsideWindowNamesCoordinates) {
  window();
  write("p.csv", "x,y\n0.5,0.5\n1.25,0.5\n");
  const auto cfg = write_json("c.json", {{"pattern", "p.csv"}, {"window", "window.json"}});
  const auto msg = error_of<ValidationError>([&] { cmd_validate(opts(cfg, dir_ / "out")); });
  EXPECT_NE(msg.find("1.25"), std::string::npos) << msg;
  EXPECT_NE(msg.find("point 2"), std::string::npos) << msg;
}

TEST_F(Frontend, UncoveredRasterNamesCovariate) {
  window(0.1);
  write("p.csv", "x,y\n0.5,0.5\n");
  // Covers only [0, 1]^2, not the dilated window.
  std::ostringstream asc;
  asc << "ncols 10\nnrows 10\nxllcorner 0\nyllcorner 0\ncellsize 0.1\nNODATA_value -9999\n";
  for (int r = 0; r < 10; ++r) {
    for (int c = 0; c < 10; ++c) asc << (c ? " " : "") << 1.0;
    asc << "\n";
  }
  write("small.asc", asc.str());
  const auto cfg = write_json("c.json", {{"pattern", "p.csv"},
                                         {"window", "window.json"},
                                         {"covariates", {{"soil", "small.asc"}}},
                                         {"z_beta", {"soil"}}});
  const auto msg = error_of<ValidationError>([&] { cmd_validate(opts(cfg, dir_ / "out")); });
  EXPECT_NE(msg.find("soil"), std::string::npos) << msg;
  EXPECT_THROW(cmd_fit_thomas(opts(cfg, dir_ / "out")), ValidationError);
}

TEST_F(Frontend, ValidateAcceptsFixtures) {
  CliOptions o;
  o.quiet = true;
  for (const char* f : {"fit_thomas.json", "fit_gtp.json", "fit_inhom.json"}) {
    o.config = kData / f;
    EXPECT_NO_THROW(cmd_validate(o)) << f;
  }
}

TEST_F(Frontend, TenStepsGiveTenTraceRows) {
  window();
  fs::copy(kData / "pattern_thomas.csv", dir_ / "p.csv");
  const auto cfg = write_json("c.json", {{"pattern", "p.csv"},
                                         {"window", "window.json"},
                                         {"control", {{"NStep", 10}, {"BurnIn", 0}, {"SamplingFreq", 1}}},
                                         {"seed", 3}});
  const fs::path out = dir_ / "out";
  cmd_fit_thomas(opts(cfg, out));
  EXPECT_EQ(count_lines(out / "trace.csv"), 11u);
  EXPECT_EQ(count_lines(out / "diagnostics.csv"), 11u);
  expect_manifest_complete(out);
  const json s = json::parse(slurp(out / "summary.json"));
  EXPECT_EQ(s["samples"], 10);
}

TEST_F(Frontend, SameSeedSameSummary) {
  window();
  fs::copy(kData / "pattern_thomas.csv", dir_ / "p.csv");
  const auto cfg = write_json("c.json", {{"pattern", "p.csv"},
                                         {"window", "window.json"},
                                         {"control", {{"NStep", 300}, {"BurnIn", 100}, {"SamplingFreq", 2}}},
                                         {"seed", 8}});
  cmd_fit_thomas(opts(cfg, dir_ / "a"));
  cmd_fit_thomas(opts(cfg, dir_ / "b"));
  auto o = opts(cfg, dir_ / "c");
  o.seed = 9;
  cmd_fit_thomas(o);
  EXPECT_EQ(slurp(dir_ / "a/summary.json"), slurp(dir_ / "b/summary.json"));
  EXPECT_EQ(slurp(dir_ / "a/trace.csv"), slurp(dir_ / "b/trace.csv"));
  EXPECT_NE(slurp(dir_ / "a/trace.csv"), slurp(dir_ / "c/trace.csv"));
}

TEST_F(Frontend, SimulateFitReportRoundTrip) {
  window(0.12);
  const auto sim_cfg = write_json(
      "sim.json", {{"window", "window.json"}, {"simulate", {{"kappa", 20}, {"alpha", 5}, {"omega", 0.03}}}, {"seed", 4}});
  cmd_simulate(opts(sim_cfg, dir_ / "sim"));
  expect_manifest_complete(dir_ / "sim");
  const auto pts = read_pattern_csv(dir_ / "sim/pattern.csv");
  ASSERT_GT(pts.size(), 10u);

  const auto fit_cfg = write_json("fit.json", {{"pattern", "sim/pattern.csv"},
                                               {"window", "window.json"},
                                               {"control", {{"NStep", 200}, {"BurnIn", 50}, {"SamplingFreq", 5}}}});
  const fs::path out = dir_ / "fit";
  cmd_fit_thomas(opts(fit_cfg, out));
  expect_manifest_complete(out);
  const std::string summary = slurp(out / "summary.json");

  CliOptions rep;
  rep.out = out;
  rep.quiet = true;
  cmd_report(rep);
  EXPECT_EQ(slurp(out / "summary.json"), summary);
  EXPECT_TRUE(fs::exists(out / "report_manifest.json"));

  // Drop the last field of the third data row.
  std::ifstream in(out / "trace.csv");
  std::ostringstream cut;
  std::string line;
  for (int i = 0; std::getline(in, line); ++i) {
    if (i == 3) line = line.substr(0, line.rfind(','));
    cut << line << '\n';
  }
  in.close();
  std::ofstream(out / "trace.csv") << cut.str();
  const auto msg = error_of<IoError>([&] { cmd_report(rep); });
  EXPECT_NE(msg.find("row 4"), std::string::npos) << msg;
}

TEST_F(Frontend, GtpFitAndReport) {
  const fs::path out = dir_ / "gtp";
  const auto cfg = write_json("g.json", {{"pattern", (kData / "pattern_gtp.csv").string()},
                                         {"window", (kData / "window.json").string()},
                                         {"gtp", {{"iter", 200}, {"discard", 50}, {"step", 2}}}});
  cmd_fit_gtp(opts(cfg, out));
  expect_manifest_complete(out);
  EXPECT_EQ(count_lines(out / "trace.csv"), 201u);
  const json s = json::parse(slurp(out / "summary.json"));
  EXPECT_TRUE(s.contains("verdict"));
  CliOptions rep;
  rep.out = out;
  rep.quiet = true;
  EXPECT_NO_THROW(cmd_report(rep));
}

TEST_F(Frontend, MultipleChainsGetDistinctSeeds) {
  const fs::path out = dir_ / "multi";
  const auto cfg = write_json("g.json", {{"pattern", (kData / "pattern_gtp.csv").string()},
                                         {"window", (kData / "window.json").string()},
                                         {"gtp", {{"iter", 50}, {"discard", 10}}}});
  auto o = opts(cfg, out);
  o.chains = 2;
  cmd_fit_gtp(o);
  expect_manifest_complete(out);
  EXPECT_NE(slurp(out / "chain_1/trace.csv"), slurp(out / "chain_2/trace.csv"));
}

TEST_F(Frontend, GtpWithPoissonClustersMatchesThomasCounts) {
  window(0.12);
  const auto thomas = write_json(
      "t.json", {{"window", "window.json"}, {"simulate", {{"kappa", 25}, {"alpha", 4}, {"omega", 0.03}}}});
  const auto gtp = write_json(
      "g.json", {{"window", "window.json"},
                 {"simulate_gtp", {{"kappa", 25}, {"omega", 0.03}, {"lambda", 0.0}, {"theta", 4}}}});
  std::vector<double> a, b;
  for (std::uint64_t rep = 0; rep < 200; ++rep) {
    auto o = opts(thomas, dir_ / "t");
    o.seed = 1000 + rep;
    cmd_simulate(o);
    a.push_back(static_cast<double>(read_pattern_csv(dir_ / "t/pattern.csv").size()));
    o = opts(gtp, dir_ / "g");
    o.seed = 5000 + rep;
    cmd_simulate_gtp(o);
    b.push_back(static_cast<double>(read_pattern_csv(dir_ / "g/pattern.csv").size()));
  }
  EXPECT_GT(oracle::ks2_pvalue(a, b), 0.01);
}

TEST_F(Frontend, ExitCodes) {
  window();
  fs::copy(kData / "pattern_thomas.csv", dir_ / "p.csv");
  const auto good = write_json("good.json", {{"pattern", "p.csv"}, {"window", "window.json"}});
  const auto unknown = write_json("bad.json", {{"pattern", "p.csv"}, {"mode", "fit"}});
  write("outside.csv", "x,y\n2,2\n");
  const auto outside = write_json("out.json", {{"pattern", "outside.csv"}, {"window", "window.json"}});
  EXPECT_EQ(run_cli_quiet("validate --config " + good.string()), 0);
  EXPECT_EQ(run_cli_quiet("validate --config " + unknown.string()), 2);
  EXPECT_EQ(run_cli_quiet("validate --config " + outside.string()), 2);
  EXPECT_EQ(run_cli_quiet("validate"), 2);
  EXPECT_EQ(run_cli_quiet("frobnicate"), 2);
  EXPECT_EQ(run_cli_quiet("fit --config " + good.string() + " --chains 0"), 2);
  EXPECT_EQ(run_cli_quiet("report --out " + (dir_ / "missing").string()), 2);
  EXPECT_EQ(run_cli_quiet("--help"), 0);

  EXPECT_EQ(exit_code_for(ConfigError("x")), 2);
  EXPECT_EQ(exit_code_for(IoError("x")), 2);
  EXPECT_EQ(exit_code_for(NumericError("x")), 3);
  EXPECT_EQ(exit_code_for(std::runtime_error("x")), 3);
}

TEST_F(Frontend, MissingOutputDirectoryIsAConfigError) {
  window();
  fs::copy(kData / "pattern_thomas.csv", dir_ / "p.csv");
  const auto cfg = write_json("c.json", {{"pattern", "p.csv"}, {"window", "window.json"}});
  CliOptions o;
  o.config = cfg;
  o.quiet = true;
  EXPECT_THROW(cmd_fit_thomas(o), ConfigError);
}
