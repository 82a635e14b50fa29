#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "spurious/experiment.hpp"

using namespace spurious;
namespace fs = std::filesystem;

namespace {

ExperimentConfig parse(const std::string& text) {
  std::vector<std::string> d;
  ExperimentConfig c = config_from_json(json::parse(text), d);
  EXPECT_TRUE(d.empty()) << d.front();
  return c;
}

bool mentions(const std::vector<std::string>& diags, const std::string& what) {
  for (const auto& d : diags)
    if (d.find(what) != std::string::npos) return true;
  return false;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("spurious_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct CliResult {
  int status;
  std::string err;
};

CliResult cli(const std::string& args, const fs::path& dir) {
  const std::string cmd = std::string(SPURIOUS_CLI_PATH) + " " + args + " 2> " + (dir / "stderr.txt").string() + " > " +
                          (dir / "stdout.txt").string();
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(dir / "stderr.txt")};
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

const char* kScalar = R"({"command": "path-linear", "seed": 1,
  "tolerances": {"endpoint_tol": 1e-9},
  "params": {"sigma_x": [[1.0]], "sigma_xy": [[2.0]], "sigma_y": [[4.0]],
             "widths": [1], "layers": [[[0.5]], [[-0.3]]]}})";

}  // namespace

TEST(Validate, FullyValidConfigHasNoDiagnostics) {
  EXPECT_TRUE(validate(parse(kScalar)).empty());
  EXPECT_TRUE(validate(parse(R"({"command": "quadrature", "params": {"p_list": [8, 16]}})")).empty());
  EXPECT_TRUE(validate(parse(R"({"command": "adversarial", "params": {"n": 3, "p": 2, "M": 10}})")).empty());
}

TEST(Validate, QuadraticWidthGate) {
  const auto d = validate(parse(R"({"command": "path-quadratic", "params": {"n": 3, "p": 6}})"));
  ASSERT_EQ(d.size(), 1u);
  EXPECT_TRUE(mentions(d, "params.p"));
  EXPECT_TRUE(mentions(d, "p >= 2n+1"));
}

TEST(Validate, EmptyWidthListForQuadrature) {
  EXPECT_TRUE(mentions(validate(parse(R"({"command": "quadrature", "params": {"p_list": []}})")), "params.p_list"));
}

TEST(Validate, AdversarialRegionGates) {
  EXPECT_TRUE(mentions(validate(parse(R"({"command": "adversarial", "params": {"n": 3, "p": 1, "M": 10}})")),
                       "region degenerate"));
  EXPECT_TRUE(mentions(validate(parse(R"({"command": "adversarial", "params": {"n": 2, "p": 2, "M": 10}})")),
                       "params.n"));
  EXPECT_TRUE(mentions(
      validate(parse(R"({"command": "adversarial", "params": {"n": 3, "p": 2, "M": 10, "activation": "erf"}})")),
      "params.activation"));
}

TEST(Validate, GenericKeysAreNamed) {
  EXPECT_TRUE(mentions(validate(parse(R"({"command": "dim", "grid_points": 10, "params": {"n": 2}})")), "grid_points"));
  EXPECT_TRUE(mentions(validate(parse(R"({"command": "nope"})")), "command"));
  EXPECT_TRUE(mentions(validate(parse(R"({"command": "dim", "tolerances": {"mono_tol": 0}, "params": {"n": 2}})")),
                       "tolerances.mono_tol"));
  EXPECT_TRUE(mentions(validate(parse(R"({"command": "dim", "params": {"activation": "tanhh", "n": 2}})")),
                       "params.activation"));
  EXPECT_TRUE(mentions(validate(parse(R"({"command": "path-linear", "params": {"n": 2, "m": 1}})")), "params.widths"));
  EXPECT_TRUE(mentions(validate(parse(R"({"command": "path-linear", "params": {"n": 2, "m": 1, "widths": [1],
                                          "layers": [[[1, 2]], [[1, 1]]]}})")),
                       "params.layers[1]"));
  std::vector<std::string> d;
  config_from_json(json::parse(R"({"command": "dim", "sede": 3})"), d);
  EXPECT_TRUE(mentions(d, "sede"));
}

TEST(ParseActivation, Catalog) {
  EXPECT_TRUE(parse_activation("relu")->is_relu());
  EXPECT_EQ(parse_activation(json::parse(R"({"softplus": 2.0})"))->name(), Activation::softplus(2.0).name());
  EXPECT_TRUE(parse_activation(json::parse(R"({"polynomial": [0, 1, 1]})"))->is_polynomial());
  EXPECT_FALSE(parse_activation(json::parse(R"({"monomial": 0})")).has_value());
  EXPECT_FALSE(parse_activation(3).has_value());
}

TEST(RunExperiment, ScalarLinearReachesZero) {
  const RunOutput r = run_experiment(parse(kScalar));
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.report["verdict"], "pass");
  ASSERT_FALSE(r.trace.empty());
  EXPECT_LE(r.trace.back().loss, 1e-9);
  EXPECT_EQ(r.trace.front().t, 0.0);
  EXPECT_EQ(r.trace.back().t, 1.0);
}

TEST(RunExperiment, DimReportsTable) {
  const RunOutput r = run_experiment(parse(R"({"command": "dim", "params": {"activation": "quadratic", "n": 4}})"));
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.report["upper"]["value"], 10);
  EXPECT_EQ(r.report["lower"]["value"], 4);
  EXPECT_EQ(r.report["rationale"], "symmetric-rank-table");
}

TEST(Cli, ScalarConfigExitsZeroAndWritesFiles) {
  const fs::path dir = scratch("scalar");
  write(dir / "c.json", kScalar);
  const CliResult r = cli("path-linear --config " + (dir / "c.json").string() + " --out " + (dir / "o").string(), dir);
  EXPECT_EQ(r.status, 0) << r.err;
  const std::string trace = slurp(dir / "o" / "trace.csv");
  EXPECT_EQ(trace.substr(0, trace.find('\n')), "t,loss,segment_id,function_drift");
  const json rep = json::parse(slurp(dir / "o" / "report.json"));
  EXPECT_EQ(rep["verdict"], "pass");
  EXPECT_EQ(rep["seed"], 1);
}

TEST(Cli, AdversarialWithOneNeuronIsRejected) {
  const fs::path dir = scratch("adv");
  write(dir / "c.json", R"({"command": "adversarial", "params": {"n": 3, "p": 1, "M": 10}})");
  const CliResult r = cli("adversarial --config " + (dir / "c.json").string() + " --out " + (dir / "o").string(), dir);
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.err.find("region degenerate"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir / "o" / "report.json"));
}

TEST(Cli, InvalidConfigNamesKey) {
  const fs::path dir = scratch("bad");
  write(dir / "c.json", R"({"command": "path-quadratic", "params": {"n": 2, "p": 4}})");
  const CliResult r = cli("path-quadratic --config " + (dir / "c.json").string() + " --out " + (dir / "o").string(), dir);
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("params.p"), std::string::npos) << r.err;
  write(dir / "m.json", kScalar);
  const CliResult m = cli("dim --config " + (dir / "m.json").string() + " --out " + (dir / "o").string(), dir);
  EXPECT_EQ(m.status, 2);
  EXPECT_NE(m.err.find("command"), std::string::npos) << m.err;
}

TEST(Cli, FailingVerdictExitsNonzero) {
  const fs::path dir = scratch("fail");
  // Risk cannot grow with p this fast.
  write(dir / "c.json", R"({"command": "quadrature", "trials": 2,
                            "params": {"p_list": [4, 8, 16], "Q": 500, "n_design": 200,
                                       "slope_min": 5.0, "slope_max": 6.0}})");
  const CliResult r = cli("quadrature --config " + (dir / "c.json").string() + " --out " + (dir / "o").string(), dir);
  EXPECT_EQ(r.status, 1) << r.err;
  const json rep = json::parse(slurp(dir / "o" / "report.json"));
  EXPECT_EQ(rep["verdict"], "fail");
  EXPECT_EQ(rep["slope_pass"], false);
}

TEST(Cli, SameSeedGivesIdenticalFiles) {
  const fs::path dir = scratch("det");
  write(dir / "c.json", R"({"command": "path-linear", "params": {"n": 3, "m": 2, "widths": [2, 3]}})");
  for (const char* o : {"a", "b"})
    ASSERT_EQ(cli("path-linear --config " + (dir / "c.json").string() + " --seed 9 --trials 2 --out " + (dir / o).string(), dir).status, 0);
  EXPECT_EQ(slurp(dir / "a" / "report.json"), slurp(dir / "b" / "report.json"));
  EXPECT_EQ(slurp(dir / "a" / "trace.csv"), slurp(dir / "b" / "trace.csv"));
  ASSERT_EQ(cli("path-linear --config " + (dir / "c.json").string() + " --seed 10 --out " + (dir / "c").string(), dir).status, 0);
  EXPECT_NE(slurp(dir / "a" / "trace.csv"), slurp(dir / "c" / "trace.csv"));
}
