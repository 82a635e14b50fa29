#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "spurious/experiment.hpp"

namespace {

constexpr int kExitFail = 1;
constexpr int kExitInvalid = 2;

int run_command(const std::string& command, const std::string& config_path, std::optional<std::uint64_t> seed,
                const std::string& out_dir, std::optional<int> trials) {
  using spurious::json;
  json raw = json::object();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) {
      std::cerr << "config: cannot open " << config_path << "\n";
      return kExitInvalid;
    }
    try {
      raw = json::parse(in);
    } catch (const json::parse_error& e) {
      std::cerr << "config: not valid JSON: " << e.what() << "\n";
      return kExitInvalid;
    }
  }
  std::vector<std::string> diags;
  spurious::ExperimentConfig cfg = spurious::config_from_json(raw, diags);
  if (cfg.command.empty()) cfg.command = command;
  if (cfg.command != command)
    diags.push_back("command: config says '" + cfg.command + "' but the subcommand is '" + command + "'");
  if (seed) cfg.seed = *seed;
  if (trials) cfg.trials = *trials;
  const auto more = spurious::validate(cfg);
  diags.insert(diags.end(), more.begin(), more.end());
  if (!diags.empty()) {
    for (const auto& d : diags) std::cerr << "invalid config: " << d << "\n";
    return kExitInvalid;
  }
  spurious::RunOutput r;
  try {
    r = spurious::run_experiment(cfg);
  } catch (const spurious::PreconditionError& e) {
    std::cerr << "precondition: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitInvalid;
  }
  spurious::write_outputs(r, out_dir);
  std::cout << command << ": " << (r.pass ? "pass" : "fail") << " (report in " << out_dir << "/report.json)\n";
  return r.pass ? 0 : kExitFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Descent paths, intrinsic dimensions, adversarial valleys and random-feature quadrature"};
  app.require_subcommand(1);
  std::string config, out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  for (const auto& name : spurious::experiment_commands()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "JSON config file");
    sub->add_option("--seed", seed, "top-level seed, overrides the config");
    sub->add_option("--out", out, "output directory for trace.csv and report.json");
    sub->add_option("--trials", trials, "repetitions, overrides the config")->check(CLI::PositiveNumber);
  }
  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run_command(command, config, seed, out, trials);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFail;
  }
}
