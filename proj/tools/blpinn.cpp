// Command-line entry point: moc, train, uq and validate subcommands.

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "bl/commands.hpp"

namespace {

nlohmann::json load_config(const std::string& path) {
  if (path.empty()) return bl::default_config_json();
  std::ifstream in(path);
  if (!in) throw bl::ConfigError("--config: cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw bl::ConfigError("--config: " + std::string(e.what()));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Buckley-Leverett Riemann problem: MOC, PINN and P-PINN solvers"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  int threads = 1;
  bool deterministic = true;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "JSON configuration file");
  app.add_option("--out", out_dir, "Output directory (falls back to RP_OUT_DIR)");
  auto* seed_opt = app.add_option("--seed", seed, "Seed for parameters, collocation and sampling");
  auto* threads_opt = app.add_option("--threads", threads, "Worker threads (1 = fully deterministic)")
                          ->check(CLI::PositiveNumber);
  app.add_flag("--deterministic,!--no-deterministic", deterministic,
               "Fixed-order reductions (default on)");
  app.add_option("--set", overrides, "Override a config key: dotted.path=value")
      ->allow_extra_args(false);

  auto* moc = app.add_subcommand("moc", "Method-of-characteristics reference profiles");
  auto* train = app.add_subcommand("train", "Train a PINN and compare with the MOC");
  auto* uq = app.add_subcommand("uq", "Monte-Carlo MOC envelope and P-PINN ensemble");
  bool baseline_only = false;
  uq->add_flag("--baseline-only", baseline_only, "Skip P-PINN training");
  auto* validate = app.add_subcommand("validate", "Fast invariant suite");
  double perturb = 0.0;
  validate->add_option("--perturb-flux-derivative", perturb)->group("");

  CLI11_PARSE(app, argc, argv);

  if (validate->parsed()) {
    bl::ValidationOptions opts;
    opts.flux_slope_perturbation = perturb;
    return bl::cmd_validate(opts, std::cout);
  }

  bl::RunConfig cfg;
  try {
    nlohmann::json j = load_config(config_path);
    for (const auto& o : overrides) bl::apply_override(j, o);
    if (*seed_opt) bl::apply_global_seed(j, seed);
    if (*threads_opt) j["threads"] = threads;
    j["deterministic"] = deterministic;
    if (!out_dir.empty()) {
      j["output_dir"] = out_dir;
    } else if (!j.contains("output_dir") || config_path.empty()) {
      if (const char* env = std::getenv("RP_OUT_DIR"); env && *env) j["output_dir"] = env;
    }
    cfg = bl::parse_config(j);
  } catch (const bl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return bl::kExitConfig;
  }

  try {
    if (moc->parsed()) bl::cmd_moc(cfg, std::cout);
    if (train->parsed()) bl::cmd_train(cfg, std::cout);
    if (uq->parsed()) bl::cmd_uq(cfg, baseline_only, std::cout);
  } catch (const bl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return bl::kExitConfig;
  } catch (const bl::DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return bl::kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return bl::kExitOk;
}
