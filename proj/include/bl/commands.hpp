#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bl/config.hpp"

namespace bl {

inline constexpr const char* kToolVersion = "0.1.0";

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitDivergence = 3,
  kExitValidation = 4,
};

/// What a command produced. `files` are relative to the output directory.
struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::vector<std::string> files;
  double wall_seconds = 0.0;
  nlohmann::json metrics = nlohmann::json::object();
  std::string tool_version = kToolVersion;

  nlohmann::json to_json() const;
};

/// Writes manifest.json into `dir` (the manifest lists itself).
void write_manifest(RunManifest& m, const std::filesystem::path& dir);

/// MOC profiles at the report times plus a front/breakthrough summary.
RunManifest cmd_moc(const RunConfig& cfg, std::ostream& log);

/// Trains a PINN and writes checkpoint, loss history and MOC comparison.
/// On divergence the partial loss history and a manifest carrying the step
/// are written before DivergenceError propagates.
RunManifest cmd_train(const RunConfig& cfg, std::ostream& log);

/// Monte-Carlo MOC envelope and, unless `baseline_only`, the P-PINN
/// ensemble with a comparison summary.
RunManifest cmd_uq(const RunConfig& cfg, bool baseline_only, std::ostream& log);

struct ValidationCheck {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool passed = false;
};

struct ValidationOptions {
  /// Added to f'(S) inside the tangency check; fault-injection hook.
  double flux_slope_perturbation = 0.0;
};

/// Fast invariant suite: gradient checks, tangency, Godunov vs MOC at
/// nx = 500 and MOC mass balance.
std::vector<ValidationCheck> run_validation(const ValidationOptions& opts = {});

/// Prints the check table; returns kExitOk or kExitValidation.
int cmd_validate(const ValidationOptions& opts, std::ostream& out);

}  // namespace bl
