#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bl/pinn.hpp"
#include "bl/stochastic.hpp"

namespace bl {

/// Invalid configuration; the message names the offending key path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ReportConfig {
  std::vector<double> times;  ///< empty: five uniform times in (0, t_max]
  std::size_t nx = 201;
  double eval_time = 0.5;     ///< time of the PINN-vs-MOC comparison
  std::size_t ensemble_size = 1000;
};

struct SeedConfig {
  std::uint64_t params = 1;
  std::uint64_t collocation = 2;
  std::uint64_t sampling = 3;
};

/// Complete description of a run. Velocity is either a constant or a
/// truncated-normal distribution.
struct RunConfig {
  RockFluidParams physical;
  double velocity = 1.0;
  std::optional<VelocityDistribution> velocity_distribution;
  TrainConfig train;
  Architecture arch;
  SpaceTimeDomain domain;
  ReportConfig report;
  SeedConfig seeds;
  std::filesystem::path output_dir = "out";
  int threads = 1;
  bool deterministic = true;

  /// Report times with the default applied.
  std::vector<double> times() const;
  /// TrainConfig with domain and seeds folded in.
  TrainConfig train_config() const;
  /// Throws ConfigError naming the violated invariant.
  void validate() const;
};

nlohmann::json default_config_json();
nlohmann::json to_json(const RunConfig& c);

/// Parses a configuration document; missing keys keep their defaults.
RunConfig parse_config(const nlohmann::json& j);

/// Applies "a.b.c=value" to `j`. The value is parsed as JSON when possible
/// and taken as a string otherwise.
void apply_override(nlohmann::json& j, const std::string& assignment);

/// Sets all three seeds from one value (params = s, collocation = s + 1,
/// sampling = s + 2).
void apply_global_seed(nlohmann::json& j, std::uint64_t seed);

}  // namespace bl
