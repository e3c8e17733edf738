#include "bl/config.hpp"

#include <fstream>

namespace bl {

namespace {

template <typename Fn>
void wrap(const std::string& path, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace

std::vector<double> RunConfig::times() const {
  if (!report.times.empty()) return report.times;
  return report_times(domain.t_max, 5);
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.domain = domain;
  t.param_seed = seeds.params;
  t.collocation_seed = seeds.collocation;
  return t;
}

void RunConfig::validate() const {
  wrap("physical", [&] { physical.validate(); });
  if (!(velocity > 0.0) || !std::isfinite(velocity)) {
    throw ConfigError("velocity: invariant v_d > 0 violated");
  }
  if (velocity_distribution) wrap("velocity", [&] { velocity_distribution->validate(); });
  wrap("train", [&] { train_config().validate(); });
  if (!(domain.x_max > 0.0)) throw ConfigError("domain.x_max: must be positive");
  if (!(domain.t_max > 0.0)) throw ConfigError("domain.t_max: must be positive");
  if (arch.hidden.empty()) throw ConfigError("arch.hidden: at least one hidden layer required");
  if (arch.hidden_activation == Activation::kRelu) {
    throw ConfigError("arch.hidden_activation: relu is not differentiable on the residual path");
  }
  if (arch.hidden_activation == Activation::kLinear) {
    throw ConfigError("arch.hidden_activation: must be tanh or sigmoid");
  }
  if (arch.output_activation != Activation::kLinear && arch.output_activation != Activation::kSigmoid) {
    throw ConfigError("arch.output_activation: must be linear or sigmoid");
  }
  if (report.nx < 2) throw ConfigError("report.nx: must be at least 2");
  for (double t : report.times) {
    if (!(t >= 0.0 && t <= domain.t_max)) throw ConfigError("report.times: entries must lie in [0, t_max]");
  }
  if (!(report.eval_time >= 0.0 && report.eval_time <= domain.t_max)) {
    throw ConfigError("report.eval_time: must lie in [0, t_max]");
  }
  if (report.ensemble_size < 2) throw ConfigError("report.ensemble_size: must be at least 2");
  if (threads < 1) throw ConfigError("threads: must be at least 1");
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["physical"] = c.physical;
  if (c.velocity_distribution) {
    j["velocity"] = *c.velocity_distribution;
  } else {
    j["velocity"] = c.velocity;
  }
  j["train"] = c.train;
  j["arch"] = c.arch;
  j["domain"] = {{"x_max", c.domain.x_max}, {"t_max", c.domain.t_max}};
  j["report"] = {{"times", c.report.times},
                 {"nx", c.report.nx},
                 {"eval_time", c.report.eval_time},
                 {"ensemble_size", c.report.ensemble_size}};
  j["seeds"] = {{"params", c.seeds.params},
                {"collocation", c.seeds.collocation},
                {"sampling", c.seeds.sampling}};
  j["output_dir"] = c.output_dir.string();
  j["threads"] = c.threads;
  j["deterministic"] = c.deterministic;
  return j;
}

nlohmann::json default_config_json() { return to_json(RunConfig{}); }

RunConfig parse_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
  static const char* kKnown[] = {"physical", "velocity", "train", "arch", "domain", "report",
                                 "seeds", "output_dir", "threads", "deterministic"};
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (const char* k : kKnown) known = known || key == k;
    if (!known) throw ConfigError(key + ": unknown configuration key");
  }
  RunConfig c;
  if (j.contains("physical")) wrap("physical", [&] { c.physical = j.at("physical").get<RockFluidParams>(); });
  if (j.contains("velocity")) {
    wrap("velocity", [&] {
      const auto& v = j.at("velocity");
      if (v.is_number()) {
        c.velocity = v.get<double>();
        c.velocity_distribution.reset();
      } else if (v.is_object()) {
        c.velocity_distribution = v.get<VelocityDistribution>();
        c.velocity = c.velocity_distribution->mu;
      } else {
        throw ConfigError("velocity: expected a number or a distribution object");
      }
    });
  }
  if (j.contains("train")) wrap("train", [&] { c.train = j.at("train").get<TrainConfig>(); });
  if (j.contains("arch")) wrap("arch", [&] { c.arch = j.at("arch").get<Architecture>(); });
  if (j.contains("domain")) {
    wrap("domain", [&] {
      const auto& d = j.at("domain");
      c.domain.x_max = d.value("x_max", c.domain.x_max);
      c.domain.t_max = d.value("t_max", c.domain.t_max);
    });
  }
  if (j.contains("report")) {
    wrap("report", [&] {
      const auto& r = j.at("report");
      if (r.contains("times")) c.report.times = r.at("times").get<std::vector<double>>();
      c.report.nx = r.value("nx", c.report.nx);
      c.report.eval_time = r.value("eval_time", c.report.eval_time);
      c.report.ensemble_size = r.value("ensemble_size", c.report.ensemble_size);
    });
  }
  if (j.contains("seeds")) {
    wrap("seeds", [&] {
      const auto& s = j.at("seeds");
      c.seeds.params = s.value("params", c.seeds.params);
      c.seeds.collocation = s.value("collocation", c.seeds.collocation);
      c.seeds.sampling = s.value("sampling", c.seeds.sampling);
    });
  }
  if (j.contains("output_dir")) wrap("output_dir", [&] { c.output_dir = j.at("output_dir").get<std::string>(); });
  if (j.contains("threads")) wrap("threads", [&] { c.threads = j.at("threads").get<int>(); });
  if (j.contains("deterministic")) wrap("deterministic", [&] { c.deterministic = j.at("deterministic").get<bool>(); });
  c.validate();
  return c;
}

void apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "': expected key.path=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    value = raw;
  }
  nlohmann::json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override '" + assignment + "': empty key segment");
    if (!node->is_object()) {
      throw ConfigError("override '" + path + "': '" + key + "' is not inside an object");
    }
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

void apply_global_seed(nlohmann::json& j, std::uint64_t seed) {
  j["seeds"]["params"] = seed;
  j["seeds"]["collocation"] = seed + 1;
  j["seeds"]["sampling"] = seed + 2;
}

}  // namespace bl
