#include "bl/commands.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>

#include "bl/numfmt.hpp"
#include "bl/rng.hpp"

namespace bl {

namespace fs = std::filesystem;

// Error metrics are taken on at least this many points; the value is
// insensitive to further refinement.
constexpr std::size_t kMetricPoints = 10001;

nlohmann::json RunManifest::to_json() const {
  return nlohmann::json{{"command", command},
                        {"config", config},
                        {"files", files},
                        {"wall_seconds", wall_seconds},
                        {"metrics", metrics},
                        {"tool_version", tool_version}};
}

namespace {

void write_json(const nlohmann::json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

RunManifest start_manifest(const std::string& command, const RunConfig& cfg) {
  RunManifest m;
  m.command = command;
  m.config = to_json(cfg);
  fs::create_directories(cfg.output_dir);
  return m;
}

void write_comparison_csv(const SaturationProfile& net, const MocSolution& sol,
                          const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << "x,s_pinn,s_moc\n";
  for (std::size_t i = 0; i < net.xs.size(); ++i) {
    out << shortest(net.xs[i]) << ',' << shortest(net.ss[i]) << ','
        << shortest(moc_eval(sol, net.xs[i], net.t)) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string time_tag(double t) { return "t" + shortest(t); }

}  // namespace

void write_manifest(RunManifest& m, const fs::path& dir) {
  m.files.push_back("manifest.json");
  write_json(m.to_json(), dir / "manifest.json");
}

RunManifest cmd_moc(const RunConfig& cfg, std::ostream& log) {
  Stopwatch clock;
  RunManifest man = start_manifest("moc", cfg);
  const HullFlux hull = build_hull(cfg.physical);
  const MocSolution sol(hull, cfg.velocity);
  nlohmann::json fronts = nlohmann::json::array();
  for (double t : cfg.times()) {
    const SaturationProfile prof = moc_profile(sol, t, cfg.domain.x_max, cfg.report.nx);
    const std::string name = profile_file_name(t);
    write_profile_csv(prof, cfg.output_dir / name);
    man.files.push_back(name);
    fronts.push_back({{"t", t}, {"front_radius", front_radius(sol, t)}});
  }
  const nlohmann::json summary = {
      {"s_tangent", hull.s_tangent},
      {"shock_speed", hull.shock_speed},
      {"pure_shock", hull.pure_shock},
      {"v_d", cfg.velocity},
      {"fronts", fronts},
      {"breakthrough_x", cfg.domain.x_max},
      {"breakthrough_time", breakthrough_time(sol, cfg.domain.x_max)},
  };
  write_json(summary, cfg.output_dir / "summary.json");
  man.files.push_back("summary.json");
  man.metrics = {{"shock_speed", hull.shock_speed},
                 {"breakthrough_time", breakthrough_time(sol, cfg.domain.x_max)}};
  log << "moc: s_tangent=" << hull.s_tangent << " shock_speed=" << hull.shock_speed << " ("
      << cfg.times().size() << " profiles)\n";
  man.wall_seconds = clock.seconds();
  write_manifest(man, cfg.output_dir);
  return man;
}

RunManifest cmd_train(const RunConfig& cfg, std::ostream& log) {
  Stopwatch clock;
  RunManifest man = start_manifest("train", cfg);
  const TrainConfig tc = cfg.train_config();
  const HullFlux hull = build_hull(cfg.physical);
  const MocSolution sol(hull, cfg.velocity);

  std::vector<LossRecord> seen;
  auto observer = [&](const LossRecord& r) {
    seen.push_back(r);
    if (r.step % 1000 == 0) {
      log << "step " << r.step << " loss " << r.loss_total << " (r " << r.loss_residual << ", bc "
          << r.loss_bc << ", ic " << r.loss_ic << ")\n";
    }
  };

  TrainResult result;
  try {
    result = train(tc, cfg.physical, cfg.velocity, cfg.arch, observer);
  } catch (const DivergenceError& e) {
    write_loss_csv(seen, cfg.output_dir / "loss.csv");
    man.files.push_back("loss.csv");
    man.metrics = {{"diverged", true}, {"divergence_step", e.step()}, {"error", e.what()}};
    man.wall_seconds = clock.seconds();
    write_manifest(man, cfg.output_dir);
    throw;
  }

  write_json(result.model, cfg.output_dir / "model.json");
  write_loss_csv(result.history, cfg.output_dir / "loss.csv");
  const SaturationProfile net =
      network_profile(result.model, cfg.report.eval_time, cfg.domain.x_max,
                      std::max<std::size_t>(cfg.report.nx, 100), cfg.velocity);
  write_comparison_csv(net, sol, cfg.output_dir / "comparison.csv");
  man.files.insert(man.files.end(), {"model.json", "loss.csv", "comparison.csv"});

  const std::size_t nx = std::max<std::size_t>(cfg.report.nx, kMetricPoints);
  const double abs_err = l2_error(result.model, sol, cfg.report.eval_time, nx, cfg.domain.x_max);
  const double rel_err =
      relative_l2_error(result.model, sol, cfg.report.eval_time, nx, cfg.domain.x_max);
  const double late = late_loss_decrease(result.history, 1.0 / 6.0);
  man.metrics = {{"flux_mode", to_string(tc.flux_mode)},
                 {"iterations", tc.iterations},
                 {"l2_error", abs_err},
                 {"relative_l2_error", rel_err},
                 {"mse", abs_err * abs_err},
                 {"loss_total", result.history.back().loss_total},
                 {"late_loss_decrease", late},
                 {"plateau", late < 0.05},
                 {"eval_time", cfg.report.eval_time},
                 {"seeds", {{"params", cfg.seeds.params}, {"collocation", cfg.seeds.collocation}}}};
  log << "train: " << to_string(tc.flux_mode) << " l2=" << abs_err << " relative=" << rel_err
      << " plateau=" << (late < 0.05 ? "true" : "false") << '\n';
  man.wall_seconds = clock.seconds();
  write_manifest(man, cfg.output_dir);
  return man;
}

namespace {

nlohmann::json front_quantiles(const EnsembleStats& s) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t ti = 0; ti < s.times.size(); ++ti) {
    out.push_back({{"t", s.times[ti]},
                   {"p15", percentile(s.front_radii[ti], 0.15)},
                   {"p50", percentile(s.front_radii[ti], 0.50)},
                   {"p85", percentile(s.front_radii[ti], 0.85)}});
  }
  return out;
}

std::vector<double> row(const EnsembleStats& s, const std::vector<double>& field, std::size_t ti) {
  return {field.begin() + static_cast<std::ptrdiff_t>(ti * s.xs.size()),
          field.begin() + static_cast<std::ptrdiff_t>((ti + 1) * s.xs.size())};
}

}  // namespace

RunManifest cmd_uq(const RunConfig& cfg, bool baseline_only, std::ostream& log) {
  if (!cfg.velocity_distribution) {
    throw ConfigError("velocity: uq requires a distribution object {mu, sigma, low, high}");
  }
  Stopwatch clock;
  RunManifest man = start_manifest("uq", cfg);
  const VelocityDistribution& dist = *cfg.velocity_distribution;
  const HullFlux hull = build_hull(cfg.physical);
  const std::vector<double> times = cfg.times();
  const std::vector<double> xs = uniform_grid(cfg.domain.x_max, cfg.report.nx);
  const std::size_t n = cfg.report.ensemble_size;

  const EnsembleStats mc = mc_moc_baseline(cfg.physical, dist, n, times, xs, cfg.seeds.sampling,
                                            cfg.threads);
  for (std::size_t ti = 0; ti < times.size(); ++ti) {
    const std::string name = "mc_envelope_" + time_tag(times[ti]) + ".csv";
    write_envelope_csv(mc, ti, cfg.output_dir / name);
    man.files.push_back(name);
  }
  write_front_csv(mc, cfg.output_dir / "mc_fronts.csv");
  man.files.push_back("mc_fronts.csv");

  // Smoothness of the ensemble mean against one deterministic MOC profile.
  const MocSolution det(hull, dist.mu);
  nlohmann::json smooth = nlohmann::json::array();
  for (std::size_t ti = 0; ti < times.size(); ++ti) {
    std::vector<double> det_s(xs.size());
    for (std::size_t xi = 0; xi < xs.size(); ++xi) det_s[xi] = moc_eval(det, xs[xi], times[ti]);
    smooth.push_back({{"t", times[ti]},
                      {"mean_max_slope", max_slope(xs, row(mc, mc.mean_s, ti))},
                      {"moc_max_slope", max_slope(xs, det_s)}});
  }

  nlohmann::json summary = {{"ensemble_size", n},
                            {"seed", cfg.seeds.sampling},
                            {"mc_front_quantiles", front_quantiles(mc)},
                            {"smoothness", smooth}};
  man.metrics = {{"baseline_only", baseline_only}};

  if (!baseline_only) {
    const TrainConfig tc = cfg.train_config();
    auto observer = [&log](const LossRecord& r) {
      if (r.step % 1000 == 0) log << "p-pinn step " << r.step << " loss " << r.loss_total << '\n';
    };
    TrainResult trained;
    try {
      trained = train_ppinn(tc, cfg.physical, dist, cfg.arch, observer);
    } catch (const DivergenceError& e) {
      man.metrics = {{"diverged", true}, {"divergence_step", e.step()}, {"error", e.what()}};
      man.wall_seconds = clock.seconds();
      write_manifest(man, cfg.output_dir);
      throw;
    }
    write_json(trained.model, cfg.output_dir / "ppinn_model.json");
    write_loss_csv(trained.history, cfg.output_dir / "ppinn_loss.csv");
    man.files.insert(man.files.end(), {"ppinn_model.json", "ppinn_loss.csv"});

    const EnsembleStats pp =
        ppinn_ensemble_stats(trained.model, hull, dist, n, times, xs, cfg.seeds.sampling,
                             cfg.threads);
    for (std::size_t ti = 0; ti < times.size(); ++ti) {
      const std::string name = "ppinn_envelope_" + time_tag(times[ti]) + ".csv";
      write_envelope_csv(pp, ti, cfg.output_dir / name);
      man.files.push_back(name);
    }
    write_front_csv(pp, cfg.output_dir / "ppinn_fronts.csv");
    man.files.push_back("ppinn_fronts.csv");

    nlohmann::json gaps = nlohmann::json::array();
    for (std::size_t ti = 0; ti < times.size(); ++ti) {
      gaps.push_back({{"t", times[ti]},
                      {"p15", std::abs(percentile(pp.front_radii[ti], 0.15) -
                                       percentile(mc.front_radii[ti], 0.15))},
                      {"p50", std::abs(percentile(pp.front_radii[ti], 0.50) -
                                       percentile(mc.front_radii[ti], 0.50))},
                      {"p85", std::abs(percentile(pp.front_radii[ti], 0.85) -
                                       percentile(mc.front_radii[ti], 0.85))}});
    }
    const double gap = mean_profile_gap(pp, mc);
    const double rel_at_mean = relative_l2_error(trained.model, det, cfg.report.eval_time,
                                                 std::max<std::size_t>(cfg.report.nx, kMetricPoints),
                                                 cfg.domain.x_max);
    summary["mean_profile_gap"] = gap;
    summary["front_quantile_gaps"] = gaps;
    summary["ppinn_front_quantiles"] = front_quantiles(pp);
    summary["relative_l2_at_mean_velocity"] = rel_at_mean;
    man.metrics["mean_profile_gap"] = gap;
    man.metrics["relative_l2_at_mean_velocity"] = rel_at_mean;
    man.metrics["loss_total"] = trained.history.back().loss_total;
    log << "uq: mean profile gap " << gap << '\n';
  }
  write_json(summary, cfg.output_dir / "summary.json");
  man.files.push_back("summary.json");
  man.wall_seconds = clock.seconds();
  write_manifest(man, cfg.output_dir);
  return man;
}

std::vector<ValidationCheck> run_validation(const ValidationOptions& opts) {
  std::vector<ValidationCheck> checks;
  auto add = [&checks](std::string name, double value, double threshold) {
    checks.push_back({std::move(name), value, threshold, value <= threshold});
  };
  std::mt19937_64 rng(20240611);

  // Tangency over a randomized parameter sweep.
  {
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
      RockFluidParams p;
      p.s_wc = 0.3 * unit_uniform(rng);
      p.s_gr = 0.3 * unit_uniform(rng);
      p.mobility_ratio = 0.2 + 9.8 * unit_uniform(rng);
      p.s_inj = 1.0 - p.s_gr;
      const HullFlux h = build_hull(p);
      const double s = h.s_tangent;
      const double slope = frac_flow_deriv(s, p) + opts.flux_slope_perturbation;
      worst = std::max(worst, std::abs(slope - frac_flow(s, p) / (s - p.s_wc)));
    }
    add("tangency residual (200 random parameter sets)", worst, 1e-10);
  }

  // Parameter gradient of the full PINN loss against directional differences.
  {
    const RockFluidParams p;
    const HullFlux hull = build_hull(p);
    TrainConfig tc;
    tc.counts = {64, 16, 16};
    double worst = 0.0;
    for (FluxMode mode : {FluxMode::kNaive, FluxMode::kHull}) {
      tc.flux_mode = mode;
      MlpModel m = init_params({2, 12, 12, 1}, Activation::kTanh, 7);
      const CollocationSet c = sample_collocation(tc.counts, tc.domain, 11);
      PinnObjective obj(hull, mode, tc.loss_weights, 1.0);
      obj.set_points(c);
      Eigen::VectorXd grad;
      obj.evaluate_with_gradient(m, grad);
      const Eigen::VectorXd theta = m.flat_params();
      for (int d = 0; d < 5; ++d) {
        Eigen::VectorXd dir(theta.size());
        for (Eigen::Index k = 0; k < dir.size(); ++k) dir[k] = 2.0 * unit_uniform(rng) - 1.0;
        dir.normalize();
        const double h = 1e-6;
        MlpModel mp = m;
        mp.set_flat_params(theta + h * dir);
        MlpModel mm = m;
        mm.set_flat_params(theta - h * dir);
        const double fd = (obj.evaluate(mp).loss_total - obj.evaluate(mm).loss_total) / (2.0 * h);
        const double an = grad.dot(dir);
        worst = std::max(worst, std::abs(fd - an) / std::max(std::abs(an), 1e-12));
      }
    }
    add("loss gradient vs finite differences (rel)", worst, 1e-5);
  }

  // Input derivatives against central differences.
  {
    const MlpModel m = init_params({2, 16, 16, 1}, Activation::kTanh, 3);
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
      std::array<double, 2> x = {2.0 * unit_uniform(rng), unit_uniform(rng)};
      const Eigen::VectorXd jac = input_jacobian(m, x);
      for (int k = 0; k < 2; ++k) {
        auto xp = x;
        auto xm = x;
        xp[k] += 1e-5;
        xm[k] -= 1e-5;
        const double fd = (forward(m, xp) - forward(m, xm)) / 2e-5;
        worst = std::max(worst, std::abs(fd - jac[k]) / std::max(std::abs(jac[k]), 1e-8));
      }
    }
    add("input jacobian vs finite differences (rel)", worst, 1e-6);
  }

  // Godunov oracle against the MOC profile.
  {
    RockFluidParams p;
    p.s_wc = 0.0;
    p.s_gr = 0.0;
    p.mobility_ratio = 1.0;
    p.s_inj = 1.0;
    const SaturationProfile fv = godunov_solve(p, 1.0, 500, 0.5, 0.5);
    const MocSolution sol(build_hull(p), 1.0);
    SaturationProfile ref = fv;
    for (std::size_t i = 0; i < ref.xs.size(); ++i) ref.ss[i] = moc_eval(sol, ref.xs[i], 0.5);
    add("Godunov vs MOC L1 distance, nx=500", l1_distance(fv, ref), 0.02);
  }

  // MOC mass balance before breakthrough.
  {
    const RockFluidParams p;
    const MocSolution sol(build_hull(p), 1.0);
    double worst = 0.0;
    const std::size_t n = 200001;
    const double x_max = 2.0;
    const double dx = x_max / static_cast<double>(n - 1);
    for (double t : {0.2, 0.4, 0.6, 0.8, 1.0}) {
      double integral = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double w = (i == 0 || i + 1 == n) ? 0.5 : 1.0;
        integral += w * (moc_eval(sol, dx * static_cast<double>(i), t) - p.s_wc);
      }
      integral *= dx;
      const double expected = sol.v_d * t * frac_flow(p.s_inj, p);
      worst = std::max(worst, std::abs(integral - expected) / expected);
    }
    add("MOC mass balance (rel)", worst, 1e-4);
  }
  return checks;
}

int cmd_validate(const ValidationOptions& opts, std::ostream& out) {
  const auto checks = run_validation(opts);
  bool ok = true;
  out << std::left << std::setw(48) << "check" << std::setw(14) << "value" << std::setw(14)
      << "threshold" << "result\n";
  for (const auto& c : checks) {
    out << std::left << std::setw(48) << c.name << std::setw(14) << std::setprecision(4)
        << c.value << std::setw(14) << c.threshold << (c.passed ? "PASS" : "FAIL") << '\n';
    ok = ok && c.passed;
  }
  return ok ? kExitOk : kExitValidation;
}

}  // namespace bl
