#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "bl/stochastic.hpp"
#include "oracles.hpp"

using namespace bl;

namespace {

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("truncated normal draws stay in range and match the quadrature mean") {
  const VelocityDistribution d;
  const auto v = sample_truncnorm(d, 100000, 17);
  CHECK(v.size() == 100000);
  CHECK(*std::min_element(v.begin(), v.end()) >= 0.5);
  CHECK(*std::max_element(v.begin(), v.end()) <= 2.0);
  const double exact = oracle::truncnorm_mean_quadrature(1.0, 0.3, 0.5, 2.0);
  CHECK(exact == doctest::Approx(1.03087).epsilon(1e-5));
  CHECK(std::abs(mean(v) - exact) < 0.01);
  CHECK(sample_truncnorm(d, 1000, 5) == sample_truncnorm(d, 1000, 5));
  CHECK(sample_truncnorm(d, 1000, 5) != sample_truncnorm(d, 1000, 6));
}

TEST_CASE("pathological truncation is rejected") {
  VelocityDistribution d{0.0, 0.01, 1.0, 2.0};
  CHECK(d.acceptance_probability() < 1e-6);
  CHECK_THROWS_AS(sample_truncnorm(d, 10, 1), std::domain_error);
  CHECK_THROWS(sample_truncnorm(VelocityDistribution{}, 0, 1));
  CHECK_THROWS_AS((VelocityDistribution{1.0, 0.3, 2.0, 0.5}.validate()), std::domain_error);
  CHECK_THROWS_AS((VelocityDistribution{1.0, 0.3, -1.0, 2.0}.validate()), std::domain_error);
}

TEST_CASE("percentile follows linear interpolation between order statistics") {
  const std::vector<double> v{4.0, 1.0, 3.0, 2.0, 5.0};
  CHECK(percentile(v, 0.0) == 1.0);
  CHECK(percentile(v, 1.0) == 5.0);
  CHECK(percentile(v, 0.5) == 3.0);
  CHECK(percentile(v, 0.15) == doctest::Approx(1.6));
  CHECK(percentile(v, 0.85) == doctest::Approx(4.4));
  CHECK(percentile({7.0}, 0.3) == 7.0);
  CHECK_THROWS(percentile({}, 0.5));
  CHECK_THROWS(percentile(v, 1.5));
}

TEST_CASE("percentile commutes with increasing affine maps") {
  std::vector<double> v = sample_truncnorm(VelocityDistribution{}, 333, 2);
  std::vector<double> w(v.size());
  std::transform(v.begin(), v.end(), w.begin(), [](double x) { return 3.0 * x + 1.0; });
  for (double q : {0.15, 0.5, 0.85}) {
    CHECK(percentile(w, q) == doctest::Approx(3.0 * percentile(v, q) + 1.0).epsilon(1e-14));
  }
}

TEST_CASE("baseline front radii follow the quantile map of the velocities") {
  const RockFluidParams p;
  const HullFlux h = build_hull(p);
  const std::vector<double> times = report_times(1.0);
  const std::vector<double> xs = uniform_grid(2.0, 101);
  const EnsembleStats s = mc_moc_baseline(p, VelocityDistribution{}, 1000, times, xs, 3);
  REQUIRE(s.front_radii.size() == times.size());
  for (std::size_t ti = 0; ti < times.size(); ++ti) {
    const auto& r = s.front_radii[ti];
    const double scale = h.shock_speed * times[ti];
    CHECK(std::abs(mean(r) - mean(s.velocities) * scale) <= 1e-12);
    CHECK(std::abs(percentile(r, 0.15) - percentile(s.velocities, 0.15) * scale) <= 1e-12);
    CHECK(std::abs(percentile(r, 0.85) - percentile(s.velocities, 0.85) * scale) <= 1e-12);
  }
}

TEST_CASE("baseline grids, ordering and reproducibility") {
  const RockFluidParams p;
  const std::vector<double> times = report_times(1.0);
  REQUIRE(times.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(times[i] == doctest::Approx(0.2 * (i + 1)).epsilon(1e-15));
  const std::vector<double> xs = uniform_grid(2.0, 81);
  const EnsembleStats a = mc_moc_baseline(p, VelocityDistribution{}, 200, times, xs, 8);
  const EnsembleStats b = mc_moc_baseline(p, VelocityDistribution{}, 200, times, xs, 8);
  CHECK(a.mean_s.size() == times.size() * xs.size());
  CHECK(a.p15_s.size() == times.size() * xs.size());
  CHECK(a.p85_s.size() == times.size() * xs.size());
  CHECK(a.mean_s == b.mean_s);
  CHECK(a.p15_s == b.p15_s);
  for (std::size_t i = 0; i < a.mean_s.size(); ++i) CHECK(a.p15_s[i] <= a.p85_s[i]);
  CHECK_THROWS(mc_moc_baseline(p, VelocityDistribution{}, 1, times, xs, 8));
  CHECK(a.velocities == sample_truncnorm(VelocityDistribution{}, 200, 8));
}

TEST_CASE("point-mass distribution collapses onto the deterministic profile") {
  const RockFluidParams p;
  const VelocityDistribution pm{1.3, 0.3, 1.3, 1.3};
  CHECK(pm.is_point_mass());
  const std::vector<double> times{0.5};
  const std::vector<double> xs = uniform_grid(2.0, 201);
  const EnsembleStats s = mc_moc_baseline(p, pm, 50, times, xs, 1);
  const MocSolution sol(build_hull(p), 1.3);
  for (std::size_t xi = 0; xi < xs.size(); ++xi) {
    const double exact = moc_eval(sol, xs[xi], 0.5);
    CHECK(s.at(s.mean_s, 0, xi) == doctest::Approx(exact).epsilon(1e-14));
    CHECK(s.at(s.p15_s, 0, xi) == exact);
    CHECK(s.at(s.p85_s, 0, xi) == exact);
  }
}

TEST_CASE("ensemble mean is smoother than a single profile") {
  const RockFluidParams p;
  const std::vector<double> xs = uniform_grid(2.0, 201);
  const EnsembleStats s = mc_moc_baseline(p, VelocityDistribution{}, 1000, {0.5}, xs, 4);
  std::vector<double> mean_row(s.mean_s.begin(), s.mean_s.end());
  const MocSolution sol(build_hull(p), 1.0);
  std::vector<double> single;
  for (double x : xs) single.push_back(moc_eval(sol, x, 0.5));
  CHECK(max_slope(xs, mean_row) <= 0.5 * max_slope(xs, single));
}

TEST_CASE("front extraction") {
  const std::vector<double> xs{0.0, 1.0, 2.0, 3.0};
  CHECK(extract_front(xs, {0.9, 0.8, 0.2, 0.1}, 0.5) == doctest::Approx(1.5));
  CHECK(extract_front(xs, {0.1, 0.1, 0.1, 0.1}, 0.5) == 0.0);
  // last crossing wins
  CHECK(extract_front(xs, {0.9, 0.2, 0.9, 0.1}, 0.5) == doctest::Approx(2.5));
}

TEST_CASE("parameterized collocation shares the velocity sampler") {
  const CollocationSet c = sample_parameterized_collocation({100, 10, 10}, {2.0, 1.0},
                                                            VelocityDistribution{}, 6);
  CHECK(c.has_velocity());
  CHECK(c.residual_v.size() == 100);
  CHECK(c.boundary_v.size() == 10);
  CHECK(c.initial_v.size() == 10);
  for (double v : c.residual_v) {
    CHECK(v >= 0.5);
    CHECK(v <= 2.0);
  }
}

TEST_CASE("point-mass P-PINN loss equals the deterministic loss") {
  const RockFluidParams p;
  const HullFlux h = build_hull(p);
  const double vd = 1.4;
  const VelocityDistribution pm{vd, 0.3, vd, vd};
  const CollocationSet c3 = sample_parameterized_collocation({200, 20, 20}, {2.0, 1.0}, pm, 5);

  // A three-input network whose v_d weights are zero is exactly a two-input
  // network evaluated at any fixed v_d.
  MlpModel m3 = init_params({3, 12, 12, 1}, Activation::kTanh, 2);
  m3.weights[0].col(2).setZero();
  MlpModel m2 = init_params({2, 12, 12, 1}, Activation::kTanh, 2);
  m2.weights = m3.weights;
  m2.weights[0] = m3.weights[0].leftCols(2);
  m2.biases = m3.biases;

  CollocationSet c2 = c3;
  c2.residual_v.clear();
  c2.boundary_v.clear();
  c2.initial_v.clear();

  TrainConfig cfg;
  cfg.flux_mode = FluxMode::kHull;
  const LossRecord a = total_loss(m3, c3, cfg, h, 999.0);
  const LossRecord b = total_loss(m2, c2, cfg, h, vd);
  CHECK(a.loss_residual == doctest::Approx(b.loss_residual).epsilon(1e-13));
  CHECK(a.loss_bc == doctest::Approx(b.loss_bc).epsilon(1e-13));
  CHECK(a.loss_ic == doctest::Approx(b.loss_ic).epsilon(1e-13));
}

TEST_CASE("P-PINN ensemble statistics shapes and the single-realization case") {
  const RockFluidParams p;
  const HullFlux h = build_hull(p);
  const MlpModel m = init_params({3, 8, 1}, Activation::kTanh, 3);
  const std::vector<double> times{0.25, 0.75};
  const std::vector<double> xs = uniform_grid(2.0, 41);
  const EnsembleStats one = ppinn_ensemble_stats(m, h, VelocityDistribution{}, 1, times, xs, 2);
  CHECK(one.mean_s.size() == 82);
  CHECK(one.front_radii.size() == 2);
  CHECK(one.front_radii[0].size() == 1);
  const double v = one.velocities[0];
  CHECK(v == sample_truncnorm(VelocityDistribution{}, 1, 2)[0]);
  for (std::size_t ti = 0; ti < 2; ++ti) {
    const SaturationProfile prof = network_profile(m, times[ti], 2.0, 41, v);
    for (std::size_t xi = 0; xi < xs.size(); ++xi) {
      CHECK(one.at(one.mean_s, ti, xi) == prof.ss[xi]);
      CHECK(one.at(one.p15_s, ti, xi) == prof.ss[xi]);
      CHECK(one.at(one.p85_s, ti, xi) == prof.ss[xi]);
    }
  }
  const EnsembleStats base = mc_moc_baseline(p, VelocityDistribution{}, 20, times, xs, 2);
  const EnsembleStats many = ppinn_ensemble_stats(m, h, VelocityDistribution{}, 20, times, xs, 2);
  CHECK(many.velocities == base.velocities);
  CHECK(mean_profile_gap(base, base) == 0.0);
  CHECK(mean_profile_gap(base, many) > 0.0);
  CHECK_THROWS_AS(ppinn_ensemble_stats(init_params({2, 4, 1}, Activation::kTanh, 1), h,
                                       VelocityDistribution{}, 5, times, xs, 1),
                  DimensionError);
}

TEST_CASE("envelope and front CSV layout") {
  const std::vector<double> xs = uniform_grid(2.0, 3);
  const EnsembleStats s = mc_moc_baseline(RockFluidParams{}, VelocityDistribution{}, 3, {0.5}, xs, 1);
  const auto dir = std::filesystem::temp_directory_path();
  write_envelope_csv(s, 0, dir / "bl_env.csv");
  write_front_csv(s, dir / "bl_front.csv");
  std::ifstream env(dir / "bl_env.csv"), fr(dir / "bl_front.csv");
  std::string line;
  std::getline(env, line);
  CHECK(line == "x,mean,p15,p85");
  std::getline(env, line);
  CHECK(line == "0,0.9,0.9,0.9");
  std::getline(fr, line);
  CHECK(line == "realization,t,radius");
  int rows = 0;
  while (std::getline(fr, line)) ++rows;
  CHECK(rows == 3);
  std::filesystem::remove(dir / "bl_env.csv");
  std::filesystem::remove(dir / "bl_front.csv");
}

TEST_CASE("thread count does not change ensemble statistics") {
  const RockFluidParams p;
  const std::vector<double> times = report_times(1.0);
  const std::vector<double> xs = uniform_grid(2.0, 51);
  const EnsembleStats one = mc_moc_baseline(p, VelocityDistribution{}, 300, times, xs, 5, 1);
  const EnsembleStats four = mc_moc_baseline(p, VelocityDistribution{}, 300, times, xs, 5, 4);
  CHECK(one.mean_s == four.mean_s);
  CHECK(one.p15_s == four.p15_s);
  CHECK(one.p85_s == four.p85_s);
  CHECK(one.front_radii == four.front_radii);

  const MlpModel m = init_params({3, 8, 1}, Activation::kTanh, 3);
  const HullFlux h = build_hull(p);
  const EnsembleStats a = ppinn_ensemble_stats(m, h, VelocityDistribution{}, 50, times, xs, 2, 1);
  const EnsembleStats b = ppinn_ensemble_stats(m, h, VelocityDistribution{}, 50, times, xs, 2, 3);
  CHECK(a.mean_s == b.mean_s);
  CHECK(a.front_radii == b.front_radii);
}
