#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "bl/pinn.hpp"

namespace bl {

/// Normal N(mu, sigma) truncated to [low, high]. low == high (or sigma == 0)
/// is accepted as a point mass.
struct VelocityDistribution {
  double mu = 1.0;
  double sigma = 0.3;
  double low = 0.5;
  double high = 2.0;

  void validate() const;
  bool is_point_mass() const { return low == high || sigma == 0.0; }
  /// Probability mass of [low, high] under the untruncated normal.
  double acceptance_probability() const;
};

void to_json(nlohmann::json& j, const VelocityDistribution& d);
void from_json(const nlohmann::json& j, VelocityDistribution& d);

/// n independent rejection-sampled draws; deterministic per seed. Throws
/// std::domain_error when the acceptance probability is below 1e-6.
std::vector<double> sample_truncnorm(const VelocityDistribution& dist,
                                     std::size_t n, std::uint64_t seed);

/// Percentile with linear interpolation between order statistics
/// (q in [0, 1]). `values` need not be sorted.
double percentile(std::vector<double> values, double q);

struct EnsembleStats {
  std::vector<double> times;
  std::vector<double> xs;
  std::vector<double> velocities;  ///< sampled v_d, one per realization
  /// Row-major |times| x |xs| grids.
  std::vector<double> mean_s;
  std::vector<double> p15_s;
  std::vector<double> p85_s;
  /// front_radii[i][k]: front position of realization k at times[i].
  std::vector<std::vector<double>> front_radii;

  double& at(std::vector<double>& field, std::size_t ti, std::size_t xi) {
    return field[ti * xs.size() + xi];
  }
  double at(const std::vector<double>& field, std::size_t ti, std::size_t xi) const {
    return field[ti * xs.size() + xi];
  }
};

/// Ensemble of MOC solutions over sampled velocities. Realizations are
/// split over `threads` workers; the output does not depend on the count.
EnsembleStats mc_moc_baseline(const RockFluidParams& p,
                              const VelocityDistribution& dist, std::size_t n,
                              const std::vector<double>& times,
                              const std::vector<double>& xs, std::uint64_t seed,
                              int threads = 1);

/// Collocation set over (x, t, v_d) with velocities drawn from `dist`,
/// shared by the residual, boundary and initial groups.
CollocationSet sample_parameterized_collocation(const CollocationCounts& counts,
                                                const SpaceTimeDomain& domain,
                                                const VelocityDistribution& dist,
                                                std::uint64_t seed);

/// Trains one network S(x, t, v_d) over the whole velocity distribution.
TrainResult train_ppinn(const TrainConfig& cfg, const RockFluidParams& p,
                        const VelocityDistribution& dist,
                        const Architecture& arch,
                        const TrainObserver& observer = {});

/// Front position of a sampled profile: where the saturation last falls
/// through s_wc + 0.5 (s_tangent - s_wc), linearly interpolated between grid
/// points. Returns xs.front() when no point exceeds the threshold.
double extract_front(const std::vector<double>& xs, const std::vector<double>& ss,
                     double threshold);

/// Same statistics as mc_moc_baseline, evaluated with a three-input network.
/// Front radii come from extract_front on each realization's profile.
EnsembleStats ppinn_ensemble_stats(const MlpModel& m, const HullFlux& hull,
                                   const VelocityDistribution& dist,
                                   std::size_t n, const std::vector<double>& times,
                                   const std::vector<double>& xs,
                                   std::uint64_t seed, int threads = 1);

/// Mean |a.mean_s - b.mean_s| over the shared (t, x) grid.
double mean_profile_gap(const EnsembleStats& a, const EnsembleStats& b);

/// Largest |S_{i+1} - S_i| / (x_{i+1} - x_i) over a profile.
double max_slope(const std::vector<double>& xs, const std::vector<double>& ss);

/// `count` uniformly spaced times in (0, t_max].
std::vector<double> report_times(double t_max, std::size_t count = 5);

/// Uniform grid of `nx` points over [0, x_max].
std::vector<double> uniform_grid(double x_max, std::size_t nx);

/// Writes "x,mean,p15,p85" for report time index `ti`.
void write_envelope_csv(const EnsembleStats& s, std::size_t ti,
                        const std::filesystem::path& path);

/// Writes "realization,t,radius" for all times and realizations.
void write_front_csv(const EnsembleStats& s, const std::filesystem::path& path);

}  // namespace bl
