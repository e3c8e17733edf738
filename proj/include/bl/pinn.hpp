#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "bl/adam.hpp"
#include "bl/flux.hpp"
#include "bl/mlp.hpp"
#include "bl/moc.hpp"

namespace bl {

enum class FluxMode { kNaive, kHull };

std::string to_string(FluxMode mode);
FluxMode flux_mode_from_string(const std::string& name);

struct SpaceTimeDomain {
  double x_max = 2.0;
  double t_max = 1.0;
};

struct CollocationCounts {
  std::size_t n_r = 10000;
  std::size_t n_bc = 200;
  std::size_t n_ic = 200;
};

struct LossWeights {
  double residual = 1.0;
  double boundary = 1.0;
  double initial = 1.0;
};

/// Residual points in the interior, boundary points on x = 0 and initial
/// points on t = 0. The velocity vectors are filled only for the
/// velocity-parameterized network and then hold one v_d per point.
struct CollocationSet {
  std::vector<std::array<double, 2>> residual_pts;  ///< (x, t)
  std::vector<double> boundary_pts;                 ///< t at x = 0
  std::vector<double> initial_pts;                  ///< x at t = 0
  std::vector<double> residual_v;
  std::vector<double> boundary_v;
  std::vector<double> initial_v;
  std::uint64_t seed = 0;

  bool has_velocity() const { return !residual_v.empty(); }
  std::size_t size() const {
    return residual_pts.size() + boundary_pts.size() + initial_pts.size();
  }
};

/// Uniform pseudo-random collocation points; deterministic per seed.
CollocationSet sample_collocation(const CollocationCounts& counts,
                                  const SpaceTimeDomain& domain,
                                  std::uint64_t seed);

struct TrainConfig {
  FluxMode flux_mode = FluxMode::kHull;
  std::uint64_t iterations = 30000;
  AdamParams adam;
  LossWeights loss_weights;
  CollocationCounts counts;
  SpaceTimeDomain domain;
  std::uint64_t resample_every = 0;  ///< 0 keeps the initial points
  std::uint64_t record_every = 100;
  std::uint64_t param_seed = 1;
  std::uint64_t collocation_seed = 2;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Hidden layer widths and activations; the input width follows from the
/// problem (2 for (x, t), 3 for (x, t, v_d)).
struct Architecture {
  std::vector<int> hidden = {32, 32, 32, 32};
  Activation hidden_activation = Activation::kTanh;
  Activation output_activation = Activation::kLinear;

  std::vector<int> layer_sizes(int input_width) const;
};

void to_json(nlohmann::json& j, const Architecture& a);
void from_json(const nlohmann::json& j, Architecture& a);

struct LossRecord {
  std::uint64_t step = 0;
  double loss_residual = 0.0;
  double loss_bc = 0.0;
  double loss_ic = 0.0;
  double loss_total = 0.0;
};

/// Residual of S_t + v_d g'(S) S_x with g the original or hull flux.
double residual_from_derivatives(double s, double s_x, double s_t, double v_d,
                                 FluxMode mode, const HullFlux& hull);

/// PDE residual of the network at (x, t) (or (x, t, v_d) for a
/// three-input network, in which case `v_d` is taken from the input).
double pinn_residual(const MlpModel& m, std::span<const double> point,
                     FluxMode mode, const HullFlux& hull, double v_d);

/// PINN objective over one collocation set. Owns the stacked input matrix
/// and a reusable tape, so repeated evaluations do not reallocate.
class PinnObjective {
 public:
  PinnObjective(const HullFlux& hull, FluxMode mode, LossWeights weights,
                double v_d);

  /// Replaces the collocation points. A set with velocities implies a
  /// three-input network.
  void set_points(const CollocationSet& c);

  /// Loss components at the current parameters.
  LossRecord evaluate(const MlpModel& m);

  /// Loss components and the flat parameter gradient of loss_total.
  LossRecord evaluate_with_gradient(const MlpModel& m, Eigen::VectorXd& grad);

  int input_width() const { return static_cast<int>(inputs_.rows()); }

 private:
  struct Sums {
    double r = 0.0;
    double bc = 0.0;
    double ic = 0.0;
  };
  // Adds the loss terms of points [first, first + width) and, when `adj` is
  // set, fills their adjoints.
  void accumulate(const BatchOutputs& out, Eigen::Index first, Sums& sums,
                  LossAdjoint* adj) const;
  LossRecord finish(const Sums& sums) const;

  HullFlux hull_;
  FluxMode mode_;
  LossWeights weights_;
  double v_d_;
  Eigen::MatrixXd inputs_;
  std::vector<double> velocity_;  // per-point v_d for residual points
  Eigen::Index n_r_ = 0;
  Eigen::Index n_bc_ = 0;
  Eigen::Index n_ic_ = 0;
  NetworkTape tape_;
};

/// Mean-squared residual/boundary/initial losses and their weighted sum.
LossRecord total_loss(const MlpModel& m, const CollocationSet& c,
                      const TrainConfig& cfg, const HullFlux& hull, double v_d);

struct TrainResult {
  MlpModel model;
  std::vector<LossRecord> history;
};

/// Called after each recorded step; used for progress reporting.
using TrainObserver = std::function<void(const LossRecord&)>;

/// Adam training of a freshly initialized network. `sampler` produces the
/// collocation set for a given seed and is re-invoked when resampling.
/// Throws DivergenceError carrying the step index on a non-finite loss.
TrainResult train_network(const TrainConfig& cfg, const HullFlux& hull,
                          double v_d, MlpModel init,
                          const std::function<CollocationSet(std::uint64_t)>& sampler,
                          const TrainObserver& observer = {});

/// Deterministic PINN at a fixed Darcy velocity.
TrainResult train(const TrainConfig& cfg, const RockFluidParams& p, double v_d,
                  const Architecture& arch, const TrainObserver& observer = {});

/// Network saturation on a uniform grid of `nx` points over [0, x_max],
/// clamped to [0, 1]. `v_d` is appended as third input for three-input
/// networks.
SaturationProfile network_profile(const MlpModel& m, double t, double x_max,
                                  std::size_t nx, double v_d = 1.0);

/// sqrt(mean((S_net - S_moc)^2)) on a uniform grid at time t.
double l2_error(const MlpModel& m, const MocSolution& sol, double t,
                std::size_t nx, double x_max = 2.0);

/// ||S_net - S_moc||_2 / ||S_moc||_2 on the same grid.
double relative_l2_error(const MlpModel& m, const MocSolution& sol, double t,
                         std::size_t nx, double x_max = 2.0);

/// Relative decrease of the best loss reached over the final `fraction` of
/// training: (best_before - best_overall) / best_before.
double late_loss_decrease(const std::vector<LossRecord>& history,
                          double fraction);

void write_loss_csv(const std::vector<LossRecord>& history,
                    const std::filesystem::path& path);

}  // namespace bl
