#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "bl/flux.hpp"

namespace bl {

/// Analytical Riemann solution for one constant Darcy velocity.
struct MocSolution {
  HullFlux hull;
  double v_d = 1.0;

  MocSolution(HullFlux h, double velocity);
};

/// A saturation snapshot on an ordered grid.
struct SaturationProfile {
  double t = 0.0;
  std::vector<double> xs;
  std::vector<double> ss;
};

/// Saturation at (x, t): constant injection state, rarefaction fan on the
/// original flux above the tangent point, then a shock down to s_wc.
double moc_eval(const MocSolution& sol, double x, double t);

/// Samples moc_eval on `nx` uniformly spaced points covering [0, x_max].
SaturationProfile moc_profile(const MocSolution& sol, double t, double x_max,
                              std::size_t nx);

/// Shock position v_d * shock_speed * t.
double front_radius(const MocSolution& sol, double t);

/// Time at which the shock reaches `x_outlet`.
double breakthrough_time(const MocSolution& sol, double x_outlet);

/// Explicit first-order Godunov scheme for S_t + v_d f(S)_x = 0 on
/// [0, x_max] with inflow state s_inj at x = 0 and a transmissive outlet.
class GodunovSolver {
 public:
  GodunovSolver(const RockFluidParams& p, double v_d, std::size_t nx,
                double cfl, double x_max = 2.0);

  /// Largest step satisfying the CFL bound.
  double stable_dt() const { return dt_max_; }
  void step(double dt);
  /// Integral of (S - s_wc) over the domain.
  double mass() const;
  /// Flux leaving through the outlet face for the current state.
  double outflow_flux() const;
  double dx() const { return dx_; }
  SaturationProfile profile(double t) const;

 private:
  RockFluidParams p_;
  double v_d_;
  double dx_;
  double dt_max_;
  std::vector<double> s_;
  std::vector<double> face_;
};

/// First-order Godunov finite-volume solution on [0, x_max] with `nx` cells,
/// inflow state s_inj at x = 0 and a transmissive outlet. Used as an
/// independent entropy-solution oracle for the MOC.
SaturationProfile godunov_solve(const RockFluidParams& p, double v_d,
                                std::size_t nx, double t_end, double cfl,
                                double x_max = 2.0);

/// Discrete L1 distance dx * sum |a_i - b_i| on a shared uniform grid.
double l1_distance(const SaturationProfile& a, const SaturationProfile& b);

/// Writes "x,s" CSV. Numbers use the shortest round-trip representation.
void write_profile_csv(const SaturationProfile& prof,
                       const std::filesystem::path& path);

/// Canonical file name "profile_t<t>.csv".
std::string profile_file_name(double t);

}  // namespace bl
