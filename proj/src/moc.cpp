#include "bl/moc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "bl/numfmt.hpp"

namespace bl {

MocSolution::MocSolution(HullFlux h, double velocity)
    : hull(std::move(h)), v_d(velocity) {
  if (!(v_d > 0.0) || !std::isfinite(v_d)) {
    throw DomainError("MocSolution: v_d must be positive and finite");
  }
}

namespace {

// Inverts f'(s) = xi on (s_tangent, s_inj), where f' is strictly decreasing.
double invert_fan(const HullFlux& h, double xi) {
  double lo = h.s_tangent;
  double hi = h.params.s_inj;
  for (int i = 0; i < 200 && hi - lo > 1e-14; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (frac_flow_slope_ext(mid, h.params) > xi) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

double moc_eval(const MocSolution& sol, double x, double t) {
  const auto& h = sol.hull;
  const auto& p = h.params;
  if (!(x >= 0.0) || !(t >= 0.0)) {
    throw DomainError("moc_eval: requires x >= 0 and t >= 0");
  }
  // The corner (0, 0) belongs to the initial state.
  if (t == 0.0) return p.s_wc;
  if (x == 0.0) return p.s_inj;
  const double xi = x / (sol.v_d * t);
  if (xi >= h.shock_speed) return p.s_wc;
  if (h.pure_shock) return p.s_inj;
  const double inj_speed = frac_flow_slope_ext(p.s_inj, p);
  if (xi <= inj_speed) return p.s_inj;
  return invert_fan(h, xi);
}

SaturationProfile moc_profile(const MocSolution& sol, double t, double x_max,
                              std::size_t nx) {
  if (nx < 2) throw DomainError("moc_profile: need at least two points");
  SaturationProfile prof;
  prof.t = t;
  prof.xs.resize(nx);
  prof.ss.resize(nx);
  for (std::size_t i = 0; i < nx; ++i) {
    const double x = x_max * static_cast<double>(i) / static_cast<double>(nx - 1);
    prof.xs[i] = x;
    prof.ss[i] = moc_eval(sol, x, t);
  }
  return prof;
}

double front_radius(const MocSolution& sol, double t) {
  if (!(t >= 0.0)) throw DomainError("front_radius: t must be non-negative");
  return sol.v_d * sol.hull.shock_speed * t;
}

double breakthrough_time(const MocSolution& sol, double x_outlet) {
  if (!(x_outlet > 0.0)) throw DomainError("breakthrough_time: x_outlet must be positive");
  return x_outlet / (sol.v_d * sol.hull.shock_speed);
}

namespace {

// Exact scalar Godunov flux: min of f over [uL, uR] when uL <= uR, max over
// [uR, uL] otherwise. f is non-decreasing, so the extrema sit at the ends.
double godunov_flux(double ul, double ur, const RockFluidParams& p) {
  const double fl = frac_flow(ul, p);
  const double fr = frac_flow(ur, p);
  return ul <= ur ? std::min(fl, fr) : std::max(fl, fr);
}

}  // namespace

GodunovSolver::GodunovSolver(const RockFluidParams& p, double v_d,
                             std::size_t nx, double cfl, double x_max)
    : p_(p), v_d_(v_d), dx_(x_max / static_cast<double>(nx)),
      s_(nx, p.s_wc), face_(nx + 1) {
  p.validate();
  if (nx < 50) throw DomainError("godunov_solve: nx must be at least 50");
  if (!(cfl > 0.0 && cfl < 1.0)) throw DomainError("godunov_solve: cfl must lie in (0, 1)");
  if (!(v_d > 0.0)) throw DomainError("godunov_solve: v_d must be positive");
  if (!(x_max > 0.0)) throw DomainError("godunov_solve: x_max must be positive");

  double max_speed = 0.0;
  constexpr int kSamples = 4000;
  for (int i = 0; i <= kSamples; ++i) {
    const double u = p.s_wc + (p.s_inj - p.s_wc) * i / kSamples;
    max_speed = std::max(max_speed, frac_flow_slope_ext(u, p));
  }
  dt_max_ = cfl * dx_ / (v_d * max_speed);
  if (!(dt_max_ > 0.0) || !std::isfinite(dt_max_)) {
    throw DomainError("godunov_solve: CFL condition yields non-positive time step");
  }
}

void GodunovSolver::step(double dt) {
  const std::size_t nx = s_.size();
  const double ratio = v_d_ * dt / dx_;
  face_[0] = godunov_flux(p_.s_inj, s_[0], p_);
  for (std::size_t i = 1; i < nx; ++i) face_[i] = godunov_flux(s_[i - 1], s_[i], p_);
  face_[nx] = godunov_flux(s_[nx - 1], s_[nx - 1], p_);
  for (std::size_t i = 0; i < nx; ++i) s_[i] -= ratio * (face_[i + 1] - face_[i]);
}

double GodunovSolver::mass() const {
  double sum = 0.0;
  for (double v : s_) sum += v - p_.s_wc;
  return sum * dx_;
}

double GodunovSolver::outflow_flux() const {
  return frac_flow(s_.back(), p_);
}

SaturationProfile GodunovSolver::profile(double t) const {
  SaturationProfile prof;
  prof.t = t;
  prof.xs.resize(s_.size());
  for (std::size_t i = 0; i < s_.size(); ++i) {
    prof.xs[i] = (static_cast<double>(i) + 0.5) * dx_;
  }
  prof.ss = s_;
  return prof;
}

SaturationProfile godunov_solve(const RockFluidParams& p, double v_d,
                                std::size_t nx, double t_end, double cfl,
                                double x_max) {
  if (!(t_end >= 0.0)) throw DomainError("godunov_solve: t_end must be non-negative");
  GodunovSolver solver(p, v_d, nx, cfl, x_max);
  if (t_end == 0.0) return solver.profile(0.0);
  const auto n_steps = static_cast<std::size_t>(std::ceil(t_end / solver.stable_dt()));
  const double dt = t_end / static_cast<double>(n_steps);
  for (std::size_t k = 0; k < n_steps; ++k) solver.step(dt);
  return solver.profile(t_end);
}

double l1_distance(const SaturationProfile& a, const SaturationProfile& b) {
  if (a.xs.size() != b.xs.size() || a.xs.size() < 2) {
    throw DomainError("l1_distance: profiles must share a grid");
  }
  const double dx = a.xs[1] - a.xs[0];
  double sum = 0.0;
  for (std::size_t i = 0; i < a.ss.size(); ++i) sum += std::abs(a.ss[i] - b.ss[i]);
  return sum * dx;
}

void write_profile_csv(const SaturationProfile& prof,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << "x,s\n";
  for (std::size_t i = 0; i < prof.xs.size(); ++i) {
    out << shortest(prof.xs[i]) << ',' << shortest(prof.ss[i]) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string profile_file_name(double t) {
  return "profile_t" + shortest(t) + ".csv";
}

}  // namespace bl
