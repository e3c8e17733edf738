#include "bl/flux.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

namespace bl {

namespace {

constexpr int kMaxIterations = 200;
constexpr int kBracketScan = 2000;

std::string fmt_value(const char* name, double v) {
  std::ostringstream os;
  os << name << " = " << v;
  return os.str();
}

void check_unit(double s, const char* op) {
  if (!(s >= 0.0 && s <= 1.0)) {
    throw DomainError(std::string(op) + ": saturation " + std::to_string(s) +
                      " outside [0, 1]");
  }
}

void check_open(double s, const RockFluidParams& p, const char* op) {
  if (!(s > p.s_wc && s < 1.0 - p.s_gr)) {
    throw DomainError(std::string(op) + ": saturation " + std::to_string(s) +
                      " outside (s_wc, 1 - s_gr)");
  }
}

// Unchecked closed forms in terms of a = S - Swc, b = 1 - S - Sgr.
double flow_raw(double s, const RockFluidParams& p) {
  const double a = s - p.s_wc;
  const double b = 1.0 - s - p.s_gr;
  const double q = p.mobility_ratio * a * a + b * b;
  return p.mobility_ratio * a * a / q;
}

double slope_raw(double s, const RockFluidParams& p) {
  const double a = s - p.s_wc;
  const double b = 1.0 - s - p.s_gr;
  const double m = p.mobility_ratio;
  const double q = m * a * a + b * b;
  return 2.0 * m * (a + b) * a * b / (q * q);
}

double curvature_raw(double s, const RockFluidParams& p) {
  const double a = s - p.s_wc;
  const double b = 1.0 - s - p.s_gr;
  const double m = p.mobility_ratio;
  const double q = m * a * a + b * b;
  return 2.0 * m * (a + b) * ((b - a) * q - 4.0 * a * b * (m * a - b)) /
         (q * q * q);
}

}  // namespace

void RockFluidParams::validate() const {
  auto fail = [](const std::string& what) { throw DomainError(what); };
  if (!std::isfinite(s_wc) || !std::isfinite(s_gr) ||
      !std::isfinite(mobility_ratio) || !std::isfinite(s_inj)) {
    fail("physical parameters must be finite");
  }
  if (!(s_wc >= 0.0 && s_wc < 1.0)) fail("invariant 0 <= s_wc < 1 violated: " + fmt_value("s_wc", s_wc));
  if (!(s_gr >= 0.0 && s_gr < 1.0)) fail("invariant 0 <= s_gr < 1 violated: " + fmt_value("s_gr", s_gr));
  if (!(s_wc < s_inj)) fail("invariant s_wc < s_inj violated: " + fmt_value("s_inj", s_inj));
  if (!(s_inj <= 1.0 - s_gr)) fail("invariant s_inj <= 1 - s_gr violated: " + fmt_value("s_inj", s_inj));
  if (!(mobility_ratio > 0.0)) fail("invariant mobility_ratio > 0 violated: " + fmt_value("mobility_ratio", mobility_ratio));
}

void to_json(nlohmann::json& j, const RockFluidParams& p) {
  j = nlohmann::json{{"s_wc", p.s_wc},
                     {"s_gr", p.s_gr},
                     {"mobility_ratio", p.mobility_ratio},
                     {"s_inj", p.s_inj}};
}

void from_json(const nlohmann::json& j, RockFluidParams& p) {
  RockFluidParams out;
  out.s_wc = j.value("s_wc", out.s_wc);
  out.s_gr = j.value("s_gr", out.s_gr);
  out.mobility_ratio = j.value("mobility_ratio", out.mobility_ratio);
  out.s_inj = j.value("s_inj", out.s_inj);
  p = out;
}

double frac_flow(double s, const RockFluidParams& p) {
  check_unit(s, "frac_flow");
  if (s <= p.s_wc) return 0.0;
  if (s >= 1.0 - p.s_gr) return 1.0;
  return flow_raw(s, p);
}

double frac_flow_deriv(double s, const RockFluidParams& p) {
  check_open(s, p, "frac_flow_deriv");
  return slope_raw(s, p);
}

double frac_flow_deriv2(double s, const RockFluidParams& p) {
  check_open(s, p, "frac_flow_deriv2");
  return curvature_raw(s, p);
}

double tangency_residual(double s, const RockFluidParams& p) {
  return slope_raw(s, p) - flow_raw(s, p) / (s - p.s_wc);
}

HullFlux build_hull(const RockFluidParams& p, double tol) {
  p.validate();
  if (!(tol > 0.0)) throw DomainError("build_hull: tol must be positive");

  const double lo_end = p.s_wc;
  const double hi_end = 1.0 - p.s_gr;
  const double span = hi_end - lo_end;

  // The residual is positive just above s_wc and negative at 1 - s_gr for an
  // S-shaped curve; scan for the first sign change.
  double lo = 0.0;
  double hi = 0.0;
  bool bracketed = false;
  double prev_s = lo_end + span / kBracketScan;
  double prev_r = tangency_residual(prev_s, p);
  for (int i = 2; i < kBracketScan; ++i) {
    const double s = lo_end + span * i / kBracketScan;
    const double r = tangency_residual(s, p);
    if (prev_r > 0.0 && r <= 0.0) {
      lo = prev_s;
      hi = s;
      bracketed = true;
      break;
    }
    prev_s = s;
    prev_r = r;
  }
  if (!bracketed) {
    throw ConvergenceError("build_hull: no tangent bracket found (flux is not S-shaped)");
  }

  double s = 0.5 * (lo + hi);
  int it = 0;
  for (; it < kMaxIterations && hi - lo > 1e-6 * span; ++it) {
    s = 0.5 * (lo + hi);
    if (tangency_residual(s, p) > 0.0) lo = s; else hi = s;
  }
  s = 0.5 * (lo + hi);
  // Newton polish. d/dS [f' - f/(S-Swc)] = f'' - residual/(S-Swc).
  for (; it < kMaxIterations; ++it) {
    const double r = tangency_residual(s, p);
    if (std::abs(r) <= tol) break;
    const double dr = curvature_raw(s, p) - r / (s - p.s_wc);
    double next = s - r / dr;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (tangency_residual(next, p) > 0.0) lo = next; else hi = next;
    if (next == s) break;
    s = next;
  }
  if (std::abs(tangency_residual(s, p)) > tol) {
    throw ConvergenceError("build_hull: tangent did not converge to tolerance");
  }

  HullFlux h;
  h.params = p;
  if (p.s_inj <= s) {
    h.pure_shock = true;
    h.s_tangent = p.s_inj;
  } else {
    h.s_tangent = s;
  }
  h.shock_speed = frac_flow(h.s_tangent, p) / (h.s_tangent - p.s_wc);
  return h;
}

double hull_flow(double s, const HullFlux& h) {
  check_unit(s, "hull_flow");
  const auto& p = h.params;
  if (s <= p.s_wc) return 0.0;
  if (s <= h.s_tangent) return h.shock_speed * (s - p.s_wc);
  return frac_flow(s, p);
}

double hull_flow_deriv(double s, const HullFlux& h) {
  check_unit(s, "hull_flow_deriv");
  return hull_flow_slope_ext(s, h);
}

double frac_flow_slope_ext(double s, const RockFluidParams& p) {
  if (s <= p.s_wc || s >= 1.0 - p.s_gr) return 0.0;
  return slope_raw(s, p);
}

double frac_flow_curvature_ext(double s, const RockFluidParams& p) {
  if (s <= p.s_wc || s >= 1.0 - p.s_gr) return 0.0;
  return curvature_raw(s, p);
}

double hull_flow_slope_ext(double s, const HullFlux& h) {
  const auto& p = h.params;
  if (s <= p.s_wc) return 0.0;
  if (s <= h.s_tangent) return h.shock_speed;
  return frac_flow_slope_ext(s, p);
}

double hull_flow_curvature_ext(double s, const HullFlux& h) {
  if (s <= h.s_tangent) return 0.0;
  return frac_flow_curvature_ext(s, h.params);
}

}  // namespace bl
