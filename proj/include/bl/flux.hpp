#pragma once

#include <stdexcept>
#include <string>

#include <nlohmann/json_fwd.hpp>

namespace bl {

/// Raised when an argument falls outside the domain of a flux operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised when a root finder cannot bracket or converge.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Physical constants of a two-phase displacement.
struct RockFluidParams {
  double s_wc = 0.1;            ///< connate wetting saturation
  double s_gr = 0.1;            ///< residual non-wetting saturation
  double mobility_ratio = 2.0;  ///< endpoint mobility ratio M
  double s_inj = 0.9;           ///< injected (inlet) saturation

  /// Throws DomainError naming the first violated invariant.
  void validate() const;

  bool operator==(const RockFluidParams&) const = default;
};

void to_json(nlohmann::json& j, const RockFluidParams& p);
void from_json(const nlohmann::json& j, RockFluidParams& p);

/// Fractional flow f(S) = (S-Swc)^2 / ((S-Swc)^2 + (1-S-Sgr)^2/M).
/// Clamped to 0 below s_wc and to 1 above 1 - s_gr. Throws outside [0, 1].
double frac_flow(double s, const RockFluidParams& p);

/// Analytic f'(S) on the open interval (s_wc, 1 - s_gr).
double frac_flow_deriv(double s, const RockFluidParams& p);

/// Analytic f''(S) on the open interval (s_wc, 1 - s_gr).
double frac_flow_deriv2(double s, const RockFluidParams& p);

/// Convexified fractional-flow curve: a chord from (s_wc, 0) to the
/// tangent point followed by the original curve.
///
/// When s_inj does not exceed the tangent saturation the Riemann solution
/// is a single shock; `pure_shock` is then set and the chord ends at s_inj.
struct HullFlux {
  RockFluidParams params;
  double s_tangent = 0.0;    ///< end of the chord segment
  double shock_speed = 0.0;  ///< f(s_tangent) / (s_tangent - s_wc)
  bool pure_shock = false;
};

/// Builds the hull by solving f'(S) = f(S)/(S - s_wc) with a bracketed
/// bisection followed by Newton polishing. `tol` bounds the tangency residual.
HullFlux build_hull(const RockFluidParams& p, double tol = 1e-12);

/// Tangency residual f'(S) - f(S)/(S - s_wc).
double tangency_residual(double s, const RockFluidParams& p);

double hull_flow(double s, const HullFlux& h);

/// Slope of the hull. At the junction the chord slope is returned.
double hull_flow_deriv(double s, const HullFlux& h);

// Total extensions used on the PINN residual path, where the network output
// may wander outside [0, 1] during training. Both are constant (zero slope)
// outside [s_wc, 1 - s_gr].
double frac_flow_slope_ext(double s, const RockFluidParams& p);
double frac_flow_curvature_ext(double s, const RockFluidParams& p);
double hull_flow_slope_ext(double s, const HullFlux& h);
double hull_flow_curvature_ext(double s, const HullFlux& h);

}  // namespace bl
