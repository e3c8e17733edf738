#include "bl/pinn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "bl/numfmt.hpp"
#include "bl/rng.hpp"

namespace bl {

namespace {
constexpr std::array<int, 2> kSpaceTime = {0, 1};
}  // namespace

std::string to_string(FluxMode mode) {
  return mode == FluxMode::kHull ? "hull" : "naive";
}

FluxMode flux_mode_from_string(const std::string& name) {
  if (name == "hull") return FluxMode::kHull;
  if (name == "naive") return FluxMode::kNaive;
  throw std::invalid_argument("unknown flux_mode '" + name + "' (expected naive or hull)");
}

CollocationSet sample_collocation(const CollocationCounts& counts,
                                  const SpaceTimeDomain& domain,
                                  std::uint64_t seed) {
  if (counts.n_r == 0 || counts.n_bc == 0 || counts.n_ic == 0) {
    throw std::invalid_argument("collocation counts must be positive");
  }
  std::mt19937_64 rng(seed);
  CollocationSet c;
  c.seed = seed;
  c.residual_pts.resize(counts.n_r);
  for (auto& pt : c.residual_pts) {
    pt[0] = domain.x_max * unit_uniform(rng);
    pt[1] = domain.t_max * unit_uniform(rng);
  }
  c.boundary_pts.resize(counts.n_bc);
  for (auto& t : c.boundary_pts) t = domain.t_max * unit_uniform(rng);
  c.initial_pts.resize(counts.n_ic);
  for (auto& x : c.initial_pts) x = domain.x_max * unit_uniform(rng);
  return c;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument(what); };
  if (!(adam.learning_rate > 0.0)) fail("train.learning_rate must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) fail("train.adam.beta1 must lie in [0, 1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) fail("train.adam.beta2 must lie in [0, 1)");
  if (!(adam.epsilon > 0.0)) fail("train.adam.eps must be positive");
  if (!(loss_weights.residual > 0.0 && loss_weights.boundary > 0.0 && loss_weights.initial > 0.0)) {
    fail("train.loss_weights must be positive");
  }
  if (counts.n_r == 0 || counts.n_bc == 0 || counts.n_ic == 0) fail("train.counts must be positive");
  if (!(domain.x_max > 0.0 && domain.t_max > 0.0)) fail("domain extents must be positive");
  if (record_every == 0) fail("train.record_every must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{
      {"flux_mode", to_string(c.flux_mode)},
      {"iterations", c.iterations},
      {"learning_rate", c.adam.learning_rate},
      {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.epsilon}}},
      {"loss_weights", {c.loss_weights.residual, c.loss_weights.boundary, c.loss_weights.initial}},
      {"counts", {{"n_r", c.counts.n_r}, {"n_bc", c.counts.n_bc}, {"n_ic", c.counts.n_ic}}},
      {"resample_every", c.resample_every},
      {"record_every", c.record_every},
  };
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig out = c;
  if (j.contains("flux_mode")) out.flux_mode = flux_mode_from_string(j.at("flux_mode").get<std::string>());
  out.iterations = j.value("iterations", out.iterations);
  out.adam.learning_rate = j.value("learning_rate", out.adam.learning_rate);
  if (j.contains("adam")) {
    const auto& a = j.at("adam");
    out.adam.beta1 = a.value("beta1", out.adam.beta1);
    out.adam.beta2 = a.value("beta2", out.adam.beta2);
    out.adam.epsilon = a.value("eps", out.adam.epsilon);
  }
  if (j.contains("loss_weights")) {
    const auto w = j.at("loss_weights").get<std::vector<double>>();
    if (w.size() != 3) throw std::invalid_argument("train.loss_weights must have three entries");
    out.loss_weights = {w[0], w[1], w[2]};
  }
  if (j.contains("counts")) {
    const auto& n = j.at("counts");
    out.counts.n_r = n.value("n_r", out.counts.n_r);
    out.counts.n_bc = n.value("n_bc", out.counts.n_bc);
    out.counts.n_ic = n.value("n_ic", out.counts.n_ic);
  }
  out.resample_every = j.value("resample_every", out.resample_every);
  out.record_every = j.value("record_every", out.record_every);
  c = out;
}

std::vector<int> Architecture::layer_sizes(int input_width) const {
  std::vector<int> sizes;
  sizes.push_back(input_width);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  return sizes;
}

void to_json(nlohmann::json& j, const Architecture& a) {
  j = nlohmann::json{{"hidden", a.hidden},
                     {"hidden_activation", to_string(a.hidden_activation)},
                     {"output_activation", to_string(a.output_activation)}};
}

void from_json(const nlohmann::json& j, Architecture& a) {
  Architecture out = a;
  if (j.contains("hidden")) out.hidden = j.at("hidden").get<std::vector<int>>();
  if (j.contains("hidden_activation")) {
    out.hidden_activation = activation_from_string(j.at("hidden_activation").get<std::string>());
  }
  if (j.contains("output_activation")) {
    out.output_activation = activation_from_string(j.at("output_activation").get<std::string>());
  }
  for (int w : out.hidden) {
    if (w <= 0) throw std::invalid_argument("arch.hidden widths must be positive");
  }
  a = out;
}

double residual_from_derivatives(double s, double s_x, double s_t, double v_d,
                                 FluxMode mode, const HullFlux& hull) {
  const double slope = mode == FluxMode::kHull ? hull_flow_slope_ext(s, hull)
                                               : frac_flow_slope_ext(s, hull.params);
  return s_t + v_d * slope * s_x;
}

double pinn_residual(const MlpModel& m, std::span<const double> point,
                     FluxMode mode, const HullFlux& hull, double v_d) {
  const double s = forward(m, point);
  const Eigen::VectorXd grad = input_jacobian(m, point);
  const double v = m.input_width() >= 3 ? point[2] : v_d;
  const double r = residual_from_derivatives(s, grad[0], grad[1], v, mode, hull);
  if (!std::isfinite(r)) throw DivergenceError("non-finite residual");
  return r;
}

PinnObjective::PinnObjective(const HullFlux& hull, FluxMode mode, LossWeights weights,
                             double v_d)
    : hull_(hull), mode_(mode), weights_(weights), v_d_(v_d) {}

void PinnObjective::set_points(const CollocationSet& c) {
  const bool with_v = c.has_velocity();
  if (with_v && (c.residual_v.size() != c.residual_pts.size() ||
                 c.boundary_v.size() != c.boundary_pts.size() ||
                 c.initial_v.size() != c.initial_pts.size())) {
    throw DimensionError("collocation velocity samples do not match point counts");
  }
  n_r_ = static_cast<Eigen::Index>(c.residual_pts.size());
  n_bc_ = static_cast<Eigen::Index>(c.boundary_pts.size());
  n_ic_ = static_cast<Eigen::Index>(c.initial_pts.size());
  if (n_r_ == 0 || n_bc_ == 0 || n_ic_ == 0) {
    throw std::invalid_argument("collocation set must have points in every group");
  }
  inputs_.resize(with_v ? 3 : 2, n_r_ + n_bc_ + n_ic_);
  velocity_.assign(static_cast<std::size_t>(n_r_), v_d_);
  Eigen::Index col = 0;
  for (Eigen::Index i = 0; i < n_r_; ++i, ++col) {
    inputs_(0, col) = c.residual_pts[i][0];
    inputs_(1, col) = c.residual_pts[i][1];
    if (with_v) {
      inputs_(2, col) = c.residual_v[i];
      velocity_[i] = c.residual_v[i];
    }
  }
  for (Eigen::Index i = 0; i < n_bc_; ++i, ++col) {
    inputs_(0, col) = 0.0;
    inputs_(1, col) = c.boundary_pts[i];
    if (with_v) inputs_(2, col) = c.boundary_v[i];
  }
  for (Eigen::Index i = 0; i < n_ic_; ++i, ++col) {
    inputs_(0, col) = c.initial_pts[i];
    inputs_(1, col) = 0.0;
    if (with_v) inputs_(2, col) = c.initial_v[i];
  }
}

void PinnObjective::accumulate(const BatchOutputs& out, Eigen::Index first, Sums& sums,
                               LossAdjoint* adj) const {
  const Eigen::Index w = out.value.size();
  const auto& p = hull_.params;
  const bool hull = mode_ == FluxMode::kHull;
  const double cr = 2.0 * weights_.residual / static_cast<double>(n_r_);
  const double cbc = 2.0 * weights_.boundary / static_cast<double>(n_bc_);
  const double cic = 2.0 * weights_.initial / static_cast<double>(n_ic_);
  if (adj) {
    adj->d_value.setZero(w);
    adj->d_dinput.setZero(2, w);
  }
  for (Eigen::Index j = 0; j < w; ++j) {
    const Eigen::Index i = first + j;
    const double u = out.value[j];
    if (i < n_r_) {
      const double ux = out.d_dinput(0, j);
      const double ut = out.d_dinput(1, j);
      const double v = velocity_[static_cast<std::size_t>(i)];
      const double slope = hull ? hull_flow_slope_ext(u, hull_) : frac_flow_slope_ext(u, p);
      const double r = ut + v * slope * ux;
      sums.r += r * r;
      if (adj) {
        const double curv = hull ? hull_flow_curvature_ext(u, hull_) : frac_flow_curvature_ext(u, p);
        adj->d_value[j] = cr * r * v * curv * ux;
        adj->d_dinput(0, j) = cr * r * v * slope;
        adj->d_dinput(1, j) = cr * r;
      }
    } else if (i < n_r_ + n_bc_) {
      const double e = u - p.s_inj;
      sums.bc += e * e;
      if (adj) adj->d_value[j] = cbc * e;
    } else {
      const double e = u - p.s_wc;
      sums.ic += e * e;
      if (adj) adj->d_value[j] = cic * e;
    }
  }
}

LossRecord PinnObjective::finish(const Sums& sums) const {
  LossRecord rec;
  rec.loss_residual = sums.r / static_cast<double>(n_r_);
  rec.loss_bc = sums.bc / static_cast<double>(n_bc_);
  rec.loss_ic = sums.ic / static_cast<double>(n_ic_);
  rec.loss_total = weights_.residual * rec.loss_residual + weights_.boundary * rec.loss_bc +
                   weights_.initial * rec.loss_ic;
  if (!std::isfinite(rec.loss_total)) throw DivergenceError("non-finite loss");
  return rec;
}

LossRecord PinnObjective::evaluate(const MlpModel& m) {
  const BatchOutputs& out = tape_.forward(m, inputs_, kSpaceTime);
  Sums sums;
  accumulate(out, 0, sums, nullptr);
  return finish(sums);
}

LossRecord PinnObjective::evaluate_with_gradient(const MlpModel& m, Eigen::VectorXd& grad) {
  Sums sums;
  LossAdjoint adj;
  tape_.forward_backward(
      m, inputs_, kSpaceTime,
      [&](const BatchOutputs& out, Eigen::Index first) {
        accumulate(out, first, sums, &adj);
        return adj;
      },
      grad);
  const LossRecord rec = finish(sums);
  if (!grad.allFinite()) throw DivergenceError("non-finite gradient");
  return rec;
}

LossRecord total_loss(const MlpModel& m, const CollocationSet& c, const TrainConfig& cfg,
                      const HullFlux& hull, double v_d) {
  PinnObjective obj(hull, cfg.flux_mode, cfg.loss_weights, v_d);
  obj.set_points(c);
  if (obj.input_width() != m.input_width()) {
    throw DimensionError("collocation set and network disagree on input width");
  }
  return obj.evaluate(m);
}

TrainResult train_network(const TrainConfig& cfg, const HullFlux& hull, double v_d,
                          MlpModel init,
                          const std::function<CollocationSet(std::uint64_t)>& sampler,
                          const TrainObserver& observer) {
  cfg.validate();
  TrainResult result;
  result.model = std::move(init);
  MlpModel& model = result.model;

  PinnObjective objective(hull, cfg.flux_mode, cfg.loss_weights, v_d);
  objective.set_points(sampler(cfg.collocation_seed));
  if (objective.input_width() != model.input_width()) {
    throw DimensionError("collocation set and network disagree on input width");
  }

  auto record = [&](LossRecord rec, std::uint64_t step) {
    rec.step = step;
    result.history.push_back(rec);
    if (observer) observer(rec);
  };

  Eigen::VectorXd theta = model.flat_params();
  Eigen::VectorXd grad;
  Adam adam(theta.size(), cfg.adam);
  for (std::uint64_t step = 0; step < cfg.iterations; ++step) {
    if (cfg.resample_every > 0 && step > 0 && step % cfg.resample_every == 0) {
      objective.set_points(sampler(cfg.collocation_seed + step / cfg.resample_every));
    }
    LossRecord rec;
    try {
      rec = objective.evaluate_with_gradient(model, grad);
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string(e.what()) + " at step " + std::to_string(step),
                            static_cast<std::int64_t>(step));
    }
    if (step % cfg.record_every == 0) record(rec, step);
    adam.step(theta, grad);
    if (!theta.allFinite()) {
      throw DivergenceError("non-finite parameters at step " + std::to_string(step),
                            static_cast<std::int64_t>(step));
    }
    model.set_flat_params(theta);
    model.step += 1;
  }
  try {
    record(objective.evaluate(model), cfg.iterations);
  } catch (const DivergenceError& e) {
    throw DivergenceError(std::string(e.what()) + " at step " + std::to_string(cfg.iterations),
                          static_cast<std::int64_t>(cfg.iterations));
  }
  return result;
}

TrainResult train(const TrainConfig& cfg, const RockFluidParams& p, double v_d,
                  const Architecture& arch, const TrainObserver& observer) {
  const HullFlux hull = build_hull(p);
  MlpModel init = init_params(arch.layer_sizes(2), arch.hidden_activation, cfg.param_seed,
                              arch.output_activation);
  return train_network(
      cfg, hull, v_d, std::move(init),
      [&cfg](std::uint64_t seed) { return sample_collocation(cfg.counts, cfg.domain, seed); },
      observer);
}

SaturationProfile network_profile(const MlpModel& m, double t, double x_max, std::size_t nx,
                                  double v_d) {
  if (nx < 2) throw std::invalid_argument("network_profile: need at least two points");
  const int width = m.input_width();
  if (width != 2 && width != 3) throw DimensionError("network_profile: expects 2 or 3 inputs");
  Eigen::MatrixXd inputs(width, static_cast<Eigen::Index>(nx));
  SaturationProfile prof;
  prof.t = t;
  prof.xs.resize(nx);
  for (std::size_t i = 0; i < nx; ++i) {
    const double x = x_max * static_cast<double>(i) / static_cast<double>(nx - 1);
    prof.xs[i] = x;
    inputs(0, static_cast<Eigen::Index>(i)) = x;
    inputs(1, static_cast<Eigen::Index>(i)) = t;
    if (width == 3) inputs(2, static_cast<Eigen::Index>(i)) = v_d;
  }
  NetworkTape tape;
  const BatchOutputs& out = tape.forward(m, inputs, {});
  prof.ss.resize(nx);
  for (std::size_t i = 0; i < nx; ++i) {
    prof.ss[i] = std::clamp(out.value[static_cast<Eigen::Index>(i)], 0.0, 1.0);
  }
  return prof;
}

namespace {

std::pair<double, double> error_sums(const MlpModel& m, const MocSolution& sol, double t,
                                     std::size_t nx, double x_max) {
  if (nx < 100) throw std::invalid_argument("l2_error: nx must be at least 100");
  const SaturationProfile net = network_profile(m, t, x_max, nx, sol.v_d);
  double err = 0.0;
  double ref = 0.0;
  for (std::size_t i = 0; i < nx; ++i) {
    const double s_ref = moc_eval(sol, net.xs[i], t);
    const double d = net.ss[i] - s_ref;
    err += d * d;
    ref += s_ref * s_ref;
  }
  return {err, ref};
}

}  // namespace

double l2_error(const MlpModel& m, const MocSolution& sol, double t, std::size_t nx,
                double x_max) {
  const auto [err, ref] = error_sums(m, sol, t, nx, x_max);
  return std::sqrt(err / static_cast<double>(nx));
}

double relative_l2_error(const MlpModel& m, const MocSolution& sol, double t, std::size_t nx,
                         double x_max) {
  const auto [err, ref] = error_sums(m, sol, t, nx, x_max);
  return std::sqrt(err / ref);
}

double late_loss_decrease(const std::vector<LossRecord>& history, double fraction) {
  if (history.size() < 2) return 0.0;
  const double last = static_cast<double>(history.back().step);
  const double cutoff = last * (1.0 - fraction);
  double best_before = std::numeric_limits<double>::infinity();
  double best_all = std::numeric_limits<double>::infinity();
  for (const auto& rec : history) {
    if (static_cast<double>(rec.step) <= cutoff) best_before = std::min(best_before, rec.loss_total);
    best_all = std::min(best_all, rec.loss_total);
  }
  if (!std::isfinite(best_before) || best_before <= 0.0) return 0.0;
  return (best_before - best_all) / best_before;
}

void write_loss_csv(const std::vector<LossRecord>& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << "step,loss_r,loss_bc,loss_ic,loss_total\n";
  for (const auto& r : history) {
    out << r.step << ',' << shortest(r.loss_residual) << ',' << shortest(r.loss_bc) << ','
        << shortest(r.loss_ic) << ',' << shortest(r.loss_total) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace bl
