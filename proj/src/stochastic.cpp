#include "bl/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "bl/numfmt.hpp"
#include "bl/rng.hpp"

namespace bl {

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// Box-Muller pairs on top of unit_uniform.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : rng_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - unit_uniform(rng_);  // (0, 1]
    const double u2 = unit_uniform(rng_);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

constexpr std::uint64_t kVelocityStream = 0x9E3779B97F4A7C15ull;

}  // namespace

void VelocityDistribution::validate() const {
  if (!std::isfinite(mu) || !std::isfinite(sigma) || !std::isfinite(low) || !std::isfinite(high)) {
    throw std::domain_error("velocity distribution parameters must be finite");
  }
  if (!(low <= high)) throw std::domain_error("velocity distribution requires low < high");
  if (!(sigma >= 0.0)) throw std::domain_error("velocity distribution requires sigma > 0");
  if (!(low > 0.0)) throw std::domain_error("velocity distribution requires positive velocities (low > 0)");
  if (sigma == 0.0 && (mu < low || mu > high)) {
    throw std::domain_error("degenerate velocity distribution: mu outside [low, high]");
  }
}

double VelocityDistribution::acceptance_probability() const {
  if (is_point_mass()) return 1.0;
  return normal_cdf((high - mu) / sigma) - normal_cdf((low - mu) / sigma);
}

void to_json(nlohmann::json& j, const VelocityDistribution& d) {
  j = nlohmann::json{{"mu", d.mu}, {"sigma", d.sigma}, {"low", d.low}, {"high", d.high}};
}

void from_json(const nlohmann::json& j, VelocityDistribution& d) {
  VelocityDistribution out;
  out.mu = j.value("mu", out.mu);
  out.sigma = j.value("sigma", out.sigma);
  out.low = j.value("low", out.low);
  out.high = j.value("high", out.high);
  d = out;
}

std::vector<double> sample_truncnorm(const VelocityDistribution& dist, std::size_t n,
                                     std::uint64_t seed) {
  dist.validate();
  if (n == 0) throw std::invalid_argument("sample_truncnorm: n must be at least 1");
  if (dist.low == dist.high) return std::vector<double>(n, dist.low);
  if (dist.sigma == 0.0) return std::vector<double>(n, dist.mu);
  if (dist.acceptance_probability() < 1e-6) {
    throw std::domain_error("sample_truncnorm: truncation interval has probability below 1e-6");
  }
  NormalStream normal(seed);
  std::vector<double> out;
  out.reserve(n);
  while (out.size() < n) {
    const double v = dist.mu + dist.sigma * normal.next();
    if (v >= dist.low && v <= dist.high) out.push_back(v);
  }
  return out;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("percentile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

namespace {

// Runs body(begin, end) over contiguous blocks of [0, n). Every index is
// handled by exactly one call and writes only its own slots, so results do
// not depend on the thread count.
void parallel_blocks(std::size_t n, int threads,
                     const std::function<void(std::size_t, std::size_t)>& body) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n);
  if (workers <= 1) {
    body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = n * w / workers;
    const std::size_t end = n * (w + 1) / workers;
    pool.emplace_back([&, w, begin, end] {
      try {
        body(begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Fills mean/p15/p85 from samples[ti][xi][k].
void reduce_samples(EnsembleStats& s, const std::vector<std::vector<double>>& columns,
                    int threads) {
  const std::size_t nt = s.times.size();
  const std::size_t nx = s.xs.size();
  s.mean_s.assign(nt * nx, 0.0);
  s.p15_s.assign(nt * nx, 0.0);
  s.p85_s.assign(nt * nx, 0.0);
  parallel_blocks(nt * nx, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c) {
      const auto& col = columns[c];
      double sum = 0.0;
      for (double v : col) sum += v;
      s.mean_s[c] = sum / static_cast<double>(col.size());
      s.p15_s[c] = percentile(col, 0.15);
      s.p85_s[c] = percentile(col, 0.85);
    }
  });
}

}  // namespace

EnsembleStats mc_moc_baseline(const RockFluidParams& p, const VelocityDistribution& dist,
                              std::size_t n, const std::vector<double>& times,
                              const std::vector<double>& xs, std::uint64_t seed,
                              int threads) {
  if (n < 2) throw std::invalid_argument("mc_moc_baseline: n must be at least 2");
  const HullFlux hull = build_hull(p);
  EnsembleStats s;
  s.times = times;
  s.xs = xs;
  s.velocities = sample_truncnorm(dist, n, seed);
  const std::size_t nt = times.size();
  const std::size_t nx = xs.size();
  std::vector<std::vector<double>> columns(nt * nx, std::vector<double>(n));
  s.front_radii.assign(nt, std::vector<double>(n));
  parallel_blocks(n, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      const MocSolution sol(hull, s.velocities[k]);
      for (std::size_t ti = 0; ti < nt; ++ti) {
        s.front_radii[ti][k] = front_radius(sol, times[ti]);
        for (std::size_t xi = 0; xi < nx; ++xi) {
          columns[ti * nx + xi][k] = moc_eval(sol, xs[xi], times[ti]);
        }
      }
    }
  });
  reduce_samples(s, columns, threads);
  return s;
}

CollocationSet sample_parameterized_collocation(const CollocationCounts& counts,
                                                const SpaceTimeDomain& domain,
                                                const VelocityDistribution& dist,
                                                std::uint64_t seed) {
  CollocationSet c = sample_collocation(counts, domain, seed);
  const std::vector<double> v =
      sample_truncnorm(dist, counts.n_r + counts.n_bc + counts.n_ic, seed ^ kVelocityStream);
  auto it = v.begin();
  c.residual_v.assign(it, it + static_cast<std::ptrdiff_t>(counts.n_r));
  it += static_cast<std::ptrdiff_t>(counts.n_r);
  c.boundary_v.assign(it, it + static_cast<std::ptrdiff_t>(counts.n_bc));
  it += static_cast<std::ptrdiff_t>(counts.n_bc);
  c.initial_v.assign(it, v.end());
  return c;
}

TrainResult train_ppinn(const TrainConfig& cfg, const RockFluidParams& p,
                        const VelocityDistribution& dist, const Architecture& arch,
                        const TrainObserver& observer) {
  dist.validate();
  const HullFlux hull = build_hull(p);
  MlpModel init = init_params(arch.layer_sizes(3), arch.hidden_activation, cfg.param_seed,
                              arch.output_activation);
  return train_network(
      cfg, hull, dist.mu, std::move(init),
      [&](std::uint64_t seed) {
        return sample_parameterized_collocation(cfg.counts, cfg.domain, dist, seed);
      },
      observer);
}

double extract_front(const std::vector<double>& xs, const std::vector<double>& ss,
                     double threshold) {
  for (std::size_t i = ss.size(); i-- > 0;) {
    if (ss[i] > threshold) {
      if (i + 1 == ss.size()) return xs[i];
      const double frac = (ss[i] - threshold) / (ss[i] - ss[i + 1]);
      return xs[i] + frac * (xs[i + 1] - xs[i]);
    }
  }
  return xs.front();
}

EnsembleStats ppinn_ensemble_stats(const MlpModel& m, const HullFlux& hull,
                                   const VelocityDistribution& dist, std::size_t n,
                                   const std::vector<double>& times,
                                   const std::vector<double>& xs, std::uint64_t seed,
                                   int threads) {
  if (m.input_width() != 3) throw DimensionError("ppinn_ensemble_stats: model must take (x, t, v_d)");
  if (n == 0) throw std::invalid_argument("ppinn_ensemble_stats: n must be at least 1");
  EnsembleStats s;
  s.times = times;
  s.xs = xs;
  s.velocities = sample_truncnorm(dist, n, seed);
  const std::size_t nt = times.size();
  const std::size_t nx = xs.size();
  const double threshold =
      hull.params.s_wc + 0.5 * (hull.s_tangent - hull.params.s_wc);

  std::vector<std::vector<double>> columns(nt * nx, std::vector<double>(n));
  s.front_radii.assign(nt, std::vector<double>(n));
  parallel_blocks(n, threads, [&](std::size_t begin, std::size_t end) {
    Eigen::MatrixXd inputs(3, static_cast<Eigen::Index>(nx));
    for (std::size_t xi = 0; xi < nx; ++xi) inputs(0, static_cast<Eigen::Index>(xi)) = xs[xi];
    std::vector<double> profile(nx);
    NetworkTape tape;
    for (std::size_t k = begin; k < end; ++k) {
      inputs.row(2).setConstant(s.velocities[k]);
      for (std::size_t ti = 0; ti < nt; ++ti) {
        inputs.row(1).setConstant(times[ti]);
        const BatchOutputs& out = tape.forward(m, inputs, {});
        for (std::size_t xi = 0; xi < nx; ++xi) {
          profile[xi] = std::clamp(out.value[static_cast<Eigen::Index>(xi)], 0.0, 1.0);
          columns[ti * nx + xi][k] = profile[xi];
        }
        s.front_radii[ti][k] = extract_front(xs, profile, threshold);
      }
    }
  });
  reduce_samples(s, columns, threads);
  return s;
}

double mean_profile_gap(const EnsembleStats& a, const EnsembleStats& b) {
  if (a.mean_s.size() != b.mean_s.size() || a.mean_s.empty()) {
    throw std::invalid_argument("mean_profile_gap: ensembles must share a grid");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.mean_s.size(); ++i) sum += std::abs(a.mean_s[i] - b.mean_s[i]);
  return sum / static_cast<double>(a.mean_s.size());
}

double max_slope(const std::vector<double>& xs, const std::vector<double>& ss) {
  double best = 0.0;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    best = std::max(best, std::abs(ss[i + 1] - ss[i]) / (xs[i + 1] - xs[i]));
  }
  return best;
}

std::vector<double> report_times(double t_max, std::size_t count) {
  std::vector<double> t(count);
  for (std::size_t i = 0; i < count; ++i) {
    t[i] = t_max * static_cast<double>(i + 1) / static_cast<double>(count);
  }
  return t;
}

std::vector<double> uniform_grid(double x_max, std::size_t nx) {
  if (nx < 2) throw std::invalid_argument("uniform_grid: need at least two points");
  std::vector<double> xs(nx);
  for (std::size_t i = 0; i < nx; ++i) {
    xs[i] = x_max * static_cast<double>(i) / static_cast<double>(nx - 1);
  }
  return xs;
}

void write_envelope_csv(const EnsembleStats& s, std::size_t ti, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << "x,mean,p15,p85\n";
  for (std::size_t xi = 0; xi < s.xs.size(); ++xi) {
    out << shortest(s.xs[xi]) << ',' << shortest(s.at(s.mean_s, ti, xi)) << ','
        << shortest(s.at(s.p15_s, ti, xi)) << ',' << shortest(s.at(s.p85_s, ti, xi)) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_front_csv(const EnsembleStats& s, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << "realization,t,radius\n";
  for (std::size_t ti = 0; ti < s.times.size(); ++ti) {
    for (std::size_t k = 0; k < s.front_radii[ti].size(); ++k) {
      out << k << ',' << shortest(s.times[ti]) << ',' << shortest(s.front_radii[ti][k]) << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace bl
