#include "bl/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "bl/rng.hpp"

namespace bl {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kTanh: return "tanh";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kRelu: return "relu";
    case Activation::kLinear: return "linear";
  }
  return "unknown";
}

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "relu") return Activation::kRelu;
  if (name == "linear") return Activation::kLinear;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) n += weights[i].size() + biases[i].size();
  return n;
}

Eigen::VectorXd MlpModel::flat_params() const {
  Eigen::VectorXd theta(parameter_count());
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const auto& w = weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) theta[k++] = w(r, c);
    for (Eigen::Index r = 0; r < biases[l].size(); ++r) theta[k++] = biases[l][r];
  }
  return theta;
}

void MlpModel::set_flat_params(const Eigen::VectorXd& theta) {
  if (static_cast<std::size_t>(theta.size()) != parameter_count()) {
    throw DimensionError("set_flat_params: expected " + std::to_string(parameter_count()) +
                         " parameters, got " + std::to_string(theta.size()));
  }
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    auto& w = weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = theta[k++];
    for (Eigen::Index r = 0; r < biases[l].size(); ++r) biases[l][r] = theta[k++];
  }
}

void MlpModel::validate() const {
  if (layer_sizes.size() < 2) throw DimensionError("network needs at least an input and an output layer");
  for (int n : layer_sizes) {
    if (n <= 0) throw DimensionError("layer sizes must be positive");
  }
  if (layer_sizes.back() != 1) throw DimensionError("network output width must be 1");
  if (weights.size() != layer_sizes.size() - 1 || biases.size() != weights.size()) {
    throw DimensionError("parameter list length does not match layer_sizes");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != layer_sizes[l + 1] || weights[l].cols() != layer_sizes[l] ||
        biases[l].size() != layer_sizes[l + 1]) {
      throw DimensionError("layer " + std::to_string(l) + " dimensions do not chain");
    }
    if (!weights[l].allFinite() || !biases[l].allFinite()) {
      throw DimensionError("layer " + std::to_string(l) + " holds non-finite parameters");
    }
  }
}

namespace {

bool smooth(Activation a) { return a != Activation::kRelu; }

double act_scalar(Activation a, double x) {
  switch (a) {
    case Activation::kTanh: return std::tanh(x);
    case Activation::kSigmoid: return 1.0 / (1.0 + std::exp(-x));
    case Activation::kRelu: return x > 0.0 ? x : 0.0;
    case Activation::kLinear: return x;
  }
  return x;
}

double act_slope(Activation a, double x) {
  switch (a) {
    case Activation::kTanh: {
      const double h = std::tanh(x);
      return 1.0 - h * h;
    }
    case Activation::kSigmoid: {
      const double h = 1.0 / (1.0 + std::exp(-x));
      return h * (1.0 - h);
    }
    case Activation::kRelu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::kLinear: return 1.0;
  }
  return 1.0;
}

// Applies the activation to `a` in place and fills its first and second
// derivatives. d2 is only filled when `second` is set.
void activate(Activation act, Eigen::Ref<Eigen::MatrixXd> a, Eigen::MatrixXd& d1,
              Eigen::MatrixXd& d2, bool second) {
  d1.resize(a.rows(), a.cols());
  if (second) d2.resize(a.rows(), a.cols());
  switch (act) {
    case Activation::kTanh: {
      // tanh(x) = 1 - 2 / (exp(2x) + 1); vectorizes through Eigen's exp.
      a.array() = 1.0 - 2.0 / ((2.0 * a.array()).exp() + 1.0);
      d1.array() = 1.0 - a.array().square();
      if (second) d2.array() = -2.0 * a.array() * d1.array();
      break;
    }
    case Activation::kSigmoid: {
      a.array() = 1.0 / (1.0 + (-a.array()).exp());
      d1.array() = a.array() * (1.0 - a.array());
      if (second) d2.array() = d1.array() * (1.0 - 2.0 * a.array());
      break;
    }
    case Activation::kRelu: {
      d1.array() = (a.array() > 0.0).cast<double>();
      a.array() = a.array().max(0.0);
      if (second) d2.setZero();
      break;
    }
    case Activation::kLinear: {
      d1.setOnes();
      if (second) d2.setZero();
      break;
    }
  }
}

}  // namespace

MlpModel init_params(const std::vector<int>& layer_sizes,
                     Activation hidden_activation, std::uint64_t seed,
                     Activation output_activation) {
  MlpModel m;
  m.layer_sizes = layer_sizes;
  m.hidden_activation = hidden_activation;
  m.output_activation = output_activation;
  m.seed = seed;
  if (layer_sizes.size() < 2) throw DimensionError("network needs at least an input and an output layer");
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int fan_in = layer_sizes[l];
    const int fan_out = layer_sizes[l + 1];
    if (fan_in <= 0 || fan_out <= 0) throw DimensionError("layer sizes must be positive");
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Eigen::MatrixXd w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) w(r, c) = limit * (2.0 * unit_uniform(rng) - 1.0);
    m.weights.push_back(std::move(w));
    m.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  m.validate();
  return m;
}

double forward(const MlpModel& m, std::span<const double> input) {
  if (static_cast<int>(input.size()) != m.input_width()) {
    throw DimensionError("forward: input width " + std::to_string(input.size()) +
                         " != " + std::to_string(m.input_width()));
  }
  Eigen::VectorXd h = Eigen::Map<const Eigen::VectorXd>(input.data(), input.size());
  for (std::size_t l = 0; l < m.layer_count(); ++l) {
    Eigen::VectorXd a = m.weights[l] * h + m.biases[l];
    const Activation act = l + 1 == m.layer_count() ? m.output_activation : m.hidden_activation;
    h = a.unaryExpr([act](double x) { return act_scalar(act, x); });
  }
  return h[0];
}

Eigen::VectorXd input_jacobian(const MlpModel& m, std::span<const double> input) {
  if (static_cast<int>(input.size()) != m.input_width()) {
    throw DimensionError("input_jacobian: input width mismatch");
  }
  if (!smooth(m.hidden_activation) || !smooth(m.output_activation)) {
    throw std::invalid_argument("input_jacobian: relu is not differentiable; not allowed on the residual path");
  }
  Eigen::VectorXd h = Eigen::Map<const Eigen::VectorXd>(input.data(), input.size());
  Eigen::MatrixXd dh = Eigen::MatrixXd::Identity(h.size(), h.size());
  for (std::size_t l = 0; l < m.layer_count(); ++l) {
    const Eigen::VectorXd a = m.weights[l] * h + m.biases[l];
    const Activation act = l + 1 == m.layer_count() ? m.output_activation : m.hidden_activation;
    const Eigen::VectorXd slope = a.unaryExpr([act](double x) { return act_slope(act, x); });
    dh = slope.asDiagonal() * (m.weights[l] * dh);
    h = a.unaryExpr([act](double x) { return act_scalar(act, x); });
  }
  return dh.row(0).transpose();
}

constexpr Eigen::Index kChunk = 64;

void NetworkTape::prepare(const MlpModel& m, const Eigen::MatrixXd& inputs,
                          std::span<const int> tangent_inputs) {
  if (inputs.rows() != m.input_width()) {
    throw DimensionError("batch input rows " + std::to_string(inputs.rows()) +
                         " != network input width " + std::to_string(m.input_width()));
  }
  if (!tangent_inputs.empty() && (!smooth(m.hidden_activation) || !smooth(m.output_activation))) {
    throw std::invalid_argument("relu is not differentiable; not allowed on the residual path");
  }
  for (int k : tangent_inputs) {
    if (k < 0 || k >= m.input_width()) throw DimensionError("tangent input index out of range");
  }
  inputs_ = inputs;
  tangent_inputs_.assign(tangent_inputs.begin(), tangent_inputs.end());
  tangents_ = static_cast<Eigen::Index>(tangent_inputs_.size());
  const std::size_t layers = m.layer_count();
  offset_.assign(layers + 1, 0);
  for (std::size_t l = 0; l < layers; ++l) {
    offset_[l + 1] = offset_[l] + m.weights[l].size() + m.biases[l].size();
  }
}

const BatchOutputs& NetworkTape::forward(const MlpModel& m, const Eigen::MatrixXd& inputs,
                                         std::span<const int> tangent_inputs) {
  prepare(m, inputs, tangent_inputs);
  const Eigen::Index batch = inputs.cols();
  out_.value.resize(batch);
  out_.d_dinput.resize(tangents_, batch);
  const std::size_t layers = m.layer_count();
  for (Eigen::Index first = 0; first < batch; first += kChunk) {
    const Eigen::Index w = std::min(kChunk, batch - first);
    chunk_forward(m, first, w);
    const auto& top = z_[layers];
    out_.value.segment(first, w) = top.leftCols(w);
    for (Eigen::Index k = 0; k < tangents_; ++k) {
      out_.d_dinput.row(k).segment(first, w) = top.middleCols(w * (1 + k), w);
    }
  }
  return out_;
}

void NetworkTape::chunk_forward(const MlpModel& m, Eigen::Index first, Eigen::Index w) {
  const std::size_t layers = m.layer_count();
  const bool with_tangents = tangents_ > 0;
  const Eigen::Index cols = w * (1 + tangents_);
  width_ = w;
  z_.resize(layers + 1);
  d1_.resize(layers);
  d2_.resize(layers);
  adot_.resize(layers);

  auto& z0 = z_[0];
  z0.resize(inputs_.rows(), cols);
  z0.leftCols(w) = inputs_.middleCols(first, w);
  for (Eigen::Index k = 0; k < tangents_; ++k) {
    auto blk = z0.middleCols(w * (1 + k), w);
    blk.setZero();
    blk.row(tangent_inputs_[k]).setOnes();
  }

  for (std::size_t l = 0; l < layers; ++l) {
    const Activation act = l + 1 == layers ? m.output_activation : m.hidden_activation;
    pre_.noalias() = m.weights[l] * z_[l];
    pre_.leftCols(w).colwise() += m.biases[l];
    auto& z_next = z_[l + 1];
    z_next.resize(pre_.rows(), cols);
    z_next.leftCols(w) = pre_.leftCols(w);
    activate(act, z_next.leftCols(w), d1_[l], d2_[l], with_tangents);
    if (with_tangents) {
      adot_[l] = pre_.rightCols(cols - w);
      for (Eigen::Index k = 0; k < tangents_; ++k) {
        const Eigen::Index off = w * (1 + k);
        z_next.middleCols(off, w).array() = d1_[l].array() * pre_.middleCols(off, w).array();
      }
    }
  }
}

void NetworkTape::chunk_backward(const MlpModel& m, const Eigen::RowVectorXd& d_value,
                                 const Eigen::MatrixXd& d_dinput, Eigen::Index first,
                                 Eigen::VectorXd& grad) {
  const std::size_t layers = m.layer_count();
  const Eigen::Index w = width_;
  const Eigen::Index cols = w * (1 + tangents_);

  zbar_.resize(1, cols);
  zbar_.leftCols(w) = d_value.segment(first, w);
  for (Eigen::Index k = 0; k < tangents_; ++k) {
    zbar_.middleCols(w * (1 + k), w) = d_dinput.row(k).segment(first, w);
  }

  for (std::size_t li = layers; li-- > 0;) {
    // Adjoint of the stacked pre-activation of layer li:
    //   value block   d1 * zbar + sum_k d2 * adot_k * zbar_k
    //   tangent block d1 * zbar_k
    g_.resize(zbar_.rows(), cols);
    g_.leftCols(w).array() = d1_[li].array() * zbar_.leftCols(w).array();
    for (Eigen::Index k = 0; k < tangents_; ++k) {
      const Eigen::Index off = w * (1 + k);
      g_.leftCols(w).array() += d2_[li].array() * adot_[li].middleCols(off - w, w).array() *
                                zbar_.middleCols(off, w).array();
      g_.middleCols(off, w).array() = d1_[li].array() * zbar_.middleCols(off, w).array();
    }
    const auto& wt = m.weights[li];
    dw_.noalias() = g_ * z_[li].transpose();
    Eigen::Index k = offset_[li];
    for (Eigen::Index r = 0; r < wt.rows(); ++r)
      for (Eigen::Index c = 0; c < wt.cols(); ++c) grad[k++] += dw_(r, c);
    for (Eigen::Index r = 0; r < wt.rows(); ++r) grad[k++] += g_.row(r).head(w).sum();
    if (li > 0) {
      zbar_next_.noalias() = wt.transpose() * g_;
      zbar_.swap(zbar_next_);
    }
  }
}

void NetworkTape::backward(const MlpModel& m, const LossAdjoint& adj, Eigen::VectorXd& grad) {
  const Eigen::Index batch = inputs_.cols();
  if (adj.d_value.size() != batch || adj.d_dinput.rows() != tangents_ ||
      (tangents_ > 0 && adj.d_dinput.cols() != batch)) {
    throw DimensionError("loss adjoint shape does not match the recorded batch");
  }
  grad.setZero(static_cast<Eigen::Index>(m.parameter_count()));
  for (Eigen::Index first = 0; first < batch; first += kChunk) {
    chunk_forward(m, first, std::min(kChunk, batch - first));
    chunk_backward(m, adj.d_value, adj.d_dinput, first, grad);
  }
}

double NetworkTape::forward_backward(const MlpModel& m, const Eigen::MatrixXd& inputs,
                                     std::span<const int> tangent_inputs,
                                     const ChunkLoss& loss, Eigen::VectorXd& grad) {
  prepare(m, inputs, tangent_inputs);
  grad.setZero(static_cast<Eigen::Index>(m.parameter_count()));
  const Eigen::Index batch = inputs.cols();
  const std::size_t layers = m.layer_count();
  double total = 0.0;
  for (Eigen::Index first = 0; first < batch; first += kChunk) {
    const Eigen::Index w = std::min(kChunk, batch - first);
    chunk_forward(m, first, w);
    const auto& top = z_[layers];
    chunk_out_.value = top.leftCols(w);
    chunk_out_.d_dinput.resize(tangents_, w);
    for (Eigen::Index k = 0; k < tangents_; ++k) {
      chunk_out_.d_dinput.row(k) = top.middleCols(w * (1 + k), w);
    }
    const LossAdjoint adj = loss(chunk_out_, first);
    if (adj.d_value.size() != w || adj.d_dinput.rows() != tangents_ ||
        (tangents_ > 0 && adj.d_dinput.cols() != w)) {
      throw DimensionError("chunk loss adjoint shape does not match the chunk");
    }
    total += adj.loss;
    chunk_backward(m, adj.d_value, adj.d_dinput, 0, grad);
  }
  return total;
}

GradientBundle loss_gradient(const MlpModel& m, const Eigen::MatrixXd& inputs,
                             std::span<const int> tangent_inputs, const BatchLoss& loss,
                             NetworkTape* tape) {
  NetworkTape local;
  NetworkTape& tp = tape ? *tape : local;
  GradientBundle out;
  out.outputs = tp.forward(m, inputs, tangent_inputs);
  const LossAdjoint adj = loss(out.outputs);
  if (!std::isfinite(adj.loss)) throw DivergenceError("non-finite loss");
  out.loss = adj.loss;
  tp.backward(m, adj, out.d_dtheta);
  if (!out.d_dtheta.allFinite()) throw DivergenceError("non-finite gradient");
  return out;
}

GradientBundle loss_gradient(const MlpModel& m, const Eigen::MatrixXd& inputs,
                             std::span<const int> tangent_inputs, const ChunkLoss& loss,
                             NetworkTape* tape) {
  NetworkTape local;
  NetworkTape& tp = tape ? *tape : local;
  GradientBundle out;
  out.loss = tp.forward_backward(m, inputs, tangent_inputs, loss, out.d_dtheta);
  if (!std::isfinite(out.loss)) throw DivergenceError("non-finite loss");
  if (!out.d_dtheta.allFinite()) throw DivergenceError("non-finite gradient");
  return out;
}

void to_json(nlohmann::json& j, const MlpModel& m) {
  nlohmann::json ws = nlohmann::json::array();
  nlohmann::json bs = nlohmann::json::array();
  for (std::size_t l = 0; l < m.layer_count(); ++l) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.weights[l].rows(); ++r) {
      std::vector<double> row(m.weights[l].cols());
      for (Eigen::Index c = 0; c < m.weights[l].cols(); ++c) row[c] = m.weights[l](r, c);
      rows.push_back(row);
    }
    ws.push_back(std::move(rows));
    bs.push_back(std::vector<double>(m.biases[l].data(), m.biases[l].data() + m.biases[l].size()));
  }
  j = nlohmann::json{{"layer_sizes", m.layer_sizes},
                     {"hidden_activation", to_string(m.hidden_activation)},
                     {"output_activation", to_string(m.output_activation)},
                     {"weights", ws},
                     {"biases", bs},
                     {"seed", m.seed},
                     {"step", m.step}};
}

void from_json(const nlohmann::json& j, MlpModel& m) {
  MlpModel out;
  out.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
  out.hidden_activation = activation_from_string(j.at("hidden_activation").get<std::string>());
  out.output_activation = activation_from_string(j.at("output_activation").get<std::string>());
  out.seed = j.value("seed", std::uint64_t{0});
  out.step = j.value("step", std::uint64_t{0});
  const auto& ws = j.at("weights");
  const auto& bs = j.at("biases");
  if (ws.size() != bs.size()) throw DimensionError("checkpoint weight/bias count mismatch");
  for (std::size_t l = 0; l < ws.size(); ++l) {
    const auto rows = ws[l].get<std::vector<std::vector<double>>>();
    const Eigen::Index nr = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index nc = nr ? static_cast<Eigen::Index>(rows[0].size()) : 0;
    Eigen::MatrixXd w(nr, nc);
    for (Eigen::Index r = 0; r < nr; ++r) {
      if (static_cast<Eigen::Index>(rows[r].size()) != nc) throw DimensionError("ragged weight matrix in checkpoint");
      for (Eigen::Index c = 0; c < nc; ++c) w(r, c) = rows[r][c];
    }
    const auto bv = bs[l].get<std::vector<double>>();
    out.weights.push_back(std::move(w));
    out.biases.push_back(Eigen::Map<const Eigen::VectorXd>(bv.data(), static_cast<Eigen::Index>(bv.size())));
  }
  out.validate();
  m = std::move(out);
}

}  // namespace bl
