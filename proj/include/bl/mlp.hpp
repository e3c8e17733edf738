#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

namespace bl {

enum class Activation { kTanh, kSigmoid, kRelu, kLinear };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Raised on inconsistent layer dimensions or input widths.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a loss or network value becomes non-finite.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::int64_t step = -1)
      : std::runtime_error(what), step_(step) {}
  std::int64_t step() const { return step_; }

 private:
  std::int64_t step_;
};

/// Dense feed-forward network with one scalar output.
///
/// Layer i maps width layer_sizes[i] to layer_sizes[i + 1] through
/// weights[i] (rows = output width) and biases[i]. Hidden layers apply
/// `hidden_activation`; the last layer applies `output_activation`.
struct MlpModel {
  std::vector<int> layer_sizes;
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  Activation hidden_activation = Activation::kTanh;
  Activation output_activation = Activation::kLinear;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;

  int input_width() const { return layer_sizes.front(); }
  std::size_t layer_count() const { return weights.size(); }
  std::size_t parameter_count() const;

  /// Parameters flattened layer by layer: W row-major, then b.
  Eigen::VectorXd flat_params() const;
  void set_flat_params(const Eigen::VectorXd& theta);

  /// Checks dimension chaining and finiteness; throws DimensionError.
  void validate() const;
};

/// Glorot-uniform weights, zero biases; fully determined by `seed`.
MlpModel init_params(const std::vector<int>& layer_sizes,
                     Activation hidden_activation, std::uint64_t seed,
                     Activation output_activation = Activation::kLinear);

double forward(const MlpModel& m, std::span<const double> input);

/// Exact d(output)/d(input_k) by forward-mode tangent propagation.
/// Rejects relu networks.
Eigen::VectorXd input_jacobian(const MlpModel& m, std::span<const double> input);

/// Network values and selected input derivatives for a batch of points.
struct BatchOutputs {
  Eigen::RowVectorXd value;  ///< 1 x B
  Eigen::MatrixXd d_dinput;  ///< T x B, row k = d/d input[tangent_inputs[k]]
};

/// A scalar batch loss together with its partial derivatives with respect to
/// every network value and input derivative it consumed.
struct LossAdjoint {
  double loss = 0.0;
  Eigen::RowVectorXd d_value;  ///< 1 x B
  Eigen::MatrixXd d_dinput;    ///< T x B
};

using BatchLoss = std::function<LossAdjoint(const BatchOutputs&)>;

/// Loss evaluated chunk by chunk; the second argument is the chunk's first
/// column in the batch.
using ChunkLoss = std::function<LossAdjoint(const BatchOutputs&, Eigen::Index)>;

struct GradientBundle {
  double loss = 0.0;
  BatchOutputs outputs;
  Eigen::VectorXd d_dtheta;  ///< layout of MlpModel::flat_params
};

/// Batched forward pass with tangent propagation and its reverse sweep.
///
/// The batch is processed in column chunks small enough to stay in cache;
/// backward() recomputes each chunk's forward intermediates before reversing
/// it. Reusing one tape across calls avoids reallocating buffers.
class NetworkTape {
 public:
  /// `inputs` is input_width x B. Tangents are seeded along each listed input.
  const BatchOutputs& forward(const MlpModel& m, const Eigen::MatrixXd& inputs,
                              std::span<const int> tangent_inputs);

  /// Reverse sweep for the batch of the last forward() call, given output
  /// adjoints. Writes the flat parameter gradient into `grad`.
  void backward(const MlpModel& m, const LossAdjoint& adj,
                Eigen::VectorXd& grad);

  /// Single fused pass for a loss that is a sum of per-chunk terms. `loss`
  /// sees each chunk's outputs (and the chunk's first column) and returns its
  /// share of the loss with the matching adjoints. Chunks are visited in a
  /// fixed order, so the result is deterministic.
  double forward_backward(const MlpModel& m, const Eigen::MatrixXd& inputs,
                          std::span<const int> tangent_inputs,
                          const ChunkLoss& loss,
                          Eigen::VectorXd& grad);

 private:
  void prepare(const MlpModel& m, const Eigen::MatrixXd& inputs,
               std::span<const int> tangent_inputs);
  void chunk_forward(const MlpModel& m, Eigen::Index first, Eigen::Index width);
  void chunk_backward(const MlpModel& m, const Eigen::RowVectorXd& d_value,
                      const Eigen::MatrixXd& d_dinput, Eigen::Index first,
                      Eigen::VectorXd& grad);

  Eigen::MatrixXd inputs_;
  std::vector<int> tangent_inputs_;
  Eigen::Index tangents_ = 0;
  Eigen::Index width_ = 0;              // columns in the current chunk
  std::vector<Eigen::MatrixXd> z_;      // layer inputs, stacked [value | tangents]
  std::vector<Eigen::MatrixXd> d1_;     // sigma'(a)
  std::vector<Eigen::MatrixXd> d2_;     // sigma''(a)
  std::vector<Eigen::MatrixXd> adot_;   // tangent pre-activations
  Eigen::MatrixXd pre_;
  Eigen::MatrixXd g_;
  Eigen::MatrixXd zbar_;
  Eigen::MatrixXd zbar_next_;
  Eigen::MatrixXd dw_;
  std::vector<Eigen::Index> offset_;
  BatchOutputs out_;
  BatchOutputs chunk_out_;
};

/// Reverse-mode gradient of a batch loss with respect to all parameters.
/// Throws DivergenceError when the loss is non-finite.
GradientBundle loss_gradient(const MlpModel& m, const Eigen::MatrixXd& inputs,
                             std::span<const int> tangent_inputs,
                             const BatchLoss& loss, NetworkTape* tape = nullptr);

/// Same as above for a loss that decomposes into per-chunk sums; one pass
/// over the batch, no stored intermediates. `outputs` is left empty.
GradientBundle loss_gradient(const MlpModel& m, const Eigen::MatrixXd& inputs,
                             std::span<const int> tangent_inputs,
                             const ChunkLoss& loss, NetworkTape* tape = nullptr);

void to_json(nlohmann::json& j, const MlpModel& m);
void from_json(const nlohmann::json& j, MlpModel& m);

}  // namespace bl
