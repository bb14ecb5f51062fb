#pragma once

#include <cstdint>
#include <vector>

#include "netspectra/common.hpp"

namespace netspectra {

enum class ParamKind { Weight, Bias };

struct ParamBlock {
  int layer = 0;
  ParamKind kind = ParamKind::Weight;
  std::ptrdiff_t offset = 0;
  int rows = 0;  // output width; bias blocks have cols == 1
  int cols = 0;

  std::ptrdiff_t size() const { return std::ptrdiff_t(rows) * cols; }
};

/// Maps a dense-MLP shape onto a flat parameter vector. Per layer the
/// weight matrix (row-major) is followed by the bias vector.
class ParamLayout {
 public:
  ParamLayout() = default;
  explicit ParamLayout(std::vector<int> dims);

  const std::vector<int>& dims() const { return dims_; }
  int layer_count() const { return static_cast<int>(dims_.size()) - 1; }
  std::ptrdiff_t total() const { return total_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  const ParamBlock& weight(int layer) const;
  const ParamBlock& bias(int layer) const;
  /// Half-open index interval covering weights and bias of one layer.
  std::pair<std::ptrdiff_t, std::ptrdiff_t> layer_span(int layer) const;

  bool operator==(const ParamLayout& other) const { return dims_ == other.dims_; }

 private:
  std::vector<int> dims_;
  std::vector<ParamBlock> blocks_;
  std::ptrdiff_t total_ = 0;
};

enum class InitMode { Uniform, Normal };

/// Glorot init: uniform bound sqrt(6/(n_in+n_out)) or normal variance
/// 2/(n_in+n_out); biases zero. Deterministic per seed.
VectorXd glorot_init(const ParamLayout& layout, InitMode mode, std::uint64_t seed);

class Network;

/// Re-initializes one layer in place (fresh Glorot weights, zero bias).
void glorot_reinit_layer(Network& net, int layer, InitMode mode, std::uint64_t seed);

/// Dense MLP with rectifier hidden activations and softmax output.
/// Forward, loss and gradient are pure functions of the stored parameters.
class Network {
 public:
  explicit Network(std::vector<int> dims);
  Network(ParamLayout layout, VectorXd params);
  static Network glorot(std::vector<int> dims, InitMode mode, std::uint64_t seed);

  const ParamLayout& layout() const { return layout_; }
  const VectorXd& params() const { return params_; }
  VectorXd& params() { return params_; }
  void set_params(VectorXd p);
  int input_dim() const { return layout_.dims().front(); }
  int class_count() const { return layout_.dims().back(); }

  ConstRowMatrixMap weight(int layer) const;
  Eigen::Map<const VectorXd> bias(int layer) const;

  /// Softmax probabilities for one input (length = class count).
  VectorXd forward(const VectorXd& input) const;
  /// Row-per-sample batch variant.
  MatrixXd forward_batch(const MatrixXd& inputs) const;

 private:
  ParamLayout layout_;
  VectorXd params_;
};

/// Cross-entropy of one prediction; probabilities below 1e-300 are clamped
/// and reported through `clamped` (softmax saturation signal).
double sample_loss(const VectorXd& probabilities, int label, bool* clamped = nullptr);

/// Mean cross-entropy over the batch plus weight_decay * ||w||^2.
double batch_loss(const Network& net, const MatrixXd& inputs, const VectorXi& labels,
                  double weight_decay);

/// Exact analytic gradient of batch_loss, laid out like the parameters.
VectorXd gradient(const Network& net, const MatrixXd& inputs, const VectorXi& labels,
                  double weight_decay);

/// Top-1 accuracy in [0,1].
double accuracy(const Network& net, const MatrixXd& inputs, const VectorXi& labels);

}  // namespace netspectra
