#include "netspectra/nn.hpp"

#include <cmath>
#include <random>
#include <utility>

#include "pass.hpp"

namespace netspectra {

ParamLayout::ParamLayout(std::vector<int> dims) : dims_(std::move(dims)) {
  if (dims_.size() < 2) throw std::invalid_argument("layer dims need at least input and output");
  for (int d : dims_)
    if (d < 1) throw std::invalid_argument("layer widths must be >= 1");
  std::ptrdiff_t offset = 0;
  for (int l = 0; l + 1 < static_cast<int>(dims_.size()); ++l) {
    ParamBlock w{l, ParamKind::Weight, offset, dims_[l + 1], dims_[l]};
    offset += w.size();
    ParamBlock b{l, ParamKind::Bias, offset, dims_[l + 1], 1};
    offset += b.size();
    blocks_.push_back(w);
    blocks_.push_back(b);
  }
  total_ = offset;
}

const ParamBlock& ParamLayout::weight(int layer) const { return blocks_.at(2 * layer); }
const ParamBlock& ParamLayout::bias(int layer) const { return blocks_.at(2 * layer + 1); }

std::pair<std::ptrdiff_t, std::ptrdiff_t> ParamLayout::layer_span(int layer) const {
  const ParamBlock& w = weight(layer);
  const ParamBlock& b = bias(layer);
  return {w.offset, b.offset + b.size()};
}

VectorXd glorot_init(const ParamLayout& layout, InitMode mode, std::uint64_t seed) {
  VectorXd params = VectorXd::Zero(layout.total());
  std::mt19937_64 rng(seed);
  for (int l = 0; l < layout.layer_count(); ++l) {
    const ParamBlock& w = layout.weight(l);
    const double fan_sum = double(w.rows) + double(w.cols);
    if (mode == InitMode::Uniform) {
      const double bound = std::sqrt(6.0 / fan_sum);
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (std::ptrdiff_t i = 0; i < w.size(); ++i) params[w.offset + i] = dist(rng);
    } else {
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_sum));
      for (std::ptrdiff_t i = 0; i < w.size(); ++i) params[w.offset + i] = dist(rng);
    }
    // biases stay zero
  }
  return params;
}

void glorot_reinit_layer(Network& net, int layer, InitMode mode, std::uint64_t seed) {
  const ParamLayout& layout = net.layout();
  const ParamBlock& w = layout.weight(layer);
  const ParamBlock& b = layout.bias(layer);
  const double fan_sum = double(w.rows) + double(w.cols);
  std::mt19937_64 rng(seed);
  if (mode == InitMode::Uniform) {
    const double bound = std::sqrt(6.0 / fan_sum);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::ptrdiff_t i = 0; i < w.size(); ++i) net.params()[w.offset + i] = dist(rng);
  } else {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_sum));
    for (std::ptrdiff_t i = 0; i < w.size(); ++i) net.params()[w.offset + i] = dist(rng);
  }
  net.params().segment(b.offset, b.size()).setZero();
}

Network::Network(std::vector<int> dims)
    : layout_(std::move(dims)), params_(VectorXd::Zero(layout_.total())) {}

Network::Network(ParamLayout layout, VectorXd params)
    : layout_(std::move(layout)), params_(std::move(params)) {
  if (params_.size() != layout_.total())
    throw std::invalid_argument("parameter vector does not match layout size");
}

Network Network::glorot(std::vector<int> dims, InitMode mode, std::uint64_t seed) {
  ParamLayout layout(std::move(dims));
  VectorXd params = glorot_init(layout, mode, seed);
  return Network(std::move(layout), std::move(params));
}

void Network::set_params(VectorXd p) {
  if (p.size() != layout_.total())
    throw std::invalid_argument("parameter vector does not match layout size");
  params_ = std::move(p);
}

ConstRowMatrixMap Network::weight(int layer) const {
  const ParamBlock& b = layout_.weight(layer);
  return ConstRowMatrixMap(params_.data() + b.offset, b.rows, b.cols);
}

Eigen::Map<const VectorXd> Network::bias(int layer) const {
  const ParamBlock& b = layout_.bias(layer);
  return Eigen::Map<const VectorXd>(params_.data() + b.offset, b.rows);
}

VectorXd Network::forward(const VectorXd& input) const {
  if (input.size() != input_dim()) throw std::invalid_argument("input width mismatch");
  MatrixXd batch = input.transpose();
  return forward_batch(batch).row(0);
}

MatrixXd Network::forward_batch(const MatrixXd& inputs) const {
  detail::ForwardCache cache;
  detail::forward_pass(*this, inputs, cache);
  return cache.probs;
}

double sample_loss(const VectorXd& probabilities, int label, bool* clamped) {
  if (label < 0 || label >= probabilities.size()) throw std::invalid_argument("label out of range");
  double p = probabilities[label];
  bool hit_floor = p < 1e-300;
  if (hit_floor) p = 1e-300;
  if (clamped) *clamped = hit_floor;
  return -std::log(p);
}

double batch_loss(const Network& net, const MatrixXd& inputs, const VectorXi& labels,
                  double weight_decay) {
  if (inputs.rows() == 0) throw std::invalid_argument("empty batch");
  if (inputs.rows() != labels.size()) throw std::invalid_argument("inputs/labels length mismatch");
  MatrixXd probs = net.forward_batch(inputs);
  double total = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    double p = probs(i, labels[i]);
    total += -std::log(p < 1e-300 ? 1e-300 : p);
  }
  double loss = total / double(probs.rows());
  if (weight_decay > 0.0) loss += weight_decay * net.params().squaredNorm();
  return loss;
}

VectorXd gradient(const Network& net, const MatrixXd& inputs, const VectorXi& labels,
                  double weight_decay) {
  if (inputs.rows() == 0) throw std::invalid_argument("empty batch");
  if (inputs.rows() != labels.size()) throw std::invalid_argument("inputs/labels length mismatch");
  detail::ForwardCache cache;
  detail::forward_pass(net, inputs, cache);
  VectorXd grad = detail::backward_pass(net, cache, labels);
  if (weight_decay > 0.0) grad += 2.0 * weight_decay * net.params();
  return grad;
}

double accuracy(const Network& net, const MatrixXd& inputs, const VectorXi& labels) {
  if (inputs.rows() == 0) throw std::invalid_argument("empty evaluation set");
  MatrixXd probs = net.forward_batch(inputs);
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index best;
    probs.row(i).maxCoeff(&best);
    if (best == labels[i]) ++hits;
  }
  return double(hits) / double(probs.rows());
}

namespace detail {

void softmax_rows(const MatrixXd& logits, MatrixXd& probs) {
  probs.resizeLike(logits);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    probs.row(i) = (logits.row(i).array() - m).exp();
    probs.row(i) /= probs.row(i).sum();
  }
}

void forward_pass(const Network& net, const MatrixXd& inputs, ForwardCache& cache) {
  if (inputs.cols() != net.input_dim()) throw std::invalid_argument("input width mismatch");
  const int layers = net.layout().layer_count();
  cache.pre.resize(layers);
  cache.act.resize(layers);  // act[l] feeds layer l; probs replaces the final activation
  cache.act[0] = inputs;
  for (int l = 0; l < layers; ++l) {
    cache.pre[l] = cache.act[l] * net.weight(l).transpose();
    cache.pre[l].rowwise() += net.bias(l).transpose();
    if (l + 1 < layers) cache.act[l + 1] = cache.pre[l].cwiseMax(0.0);
  }
  softmax_rows(cache.pre[layers - 1], cache.probs);
}

VectorXd backward_pass(const Network& net, const ForwardCache& cache, const VectorXi& labels) {
  const int layers = net.layout().layer_count();
  const Eigen::Index batch = cache.probs.rows();
  VectorXd grad(net.layout().total());

  MatrixXd delta = cache.probs;
  for (Eigen::Index i = 0; i < batch; ++i) delta(i, labels[i]) -= 1.0;
  delta /= double(batch);

  for (int l = layers - 1; l >= 0; --l) {
    const ParamBlock& wb = net.layout().weight(l);
    const ParamBlock& bb = net.layout().bias(l);
    RowMatrixMap(grad.data() + wb.offset, wb.rows, wb.cols).noalias() =
        delta.transpose() * cache.act[l];
    Eigen::Map<VectorXd>(grad.data() + bb.offset, bb.rows) = delta.colwise().sum();
    if (l > 0) {
      MatrixXd next = delta * net.weight(l);
      // rectifier derivative, 0 at the kink
      delta = (cache.pre[l - 1].array() > 0.0).select(next, 0.0);
    }
  }
  return grad;
}

VectorXd hvp_pass(const Network& net, const ForwardCache& cache, const VectorXi& labels,
                  const VectorXd& v) {
  const int layers = net.layout().layer_count();
  const Eigen::Index batch = cache.probs.rows();
  const ParamLayout& layout = net.layout();

  auto v_weight = [&](int l) {
    const ParamBlock& b = layout.weight(l);
    return ConstRowMatrixMap(v.data() + b.offset, b.rows, b.cols);
  };
  auto v_bias = [&](int l) {
    const ParamBlock& b = layout.bias(l);
    return Eigen::Map<const VectorXd>(v.data() + b.offset, b.rows);
  };

  // Forward sweep of the directional derivative.
  std::vector<MatrixXd> r_pre(layers), r_act(layers);
  r_act[0] = MatrixXd::Zero(cache.act[0].rows(), cache.act[0].cols());
  for (int l = 0; l < layers; ++l) {
    r_pre[l] = cache.act[l] * v_weight(l).transpose() + r_act[l] * net.weight(l).transpose();
    r_pre[l].rowwise() += v_bias(l).transpose();
    if (l + 1 < layers)
      r_act[l + 1] = (cache.pre[l].array() > 0.0).select(r_pre[l], 0.0);
  }

  // Directional derivative of softmax: p .* r - p * (p . r) per row.
  MatrixXd r_delta = cache.probs.cwiseProduct(r_pre[layers - 1]);
  VectorXd row_dot = r_delta.rowwise().sum();
  r_delta -= cache.probs.cwiseProduct(row_dot.replicate(1, cache.probs.cols()));
  r_delta /= double(batch);

  MatrixXd delta = cache.probs;
  for (Eigen::Index i = 0; i < batch; ++i) delta(i, labels[i]) -= 1.0;
  delta /= double(batch);

  VectorXd result(layout.total());
  for (int l = layers - 1; l >= 0; --l) {
    const ParamBlock& wb = layout.weight(l);
    const ParamBlock& bb = layout.bias(l);
    RowMatrixMap(result.data() + wb.offset, wb.rows, wb.cols).noalias() =
        r_delta.transpose() * cache.act[l];
    RowMatrixMap(result.data() + wb.offset, wb.rows, wb.cols).noalias() +=
        delta.transpose() * r_act[l];
    Eigen::Map<VectorXd>(result.data() + bb.offset, bb.rows) = r_delta.colwise().sum();
    if (l > 0) {
      MatrixXd next = r_delta * net.weight(l) + delta * v_weight(l);
      r_delta = (cache.pre[l - 1].array() > 0.0).select(next, 0.0);
      MatrixXd next_delta = delta * net.weight(l);
      delta = (cache.pre[l - 1].array() > 0.0).select(next_delta, 0.0);
    }
  }
  return result;
}

}  // namespace detail

}  // namespace netspectra
