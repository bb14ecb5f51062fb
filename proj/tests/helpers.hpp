#pragma once

// Shared fixtures and independent oracles for the test suites. Oracles here
// must not reuse the library code paths they check.

#include <cmath>
#include <random>

#include "netspectra/data.hpp"
#include "netspectra/nn.hpp"
#include "netspectra/trainer.hpp"

namespace testutil {

using namespace netspectra;

/// Central finite difference of batch_loss per parameter component.
inline VectorXd fd_gradient(const Network& net, const MatrixXd& x, const VectorXi& y,
                            double weight_decay, double step) {
  VectorXd grad(net.params().size());
  Network probe = net;
  for (Eigen::Index i = 0; i < grad.size(); ++i) {
    probe.params() = net.params();
    probe.params()[i] += step;
    const double plus = batch_loss(probe, x, y, weight_decay);
    probe.params()[i] = net.params()[i] - step;
    const double minus = batch_loss(probe, x, y, weight_decay);
    grad[i] = (plus - minus) / (2.0 * step);
  }
  return grad;
}

/// Central finite difference of the analytic gradient along v.
inline VectorXd fd_hvp(const Network& net, const MatrixXd& x, const VectorXi& y,
                       const VectorXd& v, double weight_decay, double step) {
  const double norm = v.norm();
  const VectorXd unit = v / norm;
  Network probe = net;
  probe.params() = net.params() + step * unit;
  const VectorXd plus = gradient(probe, x, y, weight_decay);
  probe.params() = net.params() - step * unit;
  const VectorXd minus = gradient(probe, x, y, weight_decay);
  return (plus - minus) / (2.0 * step) * norm;
}

inline double max_rel_error(const VectorXd& got, const VectorXd& want) {
  const double scale = std::max(1e-12, want.cwiseAbs().maxCoeff());
  return (got - want).cwiseAbs().maxCoeff() / scale;
}

/// Small blob-classification net trained to full train accuracy.
struct TrainedTinyNet {
  Dataset data;
  Network net;

  static TrainedTinyNet make(std::uint64_t seed = 7, int classes = 4, int dim = 8,
                             int per_class = 25, int hidden = 12, double lr = 0.05,
                             int epochs = 60, double weight_decay = 0.0) {
    Dataset data = synth_blobs(classes, dim, per_class, 8.0, seed);
    Network net = Network::glorot({dim, hidden, classes}, InitMode::Uniform, seed + 1);
    TrainConfig cfg;
    cfg.schedule = ConstantSchedule{lr};
    cfg.batch_size = 16;
    cfg.epochs = epochs;
    cfg.seed = seed + 2;
    cfg.weight_decay = weight_decay;
    TrainResult result = train(net, data, nullptr, cfg);
    return {std::move(data), std::move(result.net)};
  }
};

}  // namespace testutil
