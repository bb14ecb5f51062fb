#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "netspectra/data.hpp"
#include "netspectra/nn.hpp"

namespace netspectra {

struct ConstantSchedule {
  double lr = 0.01;
};
struct GeometricSchedule {
  double lr0 = 0.01;
  double decay = 0.99;  // per epoch
};
struct PiecewiseSchedule {
  std::vector<std::pair<int, double>> points;  // (from_epoch, lr), ascending
};
using LrSchedule = std::variant<ConstantSchedule, GeometricSchedule, PiecewiseSchedule>;

double lr_at(const LrSchedule& schedule, int epoch);

/// Mean-velocity learning rate eta / (S * (1 - beta)).
double effective_lr(double eta, double beta, int batch_size);

struct TrainConfig {
  LrSchedule schedule = ConstantSchedule{};
  double momentum = 0.0;      // beta in [0,1)
  double weight_decay = 0.0;  // lambda >= 0
  int batch_size = 32;
  int epochs = 1;
  std::uint64_t seed = 0;
  int record_stride = 0;             // 0 = record at epoch ends, k>=1 = every k steps
  std::vector<int> trainable_layers;  // empty = all layers

  void validate(int layer_count) const;
};

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;  // NaN without a test set
};

/// Weight and velocity snapshots at recorded update steps. Includes the
/// initial state at step 0, so velocity[k] = weights[k] - weights[k-1]
/// whenever the stride is 1.
struct Trajectory {
  std::vector<std::int64_t> times;
  std::vector<VectorXd> weights;
  std::vector<VectorXd> velocities;
  std::vector<int> dims;
  TrainConfig config;

  MatrixXd weight_matrix() const;    // T x n
  MatrixXd velocity_matrix() const;  // T x n
};

/// Optional instrumentation; all hooks default to no-ops so an unhooked run
/// is byte-identical to a hooked run with empty hooks.
struct TrainHooks {
  /// Adds an extra loss gradient (e.g. a penalty term) in place.
  std::function<void(const VectorXd& w, VectorXd& grad)> grad_extra;
  /// Transforms the velocity after the momentum update, before it is applied.
  std::function<void(VectorXd& v)> velocity_transform;
  /// Called after each epoch's metrics are computed.
  std::function<void(int epoch, const Network& net)> on_epoch;
};

struct TrainResult {
  Network net;
  Trajectory trajectory;
  std::vector<EpochMetrics> metrics;
};

/// SGD with momentum: v(t+1) = -eta * grad + beta * v(t), w(t+1) = w(t) + v(t+1).
/// Aborts with NumericalError if the loss turns non-finite.
TrainResult train(const Network& initial, const Dataset& train_data, const Dataset* test_data,
                  const TrainConfig& config, const TrainHooks* hooks = nullptr);

// Checkpoint and trajectory files: one JSON header line followed by a
// little-endian float64 payload.
void save_checkpoint(const Network& net, const std::string& path, std::uint64_t seed = 0,
                     std::int64_t step = 0);
Network load_checkpoint(const std::string& path, const std::vector<int>* expected_dims = nullptr);

void save_trajectory(const Trajectory& traj, const std::string& path);
Trajectory load_trajectory(const std::string& path);

void save_metrics_csv(const std::vector<EpochMetrics>& metrics, const std::string& path);

}  // namespace netspectra
