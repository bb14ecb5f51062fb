#pragma once

#include <string>
#include <vector>

#include "netspectra/hessian.hpp"
#include "netspectra/trainer.hpp"

namespace netspectra {

/// Directions to protect after task 1, with per-direction strengths
/// (Hessian eigenvalue magnitudes, singular values, or reciprocal PCA
/// variances) and the post-task-1 anchor weights.
struct ConservationBasis {
  MatrixXd directions;  // k x n, unit rows
  VectorXd strengths;   // descending, nonnegative
  VectorXd anchor;      // mu_tilde: weights at the end of task 1
  std::string method;   // "hessian" or "singular"

  int count() const { return static_cast<int>(strengths.size()); }
};

/// Penalty lambda_cf * sum_i s_i ((w - anchor) . d_i)^2 and its gradient.
std::pair<double, VectorXd> cf_penalty(const VectorXd& w, const ConservationBasis& basis,
                                       double lambda_cf);

/// v - gamma * sum_i (s_i / s_1) (v . d_i) d_i; gamma = 1 removes the top
/// direction's component exactly.
VectorXd project_velocity(const VectorXd& v, const ConservationBasis& basis, double gamma);

enum class BasisMethod { Hessian, Singular };

struct BasisOptions {
  BasisMethod method = BasisMethod::Hessian;
  /// Hessian: eigenpair count. Singular: per-matrix direction count
  /// (0 = use the MP outlier count). Clipped to the available rank.
  int budget = 5;
  /// Fraction of bias-block Hessian eigenpairs kept by the singular method
  /// (count rounded up).
  double bias_fraction = 0.2;
  std::vector<int> scope_layers;  // empty = all layers
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
};

/// Builds the conservation basis from the post-task-1 network and task-1
/// data. Directions live in the full parameter space.
ConservationBasis build_basis(const Network& net, const Dataset& task1, const BasisOptions& opts);

enum class CfMethod { None, HessLoss, SvLoss, HessGrad, SvGrad };
std::string to_string(CfMethod m);
CfMethod cf_method_from_string(const std::string& s);

struct TwoTaskEpoch {
  int epoch = 0;
  double acc_task1 = 0.0;  // raw top-1 over the shared head
  double acc_task2 = 0.0;
  double within_task1 = 0.0;  // argmax restricted to the task's classes
  double within_task2 = 0.0;
  double sum() const { return acc_task1 + acc_task2; }
};

struct TwoTaskConfig {
  CfMethod method = CfMethod::None;
  double lambda_cf = 1000.0;  // loss methods
  double gamma = 1.0;         // gradient methods
  int epochs = 50;
  double task1_final_lr = 0.01;
  double lr_fraction = 0.01;
  int batch_size = 32;
  double momentum = 0.0;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  std::vector<int> trainable_layers;  // empty = all
};

struct TwoTaskResult {
  std::vector<TwoTaskEpoch> epochs;
  int selected = 0;  // argmax of acc_task1 + acc_task2
  Network final_net;
  Network selected_net;
  CfMethod method = CfMethod::None;
};

/// Trains on task 2 with the chosen mitigation and reports per-epoch
/// accuracies on both evaluation sets. With CfMethod::None this is exactly
/// trainer::train on task 2.
TwoTaskResult two_task_run(const Network& net, const Dataset& task2_train, const Dataset& eval1,
                           const Dataset& eval2, const ConservationBasis* basis,
                           const TwoTaskConfig& config);

void save_two_task_csv(const TwoTaskResult& result, const TwoTaskConfig& config,
                       const std::string& path);

}  // namespace netspectra
