#pragma once

// Run configuration: a flat sectioned key=value file. Unknown keys are
// rejected with line-precise messages; the schema is documented in the
// README. All randomness derives from [run] seed via fixed labels.

#include <optional>
#include <string>
#include <vector>

#include "netspectra/continual.hpp"
#include "netspectra/rmt.hpp"
#include "netspectra/trainer.hpp"

namespace netspectra::cli {

struct DatasetSpec {
  std::string kind = "synth";  // synth | idx
  // synth
  int classes = 10;
  int dim = 20;
  int per_class = 100;
  double separation = 5.0;
  // idx
  std::string train_images, train_labels;
  std::string test_images, test_labels;  // optional
};

struct AnalysisParams {
  int lanczos_k = 20;
  int lanczos_iters = 0;
  int hessian_cap = kDenseHessianCap;
  int subset = 0;  // 0 = full training set
  VarianceEstimator mp_estimator = VarianceEstimator::MeanSquare;
  int unfold_k = 10;
  double density_sigma = 1.0;
  int density_points = 512;
  int fit_begin = 0;
  int fit_end = 0;  // 0 = all pairs
  int component = 0;
  double t0 = 0.0;
  int scaling_points = 21;
  double scaling_max = 2.0;
};

struct ForgetParams {
  std::vector<int> classes_a;
  std::vector<int> classes_b;
  CfMethod method = CfMethod::None;
  double lambda_cf = 1000.0;
  double gamma = 1.0;
  int epochs = 50;
  double lr_fraction = 0.01;
  double weight_decay = 0.0;
  int batch_size = 32;
  int hess_budget = 0;  // 0 = 20% of the scoped block
  int sv_budget = 5;
  double bias_fraction = 0.2;
  std::vector<int> scope_layers;
  int pretrain_epochs = 0;  // 0 = reuse [train] epochs
  int task1_epochs = 0;
};

struct RunConfig {
  DatasetSpec dataset;
  std::vector<int> dims;
  TrainConfig train;
  AnalysisParams analysis;
  ForgetParams forget;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  std::string raw_text;  // config echo for manifests
};

RunConfig load_run_config(const std::string& path);

/// Loads (or synthesizes) the train/test pair named by the spec.
std::pair<Dataset, std::optional<Dataset>> load_dataset(const DatasetSpec& spec,
                                                        std::uint64_t seed);

}  // namespace netspectra::cli
