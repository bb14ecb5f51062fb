#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "netspectra/common.hpp"

namespace netspectra {

/// Immutable sample collection; inputs are row-per-sample, scaled to [0,1]
/// for image data.
struct Dataset {
  MatrixXd inputs;   // N x input_dim
  VectorXi labels;   // values in [0, class_count)
  int class_count = 0;

  Eigen::Index size() const { return inputs.rows(); }
  Dataset subset(const std::vector<int>& indices) const;
};

void validate(const Dataset& ds);

/// Reads an IDX image/label pair (big-endian magic 0x803 / 0x801).
/// Pixels are divided by 255 and images flattened row-major.
Dataset load_idx(const std::string& image_path, const std::string& label_path);

/// Gaussian clusters with unit variance; class means sit on a scaled
/// standard-basis arrangement with pairwise distance `separation`.
/// Requires dim >= class_count.
Dataset synth_blobs(int class_count, int dim, int per_class, double separation,
                    std::uint64_t seed);

/// Fresh shuffle per (seed, epoch_index); every sample appears exactly once,
/// ragged final batch kept.
std::vector<std::vector<int>> epoch_batches(Eigen::Index n_samples, int batch_size,
                                            std::uint64_t seed, int epoch_index);

struct TaskSplit {
  Dataset task_a;
  Dataset task_b;
  std::vector<int> classes_a;
  std::vector<int> classes_b;
};

/// Splits by class id; labels keep their original values so one shared
/// output head serves both tasks.
TaskSplit split_tasks(const Dataset& ds, const std::vector<int>& classes_a,
                      const std::vector<int>& classes_b);

}  // namespace netspectra
