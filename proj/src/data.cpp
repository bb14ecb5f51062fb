#include "netspectra/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

namespace netspectra {

void validate(const Dataset& ds) {
  if (ds.size() < 1) throw std::invalid_argument("dataset needs at least one sample");
  if (ds.labels.size() != ds.size()) throw std::invalid_argument("inputs/labels length mismatch");
  if (ds.class_count < 1) throw std::invalid_argument("class_count must be positive");
  for (Eigen::Index i = 0; i < ds.labels.size(); ++i)
    if (ds.labels[i] < 0 || ds.labels[i] >= ds.class_count)
      throw std::invalid_argument("label out of range");
  if (!ds.inputs.allFinite()) throw std::invalid_argument("dataset inputs must be finite");
}

Dataset Dataset::subset(const std::vector<int>& indices) const {
  Dataset out;
  out.class_count = class_count;
  out.inputs.resize(static_cast<Eigen::Index>(indices.size()), inputs.cols());
  out.labels.resize(static_cast<Eigen::Index>(indices.size()));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.inputs.row(static_cast<Eigen::Index>(i)) = inputs.row(indices[i]);
    out.labels[static_cast<Eigen::Index>(i)] = labels[indices[i]];
  }
  return out;
}

namespace {

std::uint32_t read_u32_be(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw IoError("truncated IDX header in " + path);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

}  // namespace

Dataset load_idx(const std::string& image_path, const std::string& label_path) {
  std::ifstream img(image_path, std::ios::binary);
  if (!img) throw IoError("cannot open " + image_path);
  if (read_u32_be(img, image_path) != 0x00000803u)
    throw IoError("bad image magic in " + image_path);
  const std::uint32_t count = read_u32_be(img, image_path);
  const std::uint32_t rows = read_u32_be(img, image_path);
  const std::uint32_t cols = read_u32_be(img, image_path);
  const std::size_t pixels = std::size_t(rows) * cols;

  std::vector<unsigned char> buffer(std::size_t(count) * pixels);
  img.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(buffer.size()));
  if (!img || img.gcount() != static_cast<std::streamsize>(buffer.size()))
    throw IoError("truncated image payload in " + image_path);

  std::ifstream lab(label_path, std::ios::binary);
  if (!lab) throw IoError("cannot open " + label_path);
  if (read_u32_be(lab, label_path) != 0x00000801u)
    throw IoError("bad label magic in " + label_path);
  const std::uint32_t label_count = read_u32_be(lab, label_path);
  if (label_count != count)
    throw IoError("image/label count mismatch: " + std::to_string(count) + " vs " +
                  std::to_string(label_count));
  std::vector<unsigned char> raw_labels(label_count);
  lab.read(reinterpret_cast<char*>(raw_labels.data()), label_count);
  if (!lab || lab.gcount() != static_cast<std::streamsize>(label_count))
    throw IoError("truncated label payload in " + label_path);

  Dataset ds;
  ds.inputs.resize(count, static_cast<Eigen::Index>(pixels));
  ds.labels.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < pixels; ++j)
      ds.inputs(i, static_cast<Eigen::Index>(j)) = buffer[std::size_t(i) * pixels + j] / 255.0;
    ds.labels[i] = raw_labels[i];
  }
  ds.class_count = ds.labels.size() ? ds.labels.maxCoeff() + 1 : 0;
  validate(ds);
  return ds;
}

Dataset synth_blobs(int class_count, int dim, int per_class, double separation,
                    std::uint64_t seed) {
  if (class_count < 2) throw std::invalid_argument("need at least two classes");
  if (per_class < 1) throw std::invalid_argument("per_class must be positive");
  if (separation <= 0.0) throw std::invalid_argument("separation must be positive");
  if (dim < class_count)
    throw std::invalid_argument("blob arrangement needs dim >= class_count");

  // Means at (separation / sqrt(2)) e_c: all pairwise distances equal
  // `separation`, a scaled standard-simplex arrangement.
  const double scale = separation / std::sqrt(2.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  Dataset ds;
  ds.class_count = class_count;
  ds.inputs.resize(Eigen::Index(class_count) * per_class, dim);
  ds.labels.resize(Eigen::Index(class_count) * per_class);
  Eigen::Index row = 0;
  for (int c = 0; c < class_count; ++c) {
    for (int s = 0; s < per_class; ++s, ++row) {
      for (int d = 0; d < dim; ++d) ds.inputs(row, d) = noise(rng) + (d == c ? scale : 0.0);
      ds.labels[row] = c;
    }
  }
  return ds;
}

std::vector<std::vector<int>> epoch_batches(Eigen::Index n_samples, int batch_size,
                                            std::uint64_t seed, int epoch_index) {
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (batch_size > n_samples) throw std::invalid_argument("batch size exceeds dataset");
  std::vector<int> order(static_cast<std::size_t>(n_samples));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, "epoch-" + std::to_string(epoch_index)));
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::vector<int>> batches;
  for (std::size_t start = 0; start < order.size(); start += std::size_t(batch_size)) {
    std::size_t end = std::min(order.size(), start + std::size_t(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

TaskSplit split_tasks(const Dataset& ds, const std::vector<int>& classes_a,
                      const std::vector<int>& classes_b) {
  if (classes_a.empty() || classes_b.empty())
    throw std::invalid_argument("task partitions must be nonempty");
  std::set<int> seen;
  for (int c : classes_a) {
    if (c < 0 || c >= ds.class_count) throw std::invalid_argument("partition class out of range");
    if (!seen.insert(c).second) throw std::invalid_argument("overlapping task partition");
  }
  for (int c : classes_b) {
    if (c < 0 || c >= ds.class_count) throw std::invalid_argument("partition class out of range");
    if (!seen.insert(c).second) throw std::invalid_argument("overlapping task partition");
  }
  if (static_cast<int>(seen.size()) != ds.class_count)
    throw std::invalid_argument("task partition must cover every class");

  std::vector<int> idx_a, idx_b;
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    const int label = ds.labels[i];
    if (std::find(classes_a.begin(), classes_a.end(), label) != classes_a.end())
      idx_a.push_back(static_cast<int>(i));
    else if (std::find(classes_b.begin(), classes_b.end(), label) != classes_b.end())
      idx_b.push_back(static_cast<int>(i));
  }

  TaskSplit split;
  split.task_a = ds.subset(idx_a);
  split.task_b = ds.subset(idx_b);
  split.classes_a = classes_a;
  split.classes_b = classes_b;
  return split;
}

}  // namespace netspectra
