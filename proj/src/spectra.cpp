#include "netspectra/spectra.hpp"

#include <algorithm>
#include <cmath>

#include "netspectra/stats.hpp"

namespace netspectra {

namespace {

void require_unit(const VectorXd& h, const char* what) {
  if (std::abs(h.norm() - 1.0) > 1e-8)
    throw std::invalid_argument(std::string(what) + " must be unit norm");
}

}  // namespace

OverlapMatrix overlap(const MatrixXd& rows, const MatrixXd& cols_as_rows, bool normalize_cols,
                      const std::string& row_tag, const std::string& col_tag) {
  if (rows.cols() != cols_as_rows.cols())
    throw std::invalid_argument("overlap bases live in different spaces");
  OverlapMatrix out;
  out.row_tag = row_tag;
  out.col_tag = col_tag;
  out.entries = (rows * cols_as_rows.transpose()).cwiseAbs();
  if (normalize_cols) {
    for (Eigen::Index j = 0; j < cols_as_rows.rows(); ++j) {
      const double norm = cols_as_rows.row(j).norm();
      if (norm == 0.0) throw std::invalid_argument("zero-norm column with normalization on");
      out.entries.col(j) /= norm;
    }
  }
  return out;
}

VectorXd weight_product(const EigenBasis& basis, const VectorXd& w) {
  if (basis.dim() != w.size()) throw std::invalid_argument("weight vector length mismatch");
  const double norm = w.norm();
  if (norm == 0.0) throw std::invalid_argument("zero weight vector");
  return basis.vectors * w / norm;
}

AdditionCurve add_eigvec_curve(const Network& net, const EigenBasis& basis, Ordering ordering,
                               const Dataset& eval_data, std::ptrdiff_t block_begin,
                               std::ptrdiff_t block_end, double weight_decay, int stride) {
  const Eigen::Index n = net.params().size();
  if (block_end < 0) block_end = n;
  if (block_begin < 0 || block_end > n || block_begin >= block_end)
    throw std::invalid_argument("bad parameter block");
  const Eigen::Index block_n = block_end - block_begin;
  if (basis.dim() != block_n)
    throw std::invalid_argument("basis dimension does not match the parameter block");
  if (stride < 1) throw std::invalid_argument("stride must be >= 1");

  const EigenBasis ordered = basis.reordered(ordering);
  const VectorXd w_block = net.params().segment(block_begin, block_n);
  const VectorXd theta = ordered.vectors * w_block;

  AdditionCurve curve;
  curve.complete = ordered.count() == block_n;

  Network probe = net;
  probe.params().segment(block_begin, block_n).setZero();
  VectorXd partial = VectorXd::Zero(block_n);

  auto evaluate = [&](int i) {
    curve.index.push_back(i);
    curve.accuracy.push_back(accuracy(probe, eval_data.inputs, eval_data.labels));
    curve.loss.push_back(batch_loss(probe, eval_data.inputs, eval_data.labels, weight_decay));
  };

  evaluate(0);
  for (int i = 0; i < ordered.count(); ++i) {
    partial += theta[i] * ordered.vectors.row(i).transpose();
    if ((i + 1) % stride == 0 || i + 1 == ordered.count()) {
      probe.params().segment(block_begin, block_n) = partial;
      evaluate(i + 1);
    }
  }
  return curve;
}

LossSlice loss_slice(const Network& net, const Dataset& eval_data, const VectorXd& direction,
                     const std::vector<double>& alphas, double weight_decay) {
  require_unit(direction, "slice direction");
  if (direction.size() != net.params().size())
    throw std::invalid_argument("direction length mismatch");

  LossSlice slice;
  slice.w_dot_h = net.params().dot(direction);
  slice.base_loss = batch_loss(net, eval_data.inputs, eval_data.labels, weight_decay);
  slice.grad_proj =
      gradient(net, eval_data.inputs, eval_data.labels, weight_decay).dot(direction);
  slice.curvature =
      hvp(net, eval_data.inputs, eval_data.labels, direction, weight_decay).dot(direction);

  Network probe = net;
  for (double alpha : alphas) {
    const double shift = alpha - slice.w_dot_h;
    probe.params() = net.params() + shift * direction;
    SlicePoint p;
    p.alpha = alpha;
    p.loss = batch_loss(probe, eval_data.inputs, eval_data.labels, weight_decay);
    p.accuracy = accuracy(probe, eval_data.inputs, eval_data.labels);
    p.quadratic =
        slice.base_loss + slice.grad_proj * shift + 0.5 * slice.curvature * shift * shift;
    slice.points.push_back(p);
  }
  return slice;
}

std::vector<double> default_slice_grid(const LossSlice& probe) {
  // 41 points over [-1, 1] around the model minimum, plus 0 and w.h.
  const double center = probe.curvature != 0.0
                            ? probe.w_dot_h - probe.grad_proj / probe.curvature
                            : probe.w_dot_h;
  std::vector<double> grid;
  for (int i = 0; i < 41; ++i) grid.push_back(center - 1.0 + 2.0 * i / 40.0);
  grid.push_back(0.0);
  grid.push_back(probe.w_dot_h);
  std::sort(grid.begin(), grid.end());
  return grid;
}

LossSlice loss_slice_default(const Network& net, const Dataset& eval_data,
                             const VectorXd& direction, double weight_decay) {
  LossSlice probe = loss_slice(net, eval_data, direction, {}, weight_decay);
  return loss_slice(net, eval_data, direction, default_slice_grid(probe), weight_decay);
}

std::vector<ScalingPoint> loss_scaling(const Network& net, const Dataset& eval_data,
                                       const std::vector<double>& alphas, int scope_layer,
                                       double weight_decay) {
  if (scope_layer != kScopeWholeNet &&
      (scope_layer < 0 || scope_layer >= net.layout().layer_count()))
    throw std::invalid_argument("scope layer out of range");

  std::vector<ScalingPoint> out;
  Network probe = net;
  for (double alpha : alphas) {
    if (alpha <= 0.0) throw std::invalid_argument("scaling factor must be positive");
    probe.params() = net.params();
    if (scope_layer == kScopeWholeNet) {
      probe.params() *= alpha;
    } else {
      auto [begin, end] = net.layout().layer_span(scope_layer);
      probe.params().segment(begin, end - begin) *= alpha;
    }
    out.push_back({alpha, batch_loss(probe, eval_data.inputs, eval_data.labels, weight_decay)});
  }
  return out;
}

VectorXd layer_concentration(const VectorXd& h, const ParamLayout& layout) {
  if (h.size() != layout.total()) throw std::invalid_argument("vector length mismatch");
  require_unit(h, "concentration vector");
  VectorXd fractions(layout.layer_count());
  for (int l = 0; l < layout.layer_count(); ++l) {
    auto [begin, end] = layout.layer_span(l);
    fractions[l] = h.segment(begin, end - begin).squaredNorm();
  }
  return fractions;
}

double ipr(const VectorXd& h) {
  require_unit(h, "ipr vector");
  return h.array().pow(4).sum();
}

double porter_thomas_pvalue(const VectorXd& h) {
  require_unit(h, "eigenvector");
  const Eigen::Index n = h.size();
  if (n < 30) throw std::invalid_argument("Porter-Thomas test needs n >= 30");
  const double sigma = 1.0 / std::sqrt(double(n));
  const double d = ks_distance(h, [&](double x) { return normal_cdf(x / sigma); });
  return ks_pvalue(d, n);
}

VectorXd embed_layer_vector(const VectorXd& h_layer, int layer, const ParamLayout& layout) {
  if (layer < 0 || layer >= layout.layer_count())
    throw std::invalid_argument("layer out of range");
  auto [begin, end] = layout.layer_span(layer);
  if (h_layer.size() != end - begin)
    throw std::invalid_argument("layer vector length mismatch");
  VectorXd out = VectorXd::Zero(layout.total());
  out.segment(begin, end - begin) = h_layer;
  return out;
}

DensityTable spectral_density(const VectorXd& eigenvalues, double kernel_sigma, int grid_points) {
  if (eigenvalues.size() < 1) throw std::invalid_argument("density needs at least one value");
  if (kernel_sigma <= 0.0) throw std::invalid_argument("kernel width must be positive");
  if (grid_points < 2) throw std::invalid_argument("grid needs at least two points");

  const double lo = eigenvalues.minCoeff() - 3.0 * kernel_sigma;
  const double hi = eigenvalues.maxCoeff() + 3.0 * kernel_sigma;
  DensityTable table;
  table.grid.resize(grid_points);
  table.density.resize(grid_points);
  const double norm = 1.0 / (eigenvalues.size() * kernel_sigma * std::sqrt(2.0 * M_PI));
  for (int i = 0; i < grid_points; ++i) {
    const double x = lo + (hi - lo) * i / (grid_points - 1);
    table.grid[i] = x;
    const auto z = (eigenvalues.array() - x) / kernel_sigma;
    table.density[i] = norm * (-0.5 * z.square()).exp().sum();
  }
  return table;
}

}  // namespace netspectra
