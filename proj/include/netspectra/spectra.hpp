#pragma once

#include <string>
#include <vector>

#include "netspectra/hessian.hpp"
#include "netspectra/pca.hpp"
#include "netspectra/rmt.hpp"

namespace netspectra {

struct OverlapMatrix {
  MatrixXd entries;  // |row_i . col_j| (optionally column-normalized)
  std::string row_tag;
  std::string col_tag;
};

/// Absolute scalar products of basis rows against column vectors; column
/// normalization divides by each column's norm (zero-norm columns are
/// rejected when it is on).
OverlapMatrix overlap(const MatrixXd& rows, const MatrixXd& cols_as_rows, bool normalize_cols,
                      const std::string& row_tag = "", const std::string& col_tag = "");

/// Signed series h_i . w / ||w||, index-aligned with the basis ordering.
VectorXd weight_product(const EigenBasis& basis, const VectorXd& w);

struct AdditionCurve {
  std::vector<int> index;   // prefix length i = 0..k
  std::vector<double> accuracy;
  std::vector<double> loss;
  bool complete = true;  // false when the basis does not span the block
};

/// Rebuilds the parameter block from eigenvector prefixes (other blocks stay
/// at trained values) and evaluates accuracy and loss at each prefix length.
AdditionCurve add_eigvec_curve(const Network& net, const EigenBasis& basis, Ordering ordering,
                               const Dataset& eval_data, std::ptrdiff_t block_begin = 0,
                               std::ptrdiff_t block_end = -1, double weight_decay = 0.0,
                               int stride = 1);

struct SlicePoint {
  double alpha = 0.0;
  double loss = 0.0;
  double accuracy = 0.0;
  double quadratic = 0.0;
};

struct LossSlice {
  std::vector<SlicePoint> points;
  double w_dot_h = 0.0;      // alpha at which the slice equals the base loss
  double base_loss = 0.0;
  double curvature = 0.0;    // h^T H h via one hvp
  double grad_proj = 0.0;    // grad . h
};

/// Loss along w + (alpha - w.h) h with a quadratic-model overlay built from
/// the local gradient projection and curvature.
LossSlice loss_slice(const Network& net, const Dataset& eval_data, const VectorXd& direction,
                     const std::vector<double>& alphas, double weight_decay);

/// Default grid: 41 points over [-1,1] around the model minimum plus
/// alpha = 0 and alpha = w.h.
std::vector<double> default_slice_grid(const LossSlice& probe);
LossSlice loss_slice_default(const Network& net, const Dataset& eval_data,
                             const VectorXd& direction, double weight_decay);

struct ScalingPoint {
  double alpha = 0.0;
  double loss = 0.0;
};

inline constexpr int kScopeWholeNet = -1;

/// Scales the selected layer's parameters (or the whole net) by alpha and
/// evaluates the loss.
std::vector<ScalingPoint> loss_scaling(const Network& net, const Dataset& eval_data,
                                       const std::vector<double>& alphas, int scope_layer,
                                       double weight_decay);

/// Per-layer squared norms ||h||_l^2 of a unit vector; sums to 1.
VectorXd layer_concentration(const VectorXd& h, const ParamLayout& layout);

/// Inverse participation ratio sum_j h_j^4, in [1/n, 1] for unit vectors.
double ipr(const VectorXd& h);

/// Two-sided KS p-value of the entries against N(0, 1/n).
double porter_thomas_pvalue(const VectorXd& h);

/// Zero-padded embedding of a layer-space vector into the full parameter
/// space; preserves the norm.
VectorXd embed_layer_vector(const VectorXd& h_layer, int layer, const ParamLayout& layout);

struct DensityTable {
  VectorXd grid;
  VectorXd density;
};

/// Gaussian kernel density of the spectrum on a uniform grid spanning
/// [min - 3 sigma, max + 3 sigma].
DensityTable spectral_density(const VectorXd& eigenvalues, double kernel_sigma = 1.0,
                              int grid_points = 512);

}  // namespace netspectra
