#pragma once

#include <vector>

#include "netspectra/hessian.hpp"

namespace netspectra {

enum class PcaSource { Weights, Velocities };

/// Principal components of a snapshot matrix. Components are rows, unit
/// norm, descending variance; each component's sign is fixed so its
/// largest-magnitude entry is positive.
struct PcaResult {
  VectorXd variances;
  MatrixXd components;  // k x n
  VectorXd mean;
  PcaSource source = PcaSource::Weights;

  int count() const { return static_cast<int>(variances.size()); }
  EigenBasis as_basis() const;
};

/// Covariance spectrum with biased 1/T normalization. Uses the T x T Gram
/// route when T < n (at most T-1 nonzero variances), the direct n x n
/// route otherwise.
PcaResult pca_of(const MatrixXd& snapshots, PcaSource source = PcaSource::Weights);

/// theta_i(t) = w(t) . p_i per snapshot row.
VectorXd project(const MatrixXd& snapshots, const VectorXd& component);

struct DriftFit {
  double slope = 0.0;
  double intercept = 0.0;
  double t0 = 0.0;
  double residual_rms = 0.0;
  double r_squared = 0.0;
  bool degenerate = false;  // constant series: slope 0, R^2 undefined
};

/// Least-squares line theta ~ a (t - t0) + b over samples with t >= t0.
DriftFit drift_fit(const VectorXd& times, const VectorXd& theta, double t0);

/// Faulhaber variance a^2 (T^2 - 1) / 12 of a T-sample linear series.
double linear_drift_variance(double slope, long samples);

/// h_cross = 3 S (1 - beta) / (eta N_train).
double hcross(int batch_size, double beta, double eta, long n_train);

struct ScalingScatter {
  VectorXd hessian_values;  // descending, index-aligned
  VectorXd variances;       // descending, index-aligned
  double alpha = 0.0;       // log-log slope over [fit_begin, fit_end)
  int excluded = 0;         // nonpositive pairs dropped from the fit
  double hcross_marker = 0.0;
};

/// Index-aligned (h_i, sigma_i^2) pairs plus the fitted power-law exponent.
ScalingScatter scaling_scatter(const PcaResult& pca, const EigenBasis& hessian, int fit_begin,
                               int fit_end, double hcross_value = 0.0);

/// Sum of the first `count` components weighted by their projections of
/// w_final; count = 0 gives the zero vector.
VectorXd pc_partial_reconstruction(const VectorXd& w_final, const PcaResult& pca, int count);

}  // namespace netspectra
