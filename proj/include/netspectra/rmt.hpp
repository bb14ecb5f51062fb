#pragma once

#include <utility>

#include "netspectra/common.hpp"

namespace netspectra {

/// SVD of one layer matrix plus Marchenko-Pastur bulk statistics. The
/// factorization is taken with Q = N/M >= 1 (transposing if needed); the
/// original shape and orientation are kept so flattened singular matrices
/// match the layer's row-major weight block.
struct SvdBundle {
  VectorXd sv;  // descending, length M
  MatrixXd u;   // N x M, orthonormal columns
  MatrixXd v;   // M x M, orthonormal columns
  int orig_rows = 0;
  int orig_cols = 0;
  bool transposed = false;

  double sigma2_mp = -1.0;  // set by bulk_analysis
  double lambda_minus = -1.0;
  double lambda_plus = -1.0;
  int n_out = -1;  // mapped values above lambda_plus

  int n() const { return static_cast<int>(u.rows()); }
  int m() const { return static_cast<int>(sv.size()); }
  double q() const { return static_cast<double>(n()) / m(); }
  int rank() const { return m(); }
};

SvdBundle svd(const MatrixXd& w);

/// flatten(U diag(0,..,nu_i,..,0) V^T) in the original layer orientation,
/// row-major. Norm equals nu_i; distinct indices are orthogonal.
VectorXd singular_matrix_vector(const SvdBundle& bundle, int i);

/// lambda_pm = sigma2 (1 +- 1/sqrt(Q))^2.
std::pair<double, double> mp_bounds(double sigma2_mp, double q);

/// Marchenko-Pastur density; zero outside [lambda-, lambda+].
double mp_density(double lambda, double sigma2_mp, double q);

/// CDF of the MP density by adaptive quadrature (exact 0/1 outside bulk).
double mp_cdf(double lambda, double sigma2_mp, double q);

enum class VarianceEstimator { MeanSquare, MedianBased };

/// Fills sigma2_mp (per the chosen entry-variance estimator), the bulk
/// bounds and the outlier count of the mapped values lambda_j = nu_j^2 / N.
void bulk_analysis(SvdBundle& bundle, VarianceEstimator estimator = VarianceEstimator::MeanSquare);
SvdBundle bulk_analysis(const MatrixXd& w, VarianceEstimator estimator = VarianceEstimator::MeanSquare);

/// Mapped spectrum nu_j^2 / N used for bulk classification.
VectorXd mapped_spectrum(const SvdBundle& bundle);

/// Locally normalized level spacings: each raw spacing divided by the mean
/// over the k nearest spacings on each side (window clipped at edges).
/// Values must be sorted; duplicates yield zero spacings, counted in
/// `zero_spacings`.
VectorXd unfold_spacings(const VectorXd& sorted_values, int k_neighbors = 10,
                         int* zero_spacings = nullptr);

/// Wigner surmise p(s) = (pi s / 2) exp(-pi s^2 / 4).
double wigner_pdf(double s);
double wigner_cdf(double s);

}  // namespace netspectra
