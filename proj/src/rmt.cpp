#include "netspectra/rmt.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace netspectra {

SvdBundle svd(const MatrixXd& w) {
  if (!w.allFinite()) throw std::invalid_argument("matrix has non-finite entries");
  if (w.rows() == 0 || w.cols() == 0) throw std::invalid_argument("empty matrix");

  SvdBundle bundle;
  bundle.orig_rows = static_cast<int>(w.rows());
  bundle.orig_cols = static_cast<int>(w.cols());
  bundle.transposed = w.rows() < w.cols();
  MatrixXd a = bundle.transposed ? MatrixXd(w.transpose()) : w;

  Eigen::BDCSVD<MatrixXd> solver(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  bundle.sv = solver.singularValues();
  bundle.u = solver.matrixU();
  bundle.v = solver.matrixV();
  return bundle;
}

VectorXd singular_matrix_vector(const SvdBundle& bundle, int i) {
  if (i < 0 || i >= bundle.m()) throw std::invalid_argument("singular index out of range");
  // Rank-1 piece in the Q >= 1 orientation, mapped back to the original.
  MatrixXd piece = bundle.sv[i] * bundle.u.col(i) * bundle.v.col(i).transpose();
  if (bundle.transposed) piece = piece.transpose().eval();
  RowMatrix rm = piece;
  return Eigen::Map<const VectorXd>(rm.data(), rm.size());
}

std::pair<double, double> mp_bounds(double sigma2_mp, double q) {
  if (sigma2_mp <= 0.0) throw std::invalid_argument("sigma2 must be positive");
  if (q < 1.0) throw std::invalid_argument("Q must be >= 1");
  const double root = 1.0 / std::sqrt(q);
  return {sigma2_mp * (1.0 - root) * (1.0 - root), sigma2_mp * (1.0 + root) * (1.0 + root)};
}

double mp_density(double lambda, double sigma2_mp, double q) {
  auto [lo, hi] = mp_bounds(sigma2_mp, q);
  if (lambda < lo || lambda > hi) return 0.0;
  if (lambda == 0.0) return 0.0;  // integrable edge at Q == 1
  return q / (2.0 * M_PI * sigma2_mp * lambda) * std::sqrt((hi - lambda) * (lambda - lo));
}

double mp_cdf(double lambda, double sigma2_mp, double q) {
  auto [lo, hi] = mp_bounds(sigma2_mp, q);
  if (lambda <= lo) return 0.0;
  if (lambda >= hi) return 1.0;
  // Substituting l = lo cos^2(t) + hi sin^2(t) removes the sqrt edges.
  const double width = hi - lo;
  const double theta = std::asin(std::sqrt((lambda - lo) / width));
  auto integrand = [&](double t) {
    const double s = std::sin(t);
    const double c = std::cos(t);
    const double l = lo + width * s * s;
    if (l <= 0.0) return 0.0;
    return q / (2.0 * M_PI * sigma2_mp * l) * (width * s * c) * (2.0 * width * s * c);
  };
  const int steps = 2048;  // composite Simpson on a smooth integrand
  const double h = theta / steps;
  double sum = integrand(0.0) + integrand(theta);
  for (int i = 1; i < steps; ++i) sum += integrand(i * h) * (i % 2 ? 4.0 : 2.0);
  return std::clamp(sum * h / 3.0, 0.0, 1.0);
}

VectorXd mapped_spectrum(const SvdBundle& bundle) {
  return bundle.sv.array().square() / double(bundle.n());
}

void bulk_analysis(SvdBundle& bundle, VarianceEstimator estimator) {
  double sigma2 = 0.0;
  if (estimator == VarianceEstimator::MeanSquare) {
    // mean squared entry; Frobenius norm equals the singular value norm
    sigma2 = bundle.sv.squaredNorm() / (double(bundle.n()) * bundle.m());
  } else {
    MatrixXd recon = bundle.u * bundle.sv.asDiagonal() * bundle.v.transpose();
    std::vector<double> mags(recon.data(), recon.data() + recon.size());
    for (double& m : mags) m = std::abs(m);
    auto mid = mags.begin() + mags.size() / 2;
    std::nth_element(mags.begin(), mid, mags.end());
    const double sigma = *mid / 0.6744897501960817;  // MAD to stddev for a Gaussian
    sigma2 = sigma * sigma;
  }
  bundle.sigma2_mp = sigma2;
  if (sigma2 <= 0.0) {  // all-zero layer: empty bulk, no outliers
    bundle.lambda_minus = bundle.lambda_plus = 0.0;
    bundle.n_out = 0;
    return;
  }
  auto [lo, hi] = mp_bounds(sigma2, bundle.q());
  bundle.lambda_minus = lo;
  bundle.lambda_plus = hi;
  const VectorXd mapped = mapped_spectrum(bundle);
  bundle.n_out = static_cast<int>((mapped.array() > hi).count());
}

SvdBundle bulk_analysis(const MatrixXd& w, VarianceEstimator estimator) {
  SvdBundle bundle = svd(w);
  bulk_analysis(bundle, estimator);
  return bundle;
}

VectorXd unfold_spacings(const VectorXd& sorted_values, int k_neighbors, int* zero_spacings) {
  if (k_neighbors < 1) throw std::invalid_argument("k_neighbors must be >= 1");
  const Eigen::Index n = sorted_values.size();
  if (n < 3) throw std::invalid_argument("unfolding needs at least 3 values");

  const bool ascending = sorted_values[n - 1] >= sorted_values[0];
  VectorXd raw(n - 1);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const double d = ascending ? sorted_values[i + 1] - sorted_values[i]
                               : sorted_values[i] - sorted_values[i + 1];
    if (d < 0.0) throw std::invalid_argument("values must be sorted");
    raw[i] = d;
  }

  if (zero_spacings) *zero_spacings = static_cast<int>((raw.array() == 0.0).count());

  VectorXd out(raw.size());
  const Eigen::Index m = raw.size();
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, i - k_neighbors);
    const Eigen::Index hi = std::min(m, i + k_neighbors + 1);  // window clipped at edges
    const double mean = raw.segment(lo, hi - lo).mean();
    out[i] = mean > 0.0 ? raw[i] / mean : 0.0;
  }
  return out;
}

double wigner_pdf(double s) {
  if (s < 0.0) throw std::invalid_argument("spacing must be nonnegative");
  return M_PI * s / 2.0 * std::exp(-M_PI * s * s / 4.0);
}

double wigner_cdf(double s) {
  if (s < 0.0) return 0.0;
  return 1.0 - std::exp(-M_PI * s * s / 4.0);
}

}  // namespace netspectra
