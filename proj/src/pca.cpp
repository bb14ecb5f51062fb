#include "netspectra/pca.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "netspectra/stats.hpp"

namespace netspectra {

namespace {

void fix_sign(MatrixXd& components) {
  for (Eigen::Index i = 0; i < components.rows(); ++i) {
    Eigen::Index argmax;
    components.row(i).cwiseAbs().maxCoeff(&argmax);
    if (components(i, argmax) < 0.0) components.row(i) = -components.row(i);
  }
}

}  // namespace

EigenBasis PcaResult::as_basis() const {
  EigenBasis basis;
  basis.values = variances;
  basis.vectors = components;
  basis.ordering = Ordering::Algebraic;
  basis.source = source == PcaSource::Weights ? BasisSource::PcaWeights
                                              : BasisSource::PcaVelocities;
  return basis;
}

PcaResult pca_of(const MatrixXd& snapshots, PcaSource source) {
  const Eigen::Index t = snapshots.rows();
  const Eigen::Index n = snapshots.cols();
  if (t < 2) throw std::invalid_argument("covariance needs at least two snapshots");

  PcaResult result;
  result.source = source;
  result.mean = snapshots.colwise().mean();
  MatrixXd centered = snapshots.rowwise() - result.mean.transpose();

  if (t < n) {
    // Gram route: eigenpairs of (1/T) X X^T share the nonzero spectrum of
    // the n x n covariance; at most T-1 variances are nonzero.
    MatrixXd gram = centered * centered.transpose() / double(t);
    Eigen::SelfAdjointEigenSolver<MatrixXd> solver(gram);
    if (solver.info() != Eigen::Success) throw NumericalError("gram eigendecomposition failed");
    const Eigen::Index k = t;
    const double vmax = solver.eigenvalues().maxCoeff();
    const double floor = std::max(0.0, vmax) * 1e-14;
    result.variances.resize(k);
    result.components.resize(k, n);
    Eigen::Index kept = 0;
    for (Eigen::Index i = 0; i < k; ++i) {
      const double value = solver.eigenvalues()[t - 1 - i];
      if (value <= floor) continue;  // null-space artifacts of the Gram route
      VectorXd dir = centered.transpose() * solver.eigenvectors().col(t - 1 - i);
      const double norm = dir.norm();
      if (norm < 1e-150) continue;
      result.variances[kept] = value;
      result.components.row(kept) = dir / norm;
      ++kept;
    }
    result.variances.conservativeResize(kept);
    result.components.conservativeResize(kept, n);
  } else {
    MatrixXd cov = centered.transpose() * centered / double(t);
    Eigen::SelfAdjointEigenSolver<MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw NumericalError("covariance eigendecomposition failed");
    result.variances.resize(n);
    result.components.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      result.variances[i] = std::max(0.0, solver.eigenvalues()[n - 1 - i]);
      result.components.row(i) = solver.eigenvectors().col(n - 1 - i);
    }
  }
  fix_sign(result.components);
  return result;
}

VectorXd project(const MatrixXd& snapshots, const VectorXd& component) {
  if (snapshots.cols() != component.size())
    throw std::invalid_argument("component length mismatch");
  return snapshots * component;
}

DriftFit drift_fit(const VectorXd& times, const VectorXd& theta, double t0) {
  if (times.size() != theta.size()) throw std::invalid_argument("times/theta length mismatch");
  std::vector<double> xs, ys;
  for (Eigen::Index i = 0; i < times.size(); ++i) {
    if (times[i] >= t0) {
      xs.push_back(times[i] - t0);
      ys.push_back(theta[i]);
    }
  }
  if (xs.size() < 3) throw std::invalid_argument("drift fit needs at least 3 points after t0");

  DriftFit fit;
  fit.t0 = t0;
  VectorXd x = Eigen::Map<VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
  VectorXd y = Eigen::Map<VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
  if ((y.array() - y[0]).abs().maxCoeff() == 0.0) {
    fit.slope = 0.0;
    fit.intercept = y[0];
    fit.residual_rms = 0.0;
    fit.r_squared = std::numeric_limits<double>::quiet_NaN();
    fit.degenerate = true;
    return fit;
  }
  LineFit line = fit_line(x, y);
  fit.slope = line.slope;
  fit.intercept = line.intercept;
  fit.residual_rms = line.residual_rms;
  fit.r_squared = line.r_squared;
  return fit;
}

double linear_drift_variance(double slope, long samples) {
  if (samples < 1) throw std::invalid_argument("need at least one sample");
  const double t = double(samples);
  return slope * slope * (t * t - 1.0) / 12.0;
}

double hcross(int batch_size, double beta, double eta, long n_train) {
  if (batch_size < 1 || eta <= 0.0 || n_train < 1)
    throw std::invalid_argument("hcross needs positive batch size, eta and N_train");
  if (beta < 0.0 || beta >= 1.0) throw std::invalid_argument("momentum must be in [0,1)");
  return 3.0 * batch_size * (1.0 - beta) / (eta * double(n_train));
}

ScalingScatter scaling_scatter(const PcaResult& pca, const EigenBasis& hessian, int fit_begin,
                               int fit_end, double hcross_value) {
  const int count = std::min(pca.count(), hessian.count());
  if (count < 1) throw std::invalid_argument("no pairs to align");
  if (fit_begin < 0 || fit_end > count || fit_begin >= fit_end)
    throw std::invalid_argument("bad fit window");

  ScalingScatter out;
  out.hessian_values = hessian.values.head(count);
  out.variances = pca.variances.head(count);
  out.hcross_marker = hcross_value;

  std::vector<double> lx, ly;
  for (int i = fit_begin; i < fit_end; ++i) {
    if (out.hessian_values[i] > 0.0 && out.variances[i] > 0.0) {
      lx.push_back(std::log(out.hessian_values[i]));
      ly.push_back(std::log(out.variances[i]));
    } else {
      ++out.excluded;
    }
  }
  if (lx.size() < 2) throw std::invalid_argument("fit window has fewer than 2 positive pairs");
  VectorXd x = Eigen::Map<VectorXd>(lx.data(), static_cast<Eigen::Index>(lx.size()));
  VectorXd y = Eigen::Map<VectorXd>(ly.data(), static_cast<Eigen::Index>(ly.size()));
  out.alpha = fit_line(x, y).slope;
  return out;
}

VectorXd pc_partial_reconstruction(const VectorXd& w_final, const PcaResult& pca, int count) {
  if (count < 0 || count > pca.count())
    throw std::invalid_argument("component count out of range");
  if (w_final.size() != pca.components.cols())
    throw std::invalid_argument("weight vector length mismatch");
  VectorXd out = VectorXd::Zero(w_final.size());
  for (int j = 0; j < count; ++j)
    out += w_final.dot(pca.components.row(j)) * pca.components.row(j).transpose();
  return out;
}

}  // namespace netspectra
