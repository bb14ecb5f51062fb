#include "netspectra/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace netspectra {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double variance(const VectorXd& x) {
  if (x.size() == 0) return 0.0;
  const double mean = x.mean();
  return (x.array() - mean).square().sum() / double(x.size());
}

double ks_distance(VectorXd samples, const std::function<double(double)>& cdf) {
  if (samples.size() == 0) throw std::invalid_argument("KS distance needs samples");
  std::sort(samples.data(), samples.data() + samples.size());
  const double n = double(samples.size());
  double d = 0.0;
  for (Eigen::Index i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max(d, std::abs(f - double(i) / n));
    d = std::max(d, std::abs(f - double(i + 1) / n));
  }
  return d;
}

double ks_pvalue(double distance, long n) {
  if (n < 1) throw std::invalid_argument("KS p-value needs n >= 1");
  const double sqrt_n = std::sqrt(double(n));
  const double lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * distance;
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * double(j) * double(j) * lambda * lambda);
    sum += (j % 2 ? term : -term);
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

LineFit fit_line(const VectorXd& x, const VectorXd& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("line fit needs matching series with >= 2 points");
  const double n = double(x.size());
  const double mx = x.mean();
  const double my = y.mean();
  const double sxx = (x.array() - mx).square().sum();
  if (sxx == 0.0) throw std::invalid_argument("line fit needs distinct x values");
  LineFit fit;
  fit.slope = (x.array() - mx).matrix().dot((y.array() - my).matrix()) / sxx;
  fit.intercept = my - fit.slope * mx;
  const VectorXd resid = y - (fit.slope * x.array() + fit.intercept).matrix();
  fit.residual_rms = std::sqrt(resid.squaredNorm() / n);
  const double sst = (y.array() - my).square().sum();
  fit.r_squared = sst > 0.0 ? 1.0 - resid.squaredNorm() / sst
                            : std::numeric_limits<double>::quiet_NaN();
  return fit;
}

}  // namespace netspectra
