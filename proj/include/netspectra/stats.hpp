#pragma once

#include <functional>

#include "netspectra/common.hpp"

namespace netspectra {

/// Standard normal CDF.
double normal_cdf(double x);

/// Biased (1/N) variance.
double variance(const VectorXd& x);

/// Two-sided Kolmogorov-Smirnov distance of samples against a CDF.
double ks_distance(VectorXd samples, const std::function<double(double)>& cdf);

/// Asymptotic two-sided KS p-value with the Stephens small-sample correction.
double ks_pvalue(double distance, long n);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual_rms = 0.0;
  double r_squared = 0.0;
};

LineFit fit_line(const VectorXd& x, const VectorXd& y);

}  // namespace netspectra
