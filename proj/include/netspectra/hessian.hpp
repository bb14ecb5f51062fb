#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "netspectra/data.hpp"
#include "netspectra/nn.hpp"

namespace netspectra {

enum class Ordering { Algebraic, Magnitude };
enum class BasisSource { HessianDense, HessianLanczos, PcaWeights, PcaVelocities, Svd, Other };

std::string to_string(Ordering o);
std::string to_string(BasisSource s);
Ordering ordering_from_string(const std::string& s);
BasisSource source_from_string(const std::string& s);

/// Eigenvalues sorted per `ordering` (descending), eigenvectors as rows.
struct EigenBasis {
  VectorXd values;
  MatrixXd vectors;  // k x n, orthonormal rows
  BasisSource source = BasisSource::Other;
  Ordering ordering = Ordering::Algebraic;
  VectorXd residuals;     // per-pair ||H v - h v||, filled by Lanczos
  bool converged = true;  // false if Lanczos hit max_iters first

  int count() const { return static_cast<int>(values.size()); }
  int dim() const { return static_cast<int>(vectors.cols()); }
  EigenBasis reordered(Ordering o) const;
};

using HvpFn = std::function<VectorXd(const VectorXd&)>;

/// Exact Hessian-vector product of the mean batch loss (plus 2*lambda*v),
/// computed with the forward-over-reverse trick; no finite differences.
VectorXd hvp(const Network& net, const MatrixXd& inputs, const VectorXi& labels,
             const VectorXd& v, double weight_decay);

/// Captures net and data by value; calls stay pure and deterministic.
HvpFn hvp_oracle(const Network& net, const Dataset& data, double weight_decay);

/// Oracle over the parameter sub-block [begin, end); input and output live in
/// the block's coordinates while the complement stays at the trained values.
HvpFn hvp_oracle_block(const Network& net, const Dataset& data, double weight_decay,
                       std::ptrdiff_t begin, std::ptrdiff_t end);

inline constexpr int kDenseHessianCap = 6000;

/// Row-by-row assembly from basis-vector products; symmetrized as
/// (H + H^T)/2. `max_asymmetry` reports max|H - H^T| before symmetrizing.
MatrixXd dense_hessian(const HvpFn& oracle, int n, int cap = kDenseHessianCap,
                       double* max_asymmetry = nullptr);
MatrixXd dense_hessian(const Network& net, const Dataset& data, double weight_decay,
                       int cap = kDenseHessianCap, double* max_asymmetry = nullptr);

/// Full spectrum of a symmetric matrix, descending.
EigenBasis eigh(const MatrixXd& sym, Ordering ordering = Ordering::Algebraic,
                BasisSource source = BasisSource::HessianDense);

struct LanczosOptions {
  int k = 10;
  int max_iters = 0;  // 0: min(n, 10 k + 100)
  std::uint64_t seed = 0;
  double tol = 1e-9;  // relative residual target per pair
};

/// Top-k eigenpairs by magnitude with full reorthogonalization against all
/// stored Lanczos vectors. Partial results are flagged via `converged`.
EigenBasis lanczos_topk(const HvpFn& oracle, int n, const LanczosOptions& opts);

/// Batch-averaged SGD update direction -(eta/S)(H + 2 lambda) w + eta H mu,
/// with the asymmetric 1/S placement kept exactly as derived.
VectorXd mean_update(const VectorXd& w, const VectorXd& mu, const MatrixXd& hessian, double eta,
                     int batch_size, double lambda);
VectorXd mean_update(const VectorXd& w, const VectorXd& mu, const EigenBasis& basis, double eta,
                     int batch_size, double lambda);

/// Exponent choices for the closed-form coordinate decay: the thesis prints
/// exp(-eta (h + lambda) t) while its own variance derivation uses
/// lambda_t = eta (h + 2 lambda). Both are exposed; match_decay_exponent
/// reports which one discrete simulation follows.
enum class DecayExponent { AsPrinted, UpdateConsistent };

/// w_hat(t) = (w0 - b) exp(-rate * t) + b with b = mu_hat / (1 + 2 lambda / h).
/// Degenerate h == 0, lambda == 0 returns w0 and sets the flag.
double exp_decay_coordinate(double w0_hat, double mu_hat, double h, double eta, double lambda,
                            double t, DecayExponent exponent = DecayExponent::AsPrinted,
                            bool* degenerate = nullptr);

/// Closed-form variance of {w_hat(t)}_{t=0..T} under the 1/T time average
/// used throughout; requires lambda_t = eta (h + 2 lambda) > 0.
double decay_variance(double w0_hat, double mu_hat, double h, double eta, double lambda,
                      long time_steps);

/// sigma_d^2 = sum_i d_i^2 sigma_i^2 with sum d_i^2 = 1.
double drift_variance_combination(const VectorXd& coefficients, const VectorXd& mode_variances);

struct DecayMatch {
  double matched_rate = 0.0;  // -ln(1 - eta (h + 2 lambda)) per unit step
  DecayExponent closer = DecayExponent::UpdateConsistent;
  double err_printed = 0.0;
  double err_consistent = 0.0;
};

/// Compares both printed exponent constants against the exact per-step decay
/// factor of full-batch gradient descent on the quadratic model.
DecayMatch match_decay_exponent(double h, double eta, double lambda);

struct QuadraticModel {
  double loss_min = 0.0;
  VectorXd mu;
  EigenBasis basis;
  double eta = 0.0;
  double lambda = 0.0;
  int batch_size = 1;
};

/// L_min + (w - mu)^T (H/2) (w - mu) evaluated through the eigenbasis.
double quadratic_loss_predict(const QuadraticModel& model, const VectorXd& w);

// Persisted as one JSON header line (n, k, ordering, source) plus
// little-endian float64 values then row-major vectors.
void save_eigenbasis(const EigenBasis& basis, const std::string& path);
EigenBasis load_eigenbasis(const std::string& path);
void save_eigenvalues_csv(const EigenBasis& basis, const std::string& path);

}  // namespace netspectra
