#include "netspectra/hessian.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include <json.hpp>

#include "netspectra/io.hpp"
#include "pass.hpp"

namespace netspectra {

using nlohmann::json;

std::string to_string(Ordering o) {
  return o == Ordering::Algebraic ? "algebraic" : "magnitude";
}

std::string to_string(BasisSource s) {
  switch (s) {
    case BasisSource::HessianDense: return "hessian-dense";
    case BasisSource::HessianLanczos: return "hessian-lanczos";
    case BasisSource::PcaWeights: return "pca-weights";
    case BasisSource::PcaVelocities: return "pca-velocities";
    case BasisSource::Svd: return "svd";
    default: return "other";
  }
}

Ordering ordering_from_string(const std::string& s) {
  if (s == "algebraic") return Ordering::Algebraic;
  if (s == "magnitude") return Ordering::Magnitude;
  throw ConfigError("unknown ordering: " + s);
}

BasisSource source_from_string(const std::string& s) {
  if (s == "hessian-dense") return BasisSource::HessianDense;
  if (s == "hessian-lanczos") return BasisSource::HessianLanczos;
  if (s == "pca-weights") return BasisSource::PcaWeights;
  if (s == "pca-velocities") return BasisSource::PcaVelocities;
  if (s == "svd") return BasisSource::Svd;
  return BasisSource::Other;
}

EigenBasis EigenBasis::reordered(Ordering o) const {
  std::vector<int> idx(static_cast<std::size_t>(count()));
  std::iota(idx.begin(), idx.end(), 0);
  if (o == Ordering::Algebraic) {
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return values[a] > values[b]; });
  } else {
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int a, int b) { return std::abs(values[a]) > std::abs(values[b]); });
  }
  EigenBasis out;
  out.values.resize(values.size());
  out.vectors.resize(vectors.rows(), vectors.cols());
  if (residuals.size()) out.residuals.resize(residuals.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.values[static_cast<Eigen::Index>(i)] = values[idx[i]];
    out.vectors.row(static_cast<Eigen::Index>(i)) = vectors.row(idx[i]);
    if (residuals.size()) out.residuals[static_cast<Eigen::Index>(i)] = residuals[idx[i]];
  }
  out.source = source;
  out.ordering = o;
  out.converged = converged;
  return out;
}

VectorXd hvp(const Network& net, const MatrixXd& inputs, const VectorXi& labels, const VectorXd& v,
             double weight_decay) {
  if (v.size() != net.params().size()) throw std::invalid_argument("direction length mismatch");
  if (inputs.rows() == 0) throw std::invalid_argument("empty batch");
  detail::ForwardCache cache;
  detail::forward_pass(net, inputs, cache);
  VectorXd result = detail::hvp_pass(net, cache, labels, v);
  if (weight_decay > 0.0) result += 2.0 * weight_decay * v;
  return result;
}

HvpFn hvp_oracle(const Network& net, const Dataset& data, double weight_decay) {
  return [net, inputs = data.inputs, labels = data.labels, weight_decay](const VectorXd& v) {
    return hvp(net, inputs, labels, v, weight_decay);
  };
}

HvpFn hvp_oracle_block(const Network& net, const Dataset& data, double weight_decay,
                       std::ptrdiff_t begin, std::ptrdiff_t end) {
  if (begin < 0 || end > net.params().size() || begin >= end)
    throw std::invalid_argument("bad parameter block");
  const Eigen::Index n = net.params().size();
  return [net, inputs = data.inputs, labels = data.labels, weight_decay, begin, end,
          n](const VectorXd& vb) {
    if (vb.size() != end - begin) throw std::invalid_argument("block direction length mismatch");
    VectorXd v = VectorXd::Zero(n);
    v.segment(begin, end - begin) = vb;
    VectorXd full = hvp(net, inputs, labels, v, weight_decay);
    return VectorXd(full.segment(begin, end - begin));
  };
}

MatrixXd dense_hessian(const HvpFn& oracle, int n, int cap, double* max_asymmetry) {
  if (n > cap)
    throw std::invalid_argument("dense Hessian capped at " + std::to_string(cap) +
                                " parameters (" + std::to_string(n) +
                                " requested); use lanczos_topk instead");
  MatrixXd h(n, n);
  const int workers = std::min(worker_count(), n);
  auto fill_rows = [&](int first) {
    VectorXd e = VectorXd::Zero(n);
    for (int i = first; i < n; i += workers) {
      e[i] = 1.0;
      h.row(i) = oracle(e);
      e[i] = 0.0;
    }
  };
  if (workers <= 1) {
    fill_rows(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) pool.emplace_back(fill_rows, t);
    for (auto& th : pool) th.join();
  }
  const double asym = (h - h.transpose()).cwiseAbs().maxCoeff();
  if (max_asymmetry) *max_asymmetry = asym;
  h = ((h + h.transpose()) / 2.0).eval();
  return h;
}

MatrixXd dense_hessian(const Network& net, const Dataset& data, double weight_decay, int cap,
                       double* max_asymmetry) {
  return dense_hessian(hvp_oracle(net, data, weight_decay),
                       static_cast<int>(net.params().size()), cap, max_asymmetry);
}

EigenBasis eigh(const MatrixXd& sym, Ordering ordering, BasisSource source) {
  if (sym.rows() != sym.cols()) throw std::invalid_argument("matrix must be square");
  if (!sym.allFinite()) throw std::invalid_argument("matrix has non-finite entries");
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");

  const Eigen::Index n = sym.rows();
  EigenBasis basis;
  basis.values.resize(n);
  basis.vectors.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    basis.values[i] = solver.eigenvalues()[n - 1 - i];  // descending algebraic
    basis.vectors.row(i) = solver.eigenvectors().col(n - 1 - i);
  }
  basis.source = source;
  basis.ordering = Ordering::Algebraic;
  if (ordering == Ordering::Magnitude) basis = basis.reordered(Ordering::Magnitude);
  return basis;
}

EigenBasis lanczos_topk(const HvpFn& oracle, int n, const LanczosOptions& opts) {
  if (opts.k < 1 || opts.k >= n)
    throw std::invalid_argument("lanczos requires 1 <= k < n");
  const int m_max = std::min<int>(n, opts.max_iters > 0 ? opts.max_iters : 10 * opts.k + 100);

  MatrixXd q(m_max, n);  // Lanczos vectors as rows
  std::vector<double> alpha, beta;
  std::mt19937_64 rng(derive_seed(opts.seed, "lanczos-start"));
  std::normal_distribution<double> gauss(0.0, 1.0);

  auto random_orthonormal = [&](int count) {
    VectorXd vec(n);
    for (int attempt = 0; attempt < 32; ++attempt) {
      for (Eigen::Index i = 0; i < n; ++i) vec[i] = gauss(rng);
      for (int pass = 0; pass < 2; ++pass)
        for (int i = 0; i < count; ++i) vec -= q.row(i).dot(vec) * q.row(i).transpose();
      const double norm = vec.norm();
      if (norm > 1e-8) return VectorXd((vec / norm).eval());
    }
    throw NumericalError("lanczos could not find a vector outside the explored subspace");
  };

  q.row(0) = random_orthonormal(0);

  auto ritz_converged = [&](int m) {
    // Residual estimate |beta_m * y[m-1]| for the top-k magnitude Ritz pairs.
    MatrixXd t = MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) {
      t(i, i) = alpha[static_cast<std::size_t>(i)];
      if (i + 1 < m) t(i, i + 1) = t(i + 1, i) = beta[static_cast<std::size_t>(i)];
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(t);
    std::vector<int> idx(static_cast<std::size_t>(m));
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
      return std::abs(es.eigenvalues()[a]) > std::abs(es.eigenvalues()[b]);
    });
    if (m < opts.k) return false;
    const double last_beta = beta.empty() ? 0.0 : beta.back();
    for (int r = 0; r < opts.k; ++r) {
      const double value = es.eigenvalues()[idx[static_cast<std::size_t>(r)]];
      const double resid =
          std::abs(last_beta * es.eigenvectors()(m - 1, idx[static_cast<std::size_t>(r)]));
      if (resid > opts.tol * std::max(1.0, std::abs(value))) return false;
    }
    return true;
  };

  int m = 0;
  for (int j = 0; j < m_max; ++j) {
    VectorXd z = oracle(q.row(j).transpose());
    if (z.size() != n) throw std::invalid_argument("oracle output length mismatch");
    alpha.push_back(q.row(j).dot(z));
    z -= alpha.back() * q.row(j).transpose();
    if (j > 0 && beta.back() != 0.0) z -= beta.back() * q.row(j - 1).transpose();
    // full reorthogonalization, two sweeps
    for (int pass = 0; pass < 2; ++pass)
      for (int i = 0; i <= j; ++i) z -= q.row(i).dot(z) * q.row(i).transpose();
    m = j + 1;
    if (m == m_max) break;
    const double norm = z.norm();
    const int check_interval = std::max(10, opts.k);
    if (m >= opts.k && (m % check_interval == 0) && ritz_converged(m)) break;
    if (norm < 1e-12) {
      // Invariant subspace exhausted; restart in its orthogonal complement.
      if (m >= opts.k && ritz_converged(m)) break;
      beta.push_back(0.0);
      q.row(j + 1) = random_orthonormal(m);
    } else {
      beta.push_back(norm);
      q.row(j + 1) = z / norm;
    }
  }

  MatrixXd t = MatrixXd::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    t(i, i) = alpha[static_cast<std::size_t>(i)];
    if (i + 1 < m) t(i, i + 1) = t(i + 1, i) = beta[static_cast<std::size_t>(i)];
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(t);
  if (es.info() != Eigen::Success) throw NumericalError("tridiagonal eigendecomposition failed");

  std::vector<int> idx(static_cast<std::size_t>(m));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    return std::abs(es.eigenvalues()[a]) > std::abs(es.eigenvalues()[b]);
  });

  const int k = std::min(opts.k, m);
  EigenBasis basis;
  basis.values.resize(k);
  basis.vectors.resize(k, n);
  basis.residuals.resize(k);
  basis.source = BasisSource::HessianLanczos;
  basis.ordering = Ordering::Magnitude;
  basis.converged = true;
  for (int r = 0; r < k; ++r) {
    const int col = idx[static_cast<std::size_t>(r)];
    basis.values[r] = es.eigenvalues()[col];
    VectorXd ritz = q.topRows(m).transpose() * es.eigenvectors().col(col);
    ritz /= ritz.norm();
    basis.vectors.row(r) = ritz;
    basis.residuals[r] = (oracle(ritz) - basis.values[r] * ritz).norm();
    if (basis.residuals[r] > opts.tol * std::max(1.0, std::abs(basis.values[r])) * 100.0)
      basis.converged = false;
  }
  return basis;
}

VectorXd mean_update(const VectorXd& w, const VectorXd& mu, const MatrixXd& hessian, double eta,
                     int batch_size, double lambda) {
  if (w.size() != mu.size() || hessian.rows() != w.size() || hessian.cols() != w.size())
    throw std::invalid_argument("shape mismatch");
  // -(eta/S)(H + 2 lambda) w + eta H mu, with 1/S only on the first term.
  return (-(eta / batch_size) * (hessian * w + 2.0 * lambda * w) + eta * (hessian * mu)).eval();
}

VectorXd mean_update(const VectorXd& w, const VectorXd& mu, const EigenBasis& basis, double eta,
                     int batch_size, double lambda) {
  if (w.size() != mu.size() || basis.dim() != w.size())
    throw std::invalid_argument("shape mismatch");
  const VectorXd hw = basis.vectors.transpose() *
                      (basis.values.asDiagonal() * (basis.vectors * w));
  const VectorXd hmu = basis.vectors.transpose() *
                       (basis.values.asDiagonal() * (basis.vectors * mu));
  return (-(eta / batch_size) * (hw + 2.0 * lambda * w) + eta * hmu).eval();
}

namespace {

double decay_fixed_point(double mu_hat, double h, double lambda) {
  if (h == 0.0) return 0.0;  // limit of mu / (1 + 2 lambda / h) for lambda > 0
  return mu_hat / (1.0 + 2.0 * lambda / h);
}

}  // namespace

double exp_decay_coordinate(double w0_hat, double mu_hat, double h, double eta, double lambda,
                            double t, DecayExponent exponent, bool* degenerate) {
  if (degenerate) *degenerate = false;
  if (h == 0.0 && lambda == 0.0) {
    if (degenerate) *degenerate = true;
    return w0_hat;
  }
  const double b = decay_fixed_point(mu_hat, h, lambda);
  const double rate =
      exponent == DecayExponent::AsPrinted ? eta * (h + lambda) : eta * (h + 2.0 * lambda);
  return (w0_hat - b) * std::exp(-rate * t) + b;
}

double decay_variance(double w0_hat, double mu_hat, double h, double eta, double lambda,
                      long time_steps) {
  const double lambda_t = eta * (h + 2.0 * lambda);
  if (lambda_t <= 0.0) throw std::invalid_argument("decay variance needs eta (h + 2 lambda) > 0");
  if (time_steps < 1) throw std::invalid_argument("need at least one time step");
  const double b = decay_fixed_point(mu_hat, h, lambda);
  const double c = w0_hat - b;
  if (c == 0.0) return 0.0;
  const double big_t = static_cast<double>(time_steps);
  // Geometric sums over t = 0..T with the 1/T time average.
  const double sum2 = (1.0 - std::exp(-2.0 * lambda_t * (big_t + 1.0))) /
                      (1.0 - std::exp(-2.0 * lambda_t));
  const double sum1 =
      (1.0 - std::exp(-lambda_t * (big_t + 1.0))) / (1.0 - std::exp(-lambda_t));
  return c * c / big_t * (sum2 - sum1 * sum1 / big_t);
}

double drift_variance_combination(const VectorXd& coefficients, const VectorXd& mode_variances) {
  if (coefficients.size() != mode_variances.size())
    throw std::invalid_argument("coefficient/variance length mismatch");
  if (std::abs(coefficients.squaredNorm() - 1.0) > 1e-8)
    throw std::invalid_argument("drift coefficients must satisfy sum d_i^2 = 1");
  return coefficients.array().square().matrix().dot(mode_variances);
}

DecayMatch match_decay_exponent(double h, double eta, double lambda) {
  const double rho = 1.0 - eta * (h + 2.0 * lambda);
  if (rho <= 0.0)
    throw std::invalid_argument("step size too large for a monotone decay (1 - eta(h+2l) <= 0)");
  DecayMatch match;
  match.matched_rate = -std::log(rho);
  match.err_printed = std::abs(match.matched_rate - eta * (h + lambda));
  match.err_consistent = std::abs(match.matched_rate - eta * (h + 2.0 * lambda));
  match.closer = match.err_consistent <= match.err_printed ? DecayExponent::UpdateConsistent
                                                           : DecayExponent::AsPrinted;
  return match;
}

double quadratic_loss_predict(const QuadraticModel& model, const VectorXd& w) {
  if (w.size() != model.mu.size() || model.basis.dim() != w.size())
    throw std::invalid_argument("shape mismatch");
  const VectorXd offset = model.basis.vectors * (w - model.mu);
  return model.loss_min + 0.5 * offset.array().square().matrix().dot(model.basis.values);
}

void save_eigenbasis(const EigenBasis& basis, const std::string& path) {
  json header = {{"format", "netspectra-eigenbasis"},
                 {"version", 1},
                 {"n", basis.dim()},
                 {"k", basis.count()},
                 {"ordering", to_string(basis.ordering)},
                 {"source", to_string(basis.source)},
                 {"converged", basis.converged},
                 {"residuals", basis.residuals.size() > 0}};
  std::string payload = header.dump();
  payload += '\n';
  append_f64(payload, basis.values.data(), static_cast<std::size_t>(basis.values.size()));
  for (Eigen::Index i = 0; i < basis.vectors.rows(); ++i) {
    VectorXd row = basis.vectors.row(i);
    append_f64(payload, row.data(), static_cast<std::size_t>(row.size()));
  }
  if (basis.residuals.size())
    append_f64(payload, basis.residuals.data(), static_cast<std::size_t>(basis.residuals.size()));
  atomic_write(path, payload);
}

EigenBasis load_eigenbasis(const std::string& path) {
  const std::string bytes = read_file(path);
  const std::size_t newline = bytes.find('\n');
  if (newline == std::string::npos) throw IoError("missing header line in " + path);
  json header;
  try {
    header = json::parse(bytes.substr(0, newline));
  } catch (const json::exception& e) {
    throw IoError("corrupt header in " + path + ": " + e.what());
  }
  if (header.value("format", "") != "netspectra-eigenbasis")
    throw IoError(path + " is not an eigenbasis file");
  const int n = header.at("n").get<int>();
  const int k = header.at("k").get<int>();
  const bool has_residuals = header.value("residuals", false);
  const std::size_t expect =
      (std::size_t(k) + std::size_t(k) * n + (has_residuals ? std::size_t(k) : 0)) *
      sizeof(double);
  if (bytes.size() - newline - 1 != expect) throw IoError("corrupt payload length in " + path);

  EigenBasis basis;
  basis.values.resize(k);
  basis.vectors.resize(k, n);
  basis.ordering = ordering_from_string(header.at("ordering").get<std::string>());
  basis.source = source_from_string(header.at("source").get<std::string>());
  basis.converged = header.value("converged", true);
  std::size_t pos = newline + 1;
  read_f64(bytes, pos, basis.values.data(), std::size_t(k));
  pos += std::size_t(k) * sizeof(double);
  for (int i = 0; i < k; ++i, pos += std::size_t(n) * sizeof(double)) {
    VectorXd row(n);
    read_f64(bytes, pos, row.data(), std::size_t(n));
    basis.vectors.row(i) = row;
  }
  if (has_residuals) {
    basis.residuals.resize(k);
    read_f64(bytes, pos, basis.residuals.data(), std::size_t(k));
  }
  return basis;
}

void save_eigenvalues_csv(const EigenBasis& basis, const std::string& path) {
  CsvWriter csv(path);
  csv.comment("source=" + to_string(basis.source) + " ordering=" + to_string(basis.ordering));
  csv.header({"index", "eigenvalue"});
  for (int i = 0; i < basis.count(); ++i) csv.row({double(i), basis.values[i]});
  csv.flush();
}

}  // namespace netspectra
