#include "netspectra/continual.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "netspectra/io.hpp"
#include "netspectra/rmt.hpp"

namespace netspectra {

std::string to_string(CfMethod m) {
  switch (m) {
    case CfMethod::None: return "none";
    case CfMethod::HessLoss: return "hess-loss";
    case CfMethod::SvLoss: return "sv-loss";
    case CfMethod::HessGrad: return "hess-grad";
    case CfMethod::SvGrad: return "sv-grad";
  }
  return "none";
}

CfMethod cf_method_from_string(const std::string& s) {
  if (s == "none") return CfMethod::None;
  if (s == "hess-loss") return CfMethod::HessLoss;
  if (s == "sv-loss") return CfMethod::SvLoss;
  if (s == "hess-grad") return CfMethod::HessGrad;
  if (s == "sv-grad") return CfMethod::SvGrad;
  throw ConfigError("unknown forgetting method: " + s);
}

std::pair<double, VectorXd> cf_penalty(const VectorXd& w, const ConservationBasis& basis,
                                       double lambda_cf) {
  if (lambda_cf < 0.0) throw std::invalid_argument("lambda_cf must be >= 0");
  if (w.size() != basis.anchor.size()) throw std::invalid_argument("weight length mismatch");
  const VectorXd offsets = basis.directions * (w - basis.anchor);
  const double value = lambda_cf * basis.strengths.dot(offsets.array().square().matrix());
  const VectorXd grad =
      2.0 * lambda_cf * basis.directions.transpose() * basis.strengths.cwiseProduct(offsets);
  return {value, grad};
}

VectorXd project_velocity(const VectorXd& v, const ConservationBasis& basis, double gamma) {
  if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("gamma must be in [0,1]");
  if (basis.count() < 1 || basis.strengths[0] <= 0.0)
    throw std::invalid_argument("projection needs a positive leading strength");
  if (v.size() != basis.directions.cols()) throw std::invalid_argument("velocity length mismatch");
  const VectorXd weights = basis.strengths / basis.strengths[0];
  const VectorXd proj = basis.directions * v;
  return v - gamma * basis.directions.transpose() * weights.cwiseProduct(proj);
}

namespace {

// Hessian-vector oracle restricted to an arbitrary index set.
HvpFn masked_oracle(const Network& net, const Dataset& data, double weight_decay,
                    std::vector<Eigen::Index> idx) {
  const Eigen::Index n = net.params().size();
  return [net, inputs = data.inputs, labels = data.labels, weight_decay, idx,
          n](const VectorXd& vb) {
    VectorXd v = VectorXd::Zero(n);
    for (std::size_t i = 0; i < idx.size(); ++i) v[idx[i]] = vb[static_cast<Eigen::Index>(i)];
    const VectorXd full = hvp(net, inputs, labels, v, weight_decay);
    VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = full[idx[i]];
    return out;
  };
}

std::vector<Eigen::Index> collect_indices(const ParamLayout& layout,
                                          const std::vector<int>& layers,
                                          bool weights_only, bool biases_only) {
  std::vector<Eigen::Index> idx;
  for (int l : layers) {
    if (!biases_only) {
      const ParamBlock& w = layout.weight(l);
      for (std::ptrdiff_t i = 0; i < w.size(); ++i) idx.push_back(w.offset + i);
    }
    if (!weights_only) {
      const ParamBlock& b = layout.bias(l);
      for (std::ptrdiff_t i = 0; i < b.size(); ++i) idx.push_back(b.offset + i);
    }
  }
  return idx;
}

struct Entry {
  double strength;
  VectorXd direction;
};

void hessian_entries(const Network& net, const Dataset& task1, double weight_decay,
                     const std::vector<Eigen::Index>& idx, int count, std::uint64_t seed,
                     std::vector<Entry>& out) {
  const int block_n = static_cast<int>(idx.size());
  if (count > block_n) count = block_n;
  HvpFn oracle = masked_oracle(net, task1, weight_decay, idx);
  EigenBasis basis;
  if (block_n <= kDenseHessianCap) {
    basis = eigh(dense_hessian(oracle, block_n), Ordering::Magnitude);
  } else {
    LanczosOptions opts;
    opts.k = count;
    opts.seed = seed;
    basis = lanczos_topk(oracle, block_n, opts);
  }
  const Eigen::Index n = net.params().size();
  for (int r = 0; r < count; ++r) {
    Entry e;
    e.strength = std::abs(basis.values[r]);
    e.direction = VectorXd::Zero(n);
    for (std::size_t i = 0; i < idx.size(); ++i)
      e.direction[idx[i]] = basis.vectors(r, static_cast<Eigen::Index>(i));
    out.push_back(std::move(e));
  }
}

}  // namespace

ConservationBasis build_basis(const Network& net, const Dataset& task1, const BasisOptions& opts) {
  std::vector<int> layers = opts.scope_layers;
  if (layers.empty()) {
    layers.resize(static_cast<std::size_t>(net.layout().layer_count()));
    std::iota(layers.begin(), layers.end(), 0);
  }
  for (int l : layers)
    if (l < 0 || l >= net.layout().layer_count())
      throw std::invalid_argument("scope layer out of range");

  std::vector<Entry> entries;
  const Eigen::Index n = net.params().size();

  if (opts.method == BasisMethod::Hessian) {
    const auto idx = collect_indices(net.layout(), layers, false, false);
    const int budget = opts.budget > 0 ? opts.budget : static_cast<int>(idx.size());
    hessian_entries(net, task1, opts.weight_decay, idx, budget, opts.seed, entries);
  } else {
    for (int l : layers) {
      const ParamBlock& wb = net.layout().weight(l);
      SvdBundle bundle = bulk_analysis(MatrixXd(net.weight(l)));
      int count = opts.budget > 0 ? opts.budget : bundle.n_out;
      count = std::min(count, bundle.rank());
      for (int i = 0; i < count; ++i) {
        if (bundle.sv[i] <= 0.0) break;
        Entry e;
        e.strength = bundle.sv[i];
        e.direction = VectorXd::Zero(n);
        // singular matrices have norm nu_i; unit-normalize for the basis
        e.direction.segment(wb.offset, wb.size()) =
            singular_matrix_vector(bundle, i) / bundle.sv[i];
        entries.push_back(std::move(e));
      }
      // biases: small enough for the dense-Hessian treatment
      const ParamBlock& bb = net.layout().bias(l);
      const int bias_count =
          static_cast<int>(std::ceil(opts.bias_fraction * double(bb.size())));
      if (bias_count > 0) {
        std::vector<Eigen::Index> bias_idx;
        for (std::ptrdiff_t i = 0; i < bb.size(); ++i) bias_idx.push_back(bb.offset + i);
        hessian_entries(net, task1, opts.weight_decay, bias_idx, bias_count, opts.seed, entries);
      }
    }
  }

  if (entries.empty()) throw ConfigError("conservation basis is empty (no directions selected)");
  std::stable_sort(entries.begin(), entries.end(),
                   [](const Entry& a, const Entry& b) { return a.strength > b.strength; });

  ConservationBasis basis;
  basis.method = opts.method == BasisMethod::Hessian ? "hessian" : "singular";
  basis.anchor = net.params();
  basis.strengths.resize(static_cast<Eigen::Index>(entries.size()));
  basis.directions.resize(static_cast<Eigen::Index>(entries.size()), n);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    basis.strengths[static_cast<Eigen::Index>(i)] = entries[i].strength;
    basis.directions.row(static_cast<Eigen::Index>(i)) = entries[i].direction;
  }
  return basis;
}

namespace {

std::vector<int> present_classes(const Dataset& ds) {
  std::set<int> seen;
  for (Eigen::Index i = 0; i < ds.labels.size(); ++i) seen.insert(ds.labels[i]);
  return {seen.begin(), seen.end()};
}

double within_task_accuracy(const Network& net, const Dataset& ds,
                            const std::vector<int>& classes) {
  const MatrixXd probs = net.forward_batch(ds.inputs);
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    int best = classes.front();
    for (int c : classes)
      if (probs(i, c) > probs(i, best)) best = c;
    if (best == ds.labels[i]) ++hits;
  }
  return double(hits) / double(probs.rows());
}

}  // namespace

TwoTaskResult two_task_run(const Network& net, const Dataset& task2_train, const Dataset& eval1,
                           const Dataset& eval2, const ConservationBasis* basis,
                           const TwoTaskConfig& config) {
  const bool needs_basis = config.method != CfMethod::None;
  if (needs_basis && !basis) throw std::invalid_argument("method needs a conservation basis");

  TrainConfig tc;
  tc.schedule = ConstantSchedule{config.task1_final_lr * config.lr_fraction};
  tc.momentum = config.momentum;
  tc.weight_decay = config.weight_decay;
  tc.batch_size = config.batch_size;
  tc.epochs = config.epochs;
  tc.seed = config.seed;
  tc.record_stride = 0;
  tc.trainable_layers = config.trainable_layers;

  TwoTaskResult result{{}, 0, net, net, config.method};
  const std::vector<int> classes1 = present_classes(eval1);
  const std::vector<int> classes2 = present_classes(eval2);

  Network best = net;
  double best_sum = -1.0;
  int best_epoch = 0;

  TrainHooks hooks;
  if (config.method == CfMethod::HessLoss || config.method == CfMethod::SvLoss) {
    hooks.grad_extra = [basis, lambda = config.lambda_cf](const VectorXd& w, VectorXd& grad) {
      grad += cf_penalty(w, *basis, lambda).second;
    };
  } else if (config.method == CfMethod::HessGrad || config.method == CfMethod::SvGrad) {
    hooks.velocity_transform = [basis, gamma = config.gamma](VectorXd& v) {
      v = project_velocity(v, *basis, gamma);
    };
  }
  hooks.on_epoch = [&](int epoch, const Network& current) {
    TwoTaskEpoch e;
    e.epoch = epoch;
    e.acc_task1 = accuracy(current, eval1.inputs, eval1.labels);
    e.acc_task2 = accuracy(current, eval2.inputs, eval2.labels);
    e.within_task1 = within_task_accuracy(current, eval1, classes1);
    e.within_task2 = within_task_accuracy(current, eval2, classes2);
    result.epochs.push_back(e);
    if (e.sum() > best_sum) {
      best_sum = e.sum();
      best = current;
      best_epoch = epoch;
    }
  };

  TrainResult trained = train(net, task2_train, nullptr, tc, &hooks);
  result.final_net = trained.net;
  result.selected_net = best;
  result.selected = best_epoch;
  return result;
}

void save_two_task_csv(const TwoTaskResult& result, const TwoTaskConfig& config,
                       const std::string& path) {
  CsvWriter csv(path);
  csv.header({"epoch", "acc_task1", "acc_task2", "sum", "within_task1", "within_task2", "method",
              "strength"});
  const double strength = (config.method == CfMethod::HessGrad || config.method == CfMethod::SvGrad)
                              ? config.gamma
                              : config.lambda_cf;
  for (const TwoTaskEpoch& e : result.epochs) {
    std::vector<double> row{double(e.epoch), e.acc_task1, e.acc_task2, e.sum(),
                            e.within_task1, e.within_task2};
    std::string line;
    for (double v : row) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      line += buf;
      line += ',';
    }
    line += to_string(result.method) + ',' + std::to_string(strength);
    csv.row_raw(line);
  }
  csv.flush();
}

}  // namespace netspectra
