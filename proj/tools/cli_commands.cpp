#include "cli_commands.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "netspectra/io.hpp"
#include "netspectra/pca.hpp"
#include "netspectra/spectra.hpp"

namespace netspectra::cli {

using nlohmann::json;

int run_guarded(const std::function<void()>& body) {
  try {
    body();
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
}

namespace {

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

void require_inputs(const std::vector<std::pair<std::string, const std::string*>>& inputs) {
  std::string missing;
  for (const auto& [name, value] : inputs) {
    if (value->empty()) {
      if (!missing.empty()) missing += ", ";
      missing += name;
    }
  }
  if (!missing.empty()) throw ConfigError("missing required inputs: " + missing);
}

Dataset analysis_subset(const Dataset& full, int subset, std::uint64_t seed) {
  if (subset <= 0 || subset >= full.size()) return full;
  std::vector<int> idx(static_cast<std::size_t>(full.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, "hessian-subset"));
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(subset));
  return full.subset(idx);
}

void write_manifest(const std::string& path, const std::string& command, const RunConfig& cfg,
                    const std::vector<std::string>& outputs, json extra = {}) {
  json files = json::object();
  for (const std::string& out : outputs)
    files[std::filesystem::path(out).filename().string()] = sha256_file(out);
  json manifest = {{"command", command},
                   {"seed", cfg.seed},
                   {"config_sha256", sha256_hex(cfg.raw_text)},
                   {"config", cfg.raw_text},
                   {"outputs", files}};
  if (!extra.is_null()) manifest["result"] = extra;
  atomic_write(path, manifest.dump(2) + "\n");
}

}  // namespace

void cmd_train(const RunConfig& cfg) {
  auto [train_set, test_set] = load_dataset(cfg.dataset, cfg.seed);
  Network net = Network::glorot(cfg.dims, InitMode::Uniform, derive_seed(cfg.seed, "init"));
  TrainResult result = train(net, train_set, test_set ? &*test_set : nullptr, cfg.train);

  const std::string ckpt = join_path(cfg.out_dir, "checkpoint.ckpt");
  const std::string traj = join_path(cfg.out_dir, "trajectory.traj");
  const std::string metrics = join_path(cfg.out_dir, "metrics.csv");
  save_checkpoint(result.net, ckpt, cfg.seed,
                  result.trajectory.times.empty() ? 0 : result.trajectory.times.back());
  save_trajectory(result.trajectory, traj);
  save_metrics_csv(result.metrics, metrics);

  json summary;
  if (!result.metrics.empty()) {
    const EpochMetrics& last = result.metrics.back();
    summary = {{"epochs", cfg.train.epochs},
               {"train_loss", last.train_loss},
               {"train_acc", last.train_acc},
               {"test_acc", last.test_acc}};
    std::printf("train: epochs=%d train_loss=%.6f train_acc=%.4f test_acc=%.4f\n",
                cfg.train.epochs, last.train_loss, last.train_acc, last.test_acc);
  }
  write_manifest(join_path(cfg.out_dir, "manifest.json"), "train", cfg, {ckpt, traj, metrics},
                 summary);
}

void cmd_hessian(const RunConfig& cfg, const HessianArgs& args) {
  require_inputs({{"--checkpoint", &args.checkpoint}});
  Network net = load_checkpoint(args.checkpoint, &cfg.dims);
  auto [train_set, test_set] = load_dataset(cfg.dataset, cfg.seed);
  Dataset data = analysis_subset(train_set, cfg.analysis.subset, cfg.seed);

  EigenBasis basis;
  if (args.mode == "dense") {
    double asym = 0.0;
    MatrixXd h = dense_hessian(net, data, cfg.train.weight_decay, cfg.analysis.hessian_cap, &asym);
    basis = eigh(h, Ordering::Algebraic);
    std::printf("dense hessian: max asymmetry %.3e\n", asym);
  } else if (args.mode == "lanczos") {
    LanczosOptions opts;
    opts.k = args.k > 0 ? args.k : cfg.analysis.lanczos_k;
    opts.max_iters = cfg.analysis.lanczos_iters;
    opts.seed = derive_seed(cfg.seed, "lanczos");
    basis = lanczos_topk(hvp_oracle(net, data, cfg.train.weight_decay),
                         static_cast<int>(net.params().size()), opts);
    if (!basis.converged) std::fprintf(stderr, "warning: lanczos returned unconverged pairs\n");
  } else {
    throw ConfigError("hessian mode must be dense or lanczos");
  }

  const std::string out = args.out.empty() ? join_path(cfg.out_dir, "hessian.eig") : args.out;
  save_eigenbasis(basis, out);
  save_eigenvalues_csv(basis, out + ".csv");

  std::printf("eigenbasis: n=%d k=%d top-5:", basis.dim(), basis.count());
  for (int i = 0; i < std::min(5, basis.count()); ++i) std::printf(" %.6g", basis.values[i]);
  std::printf("\n");
}

static void analyze_forget(const RunConfig& cfg, const AnalyzeArgs& args,
                           const std::string& out_dir);

void cmd_analyze(const RunConfig& cfg, const AnalyzeArgs& args) {
  const std::string out_dir = args.out_dir.empty() ? cfg.out_dir : args.out_dir;

  auto eval_data = [&]() {
    auto [train_set, test_set] = load_dataset(cfg.dataset, cfg.seed);
    return analysis_subset(train_set, cfg.analysis.subset, cfg.seed);
  };
  auto checkpoint_net = [&]() {
    require_inputs({{"--checkpoint", &args.checkpoint}});
    return load_checkpoint(args.checkpoint);
  };
  auto basis_of = [&](const std::string& path, const char* flag) {
    if (path.empty()) throw ConfigError(std::string("missing required inputs: ") + flag);
    return load_eigenbasis(path);
  };

  if (args.kind == "pca") {
    require_inputs({{"--trajectory", &args.trajectory}});
    Trajectory traj = load_trajectory(args.trajectory);
    const bool velocities = args.source == "velocities";
    PcaResult pca = pca_of(velocities ? traj.velocity_matrix() : traj.weight_matrix(),
                           velocities ? PcaSource::Velocities : PcaSource::Weights);
    CsvWriter variances(join_path(out_dir, "pca_variances.csv"));
    variances.comment("analysis=pca source=" + args.source);
    variances.header({"index", "variance"});
    for (int i = 0; i < pca.count(); ++i) variances.row({double(i), pca.variances[i]});
    variances.flush();

    const int comp = std::min(cfg.analysis.component, pca.count() - 1);
    VectorXd theta = project(velocities ? traj.velocity_matrix() : traj.weight_matrix(),
                             pca.components.row(comp));
    CsvWriter series(join_path(out_dir, "pca_theta.csv"));
    series.comment("analysis=pca-projection component=" + std::to_string(comp));
    series.header({"t", "theta"});
    for (Eigen::Index i = 0; i < theta.size(); ++i)
      series.row({double(traj.times[static_cast<std::size_t>(i)]), theta[i]});
    series.flush();

    save_eigenbasis(pca.as_basis(), join_path(out_dir, "pca_basis.eig"));
    std::printf("pca: %d components, top variance %.6g\n", pca.count(),
                pca.count() ? pca.variances[0] : 0.0);
    return;
  }

  if (args.kind == "svd") {
    Network net = checkpoint_net();
    if (args.layer < 0) throw ConfigError("missing required inputs: --layer");
    SvdBundle bundle = bulk_analysis(MatrixXd(net.weight(args.layer)), cfg.analysis.mp_estimator);
    VectorXd mapped = mapped_spectrum(bundle);
    CsvWriter csv(join_path(out_dir, "svd.csv"));
    csv.comment("analysis=svd layer=" + std::to_string(args.layer) +
                " checkpoint=" + sha256_file(args.checkpoint));
    csv.comment("sigma2_mp=" + std::to_string(bundle.sigma2_mp) +
                " lambda_minus=" + std::to_string(bundle.lambda_minus) +
                " lambda_plus=" + std::to_string(bundle.lambda_plus) +
                " n_out=" + std::to_string(bundle.n_out));
    csv.header({"index", "nu", "lambda", "in_bulk"});
    for (int i = 0; i < bundle.m(); ++i)
      csv.row({double(i), bundle.sv[i], mapped[i],
               mapped[i] <= bundle.lambda_plus ? 1.0 : 0.0});
    csv.flush();

    // unit singular directions persisted for overlap analyses
    EigenBasis directions;
    directions.values = bundle.sv;
    directions.vectors.resize(bundle.m(), bundle.orig_rows * bundle.orig_cols);
    for (int i = 0; i < bundle.m(); ++i) {
      VectorXd piece = singular_matrix_vector(bundle, i);
      directions.vectors.row(i) = bundle.sv[i] > 0.0 ? piece / bundle.sv[i] : piece;
    }
    directions.source = BasisSource::Svd;
    directions.ordering = Ordering::Magnitude;
    save_eigenbasis(directions, join_path(out_dir, "svd_basis.eig"));
    std::printf("svd: layer=%d rank=%d n_out=%d bulk=[%.6g, %.6g]\n", args.layer, bundle.m(),
                bundle.n_out, bundle.lambda_minus, bundle.lambda_plus);
    return;
  }

  if (args.kind == "overlap") {
    EigenBasis a = basis_of(args.basis_a, "--basis-a");
    EigenBasis b = basis_of(args.basis_b, "--basis-b");
    OverlapMatrix m = overlap(a.vectors, b.vectors, false, to_string(a.source), to_string(b.source));
    CsvWriter csv(join_path(out_dir, "overlap.csv"));
    csv.comment("analysis=overlap rows=" + m.row_tag + " cols=" + m.col_tag);
    std::vector<std::string> header{"row"};
    for (int j = 0; j < m.entries.cols(); ++j) header.push_back("c" + std::to_string(j));
    csv.header(header);
    for (Eigen::Index i = 0; i < m.entries.rows(); ++i) {
      std::vector<double> row{double(i)};
      for (Eigen::Index j = 0; j < m.entries.cols(); ++j) row.push_back(m.entries(i, j));
      csv.row(row);
    }
    csv.flush();
    std::printf("overlap: %ldx%ld max %.6g\n", long(m.entries.rows()), long(m.entries.cols()),
                m.entries.maxCoeff());
    return;
  }

  if (args.kind == "weight-product") {
    Network net = checkpoint_net();
    EigenBasis basis = basis_of(args.basis_a, "--basis-a");
    VectorXd wp = weight_product(basis, net.params());
    CsvWriter csv(join_path(out_dir, "weight_product.csv"));
    csv.comment("analysis=weight-product ordering=" + to_string(basis.ordering) +
                " checkpoint=" + sha256_file(args.checkpoint));
    csv.header({"index", "eigenvalue", "product"});
    for (int i = 0; i < basis.count(); ++i) csv.row({double(i), basis.values[i], wp[i]});
    csv.flush();
    std::printf("weight-product: %d entries, parseval %.6f\n", basis.count(), wp.squaredNorm());
    return;
  }

  if (args.kind == "add-acc") {
    Network net = checkpoint_net();
    EigenBasis basis = basis_of(args.basis_a, "--basis-a");
    const Ordering ordering = ordering_from_string(args.ordering);
    Dataset data = eval_data();
    std::ptrdiff_t begin = 0, end = -1;
    if (args.layer >= 0) {
      auto span = net.layout().layer_span(args.layer);
      begin = span.first;
      end = span.second;
    }
    AdditionCurve curve = add_eigvec_curve(net, basis, ordering, data, begin, end,
                                           cfg.train.weight_decay);
    if (!curve.complete)
      std::fprintf(stderr, "warning: basis does not span the block; curve truncated\n");
    CsvWriter csv(join_path(out_dir, "add_acc.csv"));
    csv.comment("analysis=add-acc ordering=" + args.ordering +
                " checkpoint=" + sha256_file(args.checkpoint));
    csv.header({"i", "accuracy", "loss"});
    for (std::size_t i = 0; i < curve.index.size(); ++i)
      csv.row({double(curve.index[i]), curve.accuracy[i], curve.loss[i]});
    csv.flush();
    std::printf("add-acc: endpoint accuracy %.4f\n", curve.accuracy.back());
    return;
  }

  if (args.kind == "slice") {
    Network net = checkpoint_net();
    EigenBasis basis = basis_of(args.basis_a, "--basis-a");
    if (args.index < 0 || args.index >= basis.count())
      throw ConfigError("slice index out of basis range");
    Dataset data = eval_data();
    LossSlice slice = loss_slice_default(net, data, basis.vectors.row(args.index),
                                         cfg.train.weight_decay);
    CsvWriter csv(join_path(out_dir, "slice.csv"));
    csv.comment("analysis=slice index=" + std::to_string(args.index) +
                " eigenvalue=" + std::to_string(basis.values[args.index]) +
                " checkpoint=" + sha256_file(args.checkpoint));
    csv.header({"alpha", "loss", "accuracy", "quadratic"});
    for (const SlicePoint& p : slice.points) csv.row({p.alpha, p.loss, p.accuracy, p.quadratic});
    csv.flush();
    std::printf("slice: curvature %.6g at index %d\n", slice.curvature, args.index);
    return;
  }

  if (args.kind == "scaling") {
    Network net = checkpoint_net();
    Dataset data = eval_data();
    std::vector<double> alphas;
    for (int i = 0; i < cfg.analysis.scaling_points; ++i)
      alphas.push_back(1.0 + (cfg.analysis.scaling_max - 1.0) * i /
                                 std::max(1, cfg.analysis.scaling_points - 1));
    auto table = loss_scaling(net, data, alphas, args.layer, cfg.train.weight_decay);
    CsvWriter csv(join_path(out_dir, "scaling.csv"));
    csv.comment("analysis=scaling scope=" +
                (args.layer == kScopeWholeNet ? std::string("whole-net")
                                              : "layer-" + std::to_string(args.layer)) +
                " checkpoint=" + sha256_file(args.checkpoint));
    csv.header({"alpha", "loss"});
    for (const ScalingPoint& p : table) csv.row({p.alpha, p.loss});
    csv.flush();
    std::printf("scaling: loss at alpha=1 is %.6g, at max %.6g\n", table.front().loss,
                table.back().loss);
    return;
  }

  if (args.kind == "concentration") {
    Network net = checkpoint_net();
    EigenBasis basis = basis_of(args.basis_a, "--basis-a");
    CsvWriter csv(join_path(out_dir, "concentration.csv"));
    csv.comment("analysis=concentration checkpoint=" + sha256_file(args.checkpoint));
    std::vector<std::string> header{"index", "eigenvalue"};
    for (int l = 0; l < net.layout().layer_count(); ++l)
      header.push_back("layer" + std::to_string(l));
    csv.header(header);
    for (int i = 0; i < basis.count(); ++i) {
      VectorXd fractions = layer_concentration(basis.vectors.row(i), net.layout());
      std::vector<double> row{double(i), basis.values[i]};
      for (Eigen::Index l = 0; l < fractions.size(); ++l) row.push_back(fractions[l]);
      csv.row(row);
    }
    csv.flush();
    std::printf("concentration: %d vectors over %d layers\n", basis.count(),
                net.layout().layer_count());
    return;
  }

  if (args.kind == "ipr") {
    EigenBasis basis = basis_of(args.basis_a, "--basis-a");
    CsvWriter csv(join_path(out_dir, "ipr.csv"));
    csv.comment("analysis=ipr source=" + to_string(basis.source));
    csv.header({"index", "eigenvalue", "ipr"});
    for (int i = 0; i < basis.count(); ++i)
      csv.row({double(i), basis.values[i], ipr(basis.vectors.row(i))});
    csv.flush();
    std::printf("ipr: %d vectors\n", basis.count());
    return;
  }

  if (args.kind == "porter-thomas") {
    EigenBasis basis = basis_of(args.basis_a, "--basis-a");
    CsvWriter csv(join_path(out_dir, "porter_thomas.csv"));
    csv.comment("analysis=porter-thomas source=" + to_string(basis.source));
    csv.header({"index", "eigenvalue", "pvalue"});
    for (int i = 0; i < basis.count(); ++i)
      csv.row({double(i), basis.values[i], porter_thomas_pvalue(basis.vectors.row(i))});
    csv.flush();
    std::printf("porter-thomas: %d vectors\n", basis.count());
    return;
  }

  if (args.kind == "density") {
    EigenBasis basis = basis_of(args.basis_a, "--basis-a");
    DensityTable table = spectral_density(basis.values, cfg.analysis.density_sigma,
                                          cfg.analysis.density_points);
    CsvWriter csv(join_path(out_dir, "density.csv"));
    csv.comment("analysis=density sigma=" + std::to_string(cfg.analysis.density_sigma));
    csv.header({"lambda", "density"});
    for (Eigen::Index i = 0; i < table.grid.size(); ++i)
      csv.row({table.grid[i], table.density[i]});
    csv.flush();
    std::printf("density: %ld grid points\n", long(table.grid.size()));
    return;
  }

  if (args.kind == "drift") {
    require_inputs({{"--trajectory", &args.trajectory}});
    Trajectory traj = load_trajectory(args.trajectory);
    const bool velocities = args.source == "velocities";
    MatrixXd snaps = velocities ? traj.velocity_matrix() : traj.weight_matrix();
    PcaResult pca = pca_of(snaps, velocities ? PcaSource::Velocities : PcaSource::Weights);
    const int comp = std::min(cfg.analysis.component, pca.count() - 1);
    VectorXd theta = project(snaps, pca.components.row(comp));
    VectorXd times(theta.size());
    for (Eigen::Index i = 0; i < times.size(); ++i)
      times[i] = double(traj.times[static_cast<std::size_t>(i)]);
    DriftFit fit = drift_fit(times, theta, cfg.analysis.t0);
    if (fit.degenerate) std::fprintf(stderr, "warning: constant series, R^2 undefined\n");

    json out = {{"analysis", "drift"},
                {"component", comp},
                {"slope", fit.slope},
                {"intercept", fit.intercept},
                {"t0", fit.t0},
                {"residual_rms", fit.residual_rms},
                {"r_squared", fit.r_squared},
                {"degenerate", fit.degenerate},
                {"variance", pca.count() ? pca.variances[comp] : 0.0},
                {"faulhaber_variance", linear_drift_variance(fit.slope, theta.size())}};
    atomic_write(join_path(out_dir, "drift.json"), out.dump(2) + "\n");

    CsvWriter csv(join_path(out_dir, "drift_theta.csv"));
    csv.comment("analysis=drift component=" + std::to_string(comp));
    csv.header({"t", "theta"});
    for (Eigen::Index i = 0; i < theta.size(); ++i) csv.row({times[i], theta[i]});
    csv.flush();
    std::printf("drift: slope %.6g r2 %.4f\n", fit.slope, fit.r_squared);
    return;
  }

  if (args.kind == "forget") {
    analyze_forget(cfg, args, out_dir);
    return;
  }

  throw ConfigError("unknown analysis kind '" + args.kind +
                    "' (expected pca, svd, overlap, weight-product, add-acc, slice, scaling, "
                    "concentration, ipr, porter-thomas, density, drift or forget)");
}

static void analyze_forget(const RunConfig& cfg, const AnalyzeArgs& args,
                           const std::string& out_dir) {
  const ForgetParams& fp = cfg.forget;
  if (fp.classes_a.empty() || fp.classes_b.empty())
    throw ConfigError("missing required inputs: forget.classes_a, forget.classes_b");

  auto [train_set, test_set] = load_dataset(cfg.dataset, cfg.seed);
  TaskSplit split = split_tasks(train_set, fp.classes_a, fp.classes_b);
  TaskSplit eval_split =
      test_set ? split_tasks(*test_set, fp.classes_a, fp.classes_b) : split;

  std::vector<int> scope = fp.scope_layers;
  ParamLayout layout(cfg.dims);
  if (scope.empty()) scope = {layout.layer_count() - 1};

  // pretrain on all classes, reinitialize the scoped layers, fit task 1
  Network net = Network::glorot(cfg.dims, InitMode::Uniform, derive_seed(cfg.seed, "init"));
  TrainConfig pre = cfg.train;
  if (fp.pretrain_epochs > 0) pre.epochs = fp.pretrain_epochs;
  pre.seed = derive_seed(cfg.seed, "forget-pretrain");
  net = train(net, train_set, nullptr, pre).net;
  for (int l : scope)
    glorot_reinit_layer(net, l, InitMode::Uniform, derive_seed(cfg.seed, "forget-reinit"));
  TrainConfig task1 = cfg.train;
  if (fp.task1_epochs > 0) task1.epochs = fp.task1_epochs;
  task1.seed = derive_seed(cfg.seed, "forget-task1");
  task1.trainable_layers = scope;
  net = train(net, split.task_a, nullptr, task1).net;
  const double task1_acc = accuracy(net, split.task_a.inputs, split.task_a.labels);
  std::printf("forget: task-1 training accuracy %.4f\n", task1_acc);

  ConservationBasis basis;
  const bool needs_basis = fp.method != CfMethod::None;
  if (needs_basis) {
    BasisOptions opts;
    opts.method = (fp.method == CfMethod::HessLoss || fp.method == CfMethod::HessGrad)
                      ? BasisMethod::Hessian
                      : BasisMethod::Singular;
    if (opts.method == BasisMethod::Hessian) {
      std::ptrdiff_t block = 0;
      for (int l : scope) {
        auto [begin, end] = layout.layer_span(l);
        block += end - begin;
      }
      opts.budget = fp.hess_budget > 0 ? fp.hess_budget
                                       : static_cast<int>(std::ceil(0.2 * double(block)));
    } else {
      opts.budget = fp.sv_budget;
    }
    opts.bias_fraction = fp.bias_fraction;
    opts.scope_layers = scope;
    opts.weight_decay = cfg.train.weight_decay;
    opts.seed = derive_seed(cfg.seed, "forget-basis");
    basis = build_basis(net, split.task_a, opts);
  }

  TwoTaskConfig run_cfg;
  run_cfg.method = fp.method;
  run_cfg.lambda_cf = fp.lambda_cf;
  run_cfg.gamma = fp.gamma;
  run_cfg.epochs = fp.epochs;
  run_cfg.task1_final_lr = lr_at(cfg.train.schedule, std::max(0, task1.epochs - 1));
  run_cfg.lr_fraction = fp.lr_fraction;
  run_cfg.batch_size = fp.batch_size;
  run_cfg.weight_decay = fp.weight_decay;
  run_cfg.seed = derive_seed(cfg.seed, "forget-task2");
  run_cfg.trainable_layers = scope;

  TwoTaskResult result = two_task_run(net, split.task_b, eval_split.task_a, eval_split.task_b,
                                      needs_basis ? &basis : nullptr, run_cfg);

  const std::string csv_path =
      join_path(out_dir, "forget_" + to_string(fp.method) + ".csv");
  save_two_task_csv(result, run_cfg, csv_path);

  const TwoTaskEpoch& sel = result.epochs[static_cast<std::size_t>(result.selected)];
  json summary = {{"method", to_string(fp.method)},
                  {"task1_training_accuracy", task1_acc},
                  {"selected_epoch", result.selected},
                  {"acc_task1", sel.acc_task1},
                  {"acc_task2", sel.acc_task2},
                  {"sum", sel.sum()}};
  write_manifest(join_path(out_dir, "forget_manifest.json"), "analyze forget", cfg, {csv_path},
                 summary);
  std::printf("forget[%s]: selected epoch %d acc1 %.4f acc2 %.4f sum %.4f\n",
              to_string(fp.method).c_str(), result.selected, sel.acc_task1, sel.acc_task2,
              sel.sum());
}

}  // namespace netspectra::cli
