#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "netspectra/continual.hpp"
#include "netspectra/pca.hpp"
#include "netspectra/rmt.hpp"
#include "netspectra/spectra.hpp"
#include "netspectra/stats.hpp"
#include "netspectra/trainer.hpp"

namespace py = pybind11;
using namespace netspectra;

PYBIND11_MODULE(_netspectra, m) {
  m.doc() = "Dense-network training and spectral analysis toolkit";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<IoError>(m, "IoError");
  py::register_exception<NumericalError>(m, "NumericalError");

  // data
  py::class_<Dataset>(m, "Dataset")
      .def(py::init([](MatrixXd inputs, VectorXi labels, int class_count) {
             Dataset ds{std::move(inputs), std::move(labels), class_count};
             validate(ds);
             return ds;
           }),
           py::arg("inputs"), py::arg("labels"), py::arg("class_count"))
      .def_readonly("inputs", &Dataset::inputs)
      .def_readonly("labels", &Dataset::labels)
      .def_readonly("class_count", &Dataset::class_count)
      .def("__len__", [](const Dataset& ds) { return ds.size(); });
  m.def("synth_blobs", &synth_blobs, py::arg("class_count"), py::arg("dim"),
        py::arg("per_class"), py::arg("separation"), py::arg("seed"));
  m.def("load_idx", &load_idx, py::arg("image_path"), py::arg("label_path"));
  m.def("epoch_batches", &epoch_batches, py::arg("n_samples"), py::arg("batch_size"),
        py::arg("seed"), py::arg("epoch_index"));
  py::class_<TaskSplit>(m, "TaskSplit")
      .def_readonly("task_a", &TaskSplit::task_a)
      .def_readonly("task_b", &TaskSplit::task_b);
  m.def("split_tasks", &split_tasks, py::arg("dataset"), py::arg("classes_a"),
        py::arg("classes_b"));

  // network core
  py::enum_<InitMode>(m, "InitMode")
      .value("uniform", InitMode::Uniform)
      .value("normal", InitMode::Normal);
  py::class_<Network>(m, "Network")
      .def(py::init<std::vector<int>>(), py::arg("dims"))
      .def_static("glorot", &Network::glorot, py::arg("dims"), py::arg("mode"), py::arg("seed"))
      .def_property(
          "params", [](const Network& net) { return net.params(); },
          [](Network& net, VectorXd p) { net.set_params(std::move(p)); })
      .def_property_readonly("dims", [](const Network& net) { return net.layout().dims(); })
      .def("forward", &Network::forward, py::arg("input"))
      .def("forward_batch", &Network::forward_batch, py::arg("inputs"));
  m.def("sample_loss",
        [](const VectorXd& probs, int label) { return sample_loss(probs, label); },
        py::arg("probabilities"), py::arg("label"));
  m.def("batch_loss", &batch_loss, py::arg("net"), py::arg("inputs"), py::arg("labels"),
        py::arg("weight_decay") = 0.0);
  m.def("gradient", &gradient, py::arg("net"), py::arg("inputs"), py::arg("labels"),
        py::arg("weight_decay") = 0.0);
  m.def("accuracy", &accuracy, py::arg("net"), py::arg("inputs"), py::arg("labels"));

  // trainer
  py::class_<ConstantSchedule>(m, "ConstantSchedule").def(py::init<double>(), py::arg("lr"));
  py::class_<GeometricSchedule>(m, "GeometricSchedule")
      .def(py::init<double, double>(), py::arg("lr0"), py::arg("decay"));
  py::class_<PiecewiseSchedule>(m, "PiecewiseSchedule")
      .def(py::init<std::vector<std::pair<int, double>>>(), py::arg("points"));
  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("schedule", &TrainConfig::schedule)
      .def_readwrite("momentum", &TrainConfig::momentum)
      .def_readwrite("weight_decay", &TrainConfig::weight_decay)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("record_stride", &TrainConfig::record_stride)
      .def_readwrite("trainable_layers", &TrainConfig::trainable_layers);
  m.def("lr_at", &lr_at, py::arg("schedule"), py::arg("epoch"));
  m.def("effective_lr", &effective_lr, py::arg("eta"), py::arg("beta"), py::arg("batch_size"));
  py::class_<EpochMetrics>(m, "EpochMetrics")
      .def_readonly("epoch", &EpochMetrics::epoch)
      .def_readonly("lr", &EpochMetrics::lr)
      .def_readonly("train_loss", &EpochMetrics::train_loss)
      .def_readonly("train_acc", &EpochMetrics::train_acc)
      .def_readonly("test_acc", &EpochMetrics::test_acc);
  py::class_<Trajectory>(m, "Trajectory")
      .def_readonly("times", &Trajectory::times)
      .def("weight_matrix", &Trajectory::weight_matrix)
      .def("velocity_matrix", &Trajectory::velocity_matrix);
  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("net", &TrainResult::net)
      .def_readonly("trajectory", &TrainResult::trajectory)
      .def_readonly("metrics", &TrainResult::metrics);
  m.def(
      "train",
      [](const Network& net, const Dataset& train_data, const Dataset* test_data,
         const TrainConfig& cfg) { return train(net, train_data, test_data, cfg); },
      py::arg("net"), py::arg("train_data"), py::arg("test_data") = nullptr, py::arg("config"));
  m.def("save_checkpoint", &save_checkpoint, py::arg("net"), py::arg("path"),
        py::arg("seed") = 0, py::arg("step") = 0);
  m.def("load_checkpoint",
        [](const std::string& path) { return load_checkpoint(path); }, py::arg("path"));

  // hessian
  py::enum_<Ordering>(m, "Ordering")
      .value("algebraic", Ordering::Algebraic)
      .value("magnitude", Ordering::Magnitude);
  py::class_<EigenBasis>(m, "EigenBasis")
      .def_readonly("values", &EigenBasis::values)
      .def_readonly("vectors", &EigenBasis::vectors)
      .def_readonly("residuals", &EigenBasis::residuals)
      .def_readonly("converged", &EigenBasis::converged)
      .def("reordered", &EigenBasis::reordered, py::arg("ordering"));
  m.def("hvp", &hvp, py::arg("net"), py::arg("inputs"), py::arg("labels"), py::arg("v"),
        py::arg("weight_decay") = 0.0);
  m.def(
      "dense_hessian",
      [](const Network& net, const Dataset& data, double weight_decay, int cap) {
        return dense_hessian(net, data, weight_decay, cap);
      },
      py::arg("net"), py::arg("data"), py::arg("weight_decay") = 0.0,
      py::arg("cap") = kDenseHessianCap);
  py::enum_<BasisSource>(m, "BasisSource")
      .value("hessian_dense", BasisSource::HessianDense)
      .value("hessian_lanczos", BasisSource::HessianLanczos)
      .value("pca_weights", BasisSource::PcaWeights)
      .value("pca_velocities", BasisSource::PcaVelocities)
      .value("svd", BasisSource::Svd)
      .value("other", BasisSource::Other);
  m.def("eigh", &eigh, py::arg("sym"), py::arg("ordering") = Ordering::Algebraic,
        py::arg("source") = BasisSource::HessianDense);
  m.def(
      "lanczos_topk",
      [](const Network& net, const Dataset& data, int k, double weight_decay, int max_iters,
         std::uint64_t seed) {
        LanczosOptions opts;
        opts.k = k;
        opts.max_iters = max_iters;
        opts.seed = seed;
        return lanczos_topk(hvp_oracle(net, data, weight_decay),
                            static_cast<int>(net.params().size()), opts);
      },
      py::arg("net"), py::arg("data"), py::arg("k"), py::arg("weight_decay") = 0.0,
      py::arg("max_iters") = 0, py::arg("seed") = 0);
  m.def("exp_decay_coordinate",
        [](double w0, double mu, double h, double eta, double lambda, double t) {
          return exp_decay_coordinate(w0, mu, h, eta, lambda, t);
        },
        py::arg("w0"), py::arg("mu"), py::arg("h"), py::arg("eta"), py::arg("lam"), py::arg("t"));
  m.def("decay_variance", &decay_variance, py::arg("w0"), py::arg("mu"), py::arg("h"),
        py::arg("eta"), py::arg("lam"), py::arg("time_steps"));
  m.def("drift_variance_combination", &drift_variance_combination, py::arg("coefficients"),
        py::arg("mode_variances"));

  // pca
  py::enum_<PcaSource>(m, "PcaSource")
      .value("weights", PcaSource::Weights)
      .value("velocities", PcaSource::Velocities);
  py::class_<PcaResult>(m, "PcaResult")
      .def_readonly("variances", &PcaResult::variances)
      .def_readonly("components", &PcaResult::components)
      .def_readonly("mean", &PcaResult::mean)
      .def("as_basis", &PcaResult::as_basis);
  m.def("pca_of", &pca_of, py::arg("snapshots"), py::arg("source") = PcaSource::Weights);
  m.def("project", &project, py::arg("snapshots"), py::arg("component"));
  py::class_<DriftFit>(m, "DriftFit")
      .def_readonly("slope", &DriftFit::slope)
      .def_readonly("intercept", &DriftFit::intercept)
      .def_readonly("residual_rms", &DriftFit::residual_rms)
      .def_readonly("r_squared", &DriftFit::r_squared)
      .def_readonly("degenerate", &DriftFit::degenerate);
  m.def("drift_fit", &drift_fit, py::arg("times"), py::arg("theta"), py::arg("t0") = 0.0);
  m.def("linear_drift_variance", &linear_drift_variance, py::arg("slope"), py::arg("samples"));
  m.def("hcross", &hcross, py::arg("batch_size"), py::arg("beta"), py::arg("eta"),
        py::arg("n_train"));
  m.def("pc_partial_reconstruction", &pc_partial_reconstruction, py::arg("w_final"),
        py::arg("pca"), py::arg("count"));

  // rmt
  py::class_<SvdBundle>(m, "SvdBundle")
      .def_readonly("sv", &SvdBundle::sv)
      .def_readonly("sigma2_mp", &SvdBundle::sigma2_mp)
      .def_readonly("lambda_minus", &SvdBundle::lambda_minus)
      .def_readonly("lambda_plus", &SvdBundle::lambda_plus)
      .def_readonly("n_out", &SvdBundle::n_out)
      .def("singular_matrix_vector",
           [](const SvdBundle& b, int i) { return singular_matrix_vector(b, i); },
           py::arg("i"))
      .def("mapped_spectrum", [](const SvdBundle& b) { return mapped_spectrum(b); });
  m.def("svd", &svd, py::arg("w"));
  m.def(
      "bulk_analysis",
      [](const MatrixXd& w) { return bulk_analysis(w); }, py::arg("w"));
  m.def("mp_bounds", &mp_bounds, py::arg("sigma2_mp"), py::arg("q"));
  m.def("mp_density", &mp_density, py::arg("lam"), py::arg("sigma2_mp"), py::arg("q"));
  m.def("mp_cdf", &mp_cdf, py::arg("lam"), py::arg("sigma2_mp"), py::arg("q"));
  m.def(
      "unfold_spacings",
      [](const VectorXd& values, int k) { return unfold_spacings(values, k); },
      py::arg("sorted_values"), py::arg("k_neighbors") = 10);
  m.def("wigner_pdf", &wigner_pdf, py::arg("s"));
  m.def("wigner_cdf", &wigner_cdf, py::arg("s"));

  // spectra
  m.def(
      "overlap",
      [](const MatrixXd& rows, const MatrixXd& cols, bool normalize_cols) {
        return overlap(rows, cols, normalize_cols).entries;
      },
      py::arg("rows"), py::arg("cols_as_rows"), py::arg("normalize_cols") = false);
  m.def("weight_product", &weight_product, py::arg("basis"), py::arg("w"));
  m.def(
      "layer_concentration",
      [](const VectorXd& h, const Network& net) {
        return layer_concentration(h, net.layout());
      },
      py::arg("h"), py::arg("net"));
  m.def("ipr", &ipr, py::arg("h"));
  m.def("porter_thomas_pvalue", &porter_thomas_pvalue, py::arg("h"));
  m.def(
      "spectral_density",
      [](const VectorXd& values, double sigma, int points) {
        DensityTable t = spectral_density(values, sigma, points);
        return std::make_pair(t.grid, t.density);
      },
      py::arg("eigenvalues"), py::arg("kernel_sigma") = 1.0, py::arg("grid_points") = 512);

  // continual learning
  py::class_<ConservationBasis>(m, "ConservationBasis")
      .def_readonly("directions", &ConservationBasis::directions)
      .def_readonly("strengths", &ConservationBasis::strengths)
      .def_readonly("anchor", &ConservationBasis::anchor)
      .def_readonly("method", &ConservationBasis::method);
  m.def("cf_penalty", &cf_penalty, py::arg("w"), py::arg("basis"), py::arg("lambda_cf"));
  m.def("project_velocity", &project_velocity, py::arg("v"), py::arg("basis"), py::arg("gamma"));
  py::enum_<BasisMethod>(m, "BasisMethod")
      .value("hessian", BasisMethod::Hessian)
      .value("singular", BasisMethod::Singular);
  m.def(
      "build_basis",
      [](const Network& net, const Dataset& task1, BasisMethod method, int budget,
         std::vector<int> scope_layers, double bias_fraction, double weight_decay) {
        BasisOptions opts;
        opts.method = method;
        opts.budget = budget;
        opts.scope_layers = std::move(scope_layers);
        opts.bias_fraction = bias_fraction;
        opts.weight_decay = weight_decay;
        return build_basis(net, task1, opts);
      },
      py::arg("net"), py::arg("task1"), py::arg("method"), py::arg("budget"),
      py::arg("scope_layers") = std::vector<int>{}, py::arg("bias_fraction") = 0.2,
      py::arg("weight_decay") = 0.0);
}
