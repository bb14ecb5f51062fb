#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "netspectra/continual.hpp"
#include "netspectra/spectra.hpp"

using namespace netspectra;

namespace {

ConservationBasis simple_basis(int n, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = gauss(rng);
  MatrixXd q = Eigen::HouseholderQR<MatrixXd>(a).householderQ();
  ConservationBasis basis;
  basis.directions = q.topRows(k);
  basis.strengths = VectorXd::LinSpaced(k, double(k), 1.0);
  basis.anchor = VectorXd::Zero(n);
  basis.method = "hessian";
  return basis;
}

}  // namespace

TEST_CASE("cf penalty is an anchored quadratic form") {
  ConservationBasis basis = simple_basis(12, 3, 701);
  basis.anchor = VectorXd::Constant(12, 0.3);

  auto [at_anchor, grad_anchor] = cf_penalty(basis.anchor, basis, 5.0);
  CHECK(at_anchor == 0.0);
  CHECK(grad_anchor.cwiseAbs().maxCoeff() == 0.0);

  SUBCASE("hand-evaluated single direction") {
    ConservationBasis one;
    one.directions = MatrixXd::Zero(1, 4);
    one.directions(0, 1) = 1.0;
    one.strengths = VectorXd::Constant(1, 2.0);
    one.anchor = VectorXd::Zero(4);
    one.method = "hessian";
    VectorXd w = VectorXd::Zero(4);
    w[1] = 3.0;  // projection offset 3, strength 2, lambda 1
    auto [value, grad] = cf_penalty(w, one, 1.0);
    CHECK(value == doctest::Approx(18.0));
    CHECK(grad.norm() == doctest::Approx(12.0));
    CHECK(grad[1] == doctest::Approx(12.0));
  }

  SUBCASE("gradient matches finite differences") {
    std::mt19937_64 rng(702);
    std::normal_distribution<double> gauss;
    VectorXd w(12);
    for (int i = 0; i < 12; ++i) w[i] = gauss(rng);
    auto [value, grad] = cf_penalty(w, basis, 3.0);
    VectorXd fd(12);
    const double step = 1e-6;
    for (int i = 0; i < 12; ++i) {
      VectorXd plus = w, minus = w;
      plus[i] += step;
      minus[i] -= step;
      fd[i] = (cf_penalty(plus, basis, 3.0).first - cf_penalty(minus, basis, 3.0).first) /
              (2.0 * step);
    }
    CHECK((grad - fd).cwiseAbs().maxCoeff() <= 1e-6 * std::max(1.0, fd.cwiseAbs().maxCoeff()));
  }

  SUBCASE("sign flips of directions change nothing") {
    std::mt19937_64 rng(703);
    std::normal_distribution<double> gauss;
    VectorXd w(12);
    for (int i = 0; i < 12; ++i) w[i] = gauss(rng);
    ConservationBasis flipped = basis;
    flipped.directions.row(1) = -flipped.directions.row(1);
    CHECK(cf_penalty(w, basis, 2.0).first ==
          doctest::Approx(cf_penalty(w, flipped, 2.0).first).epsilon(1e-12));
  }
}

TEST_CASE("penalty equals the scaled quadratic model on a full eigenbasis") {
  MatrixXd d = VectorXd{{4.0, 2.0, 1.0}}.asDiagonal();
  EigenBasis eb = eigh(d);
  ConservationBasis basis;
  basis.directions = eb.vectors;
  basis.strengths = eb.values;
  basis.anchor = VectorXd::Constant(3, 0.5);
  basis.method = "hessian";

  QuadraticModel model{0.0, basis.anchor, eb, 0.0, 0.0, 1};
  VectorXd w(3);
  w << 1.0, -0.5, 2.0;
  const double lambda_cf = 7.0;
  CHECK(cf_penalty(w, basis, lambda_cf).first ==
        doctest::Approx(2.0 * lambda_cf * quadratic_loss_predict(model, w)).epsilon(1e-12));
}

TEST_CASE("velocity projection removes conserved components") {
  ConservationBasis basis = simple_basis(10, 4, 711);

  std::mt19937_64 rng(712);
  std::normal_distribution<double> gauss;
  VectorXd v(10);
  for (int i = 0; i < 10; ++i) v[i] = gauss(rng);

  CHECK(project_velocity(v, basis, 0.0) == v);

  SUBCASE("gamma one removes the leading direction exactly") {
    VectorXd projected = project_velocity(v, basis, 1.0);
    CHECK(std::abs(projected.dot(basis.directions.row(0))) <= 1e-14);
    // weaker directions are damped by their strength ratio
    for (int i = 1; i < basis.count(); ++i) {
      const double expect =
          (1.0 - basis.strengths[i] / basis.strengths[0]) * v.dot(basis.directions.row(i));
      CHECK(projected.dot(basis.directions.row(i)) == doctest::Approx(expect).epsilon(1e-12));
    }
  }

  SUBCASE("parallel velocity vanishes under a single direction") {
    ConservationBasis one;
    one.directions = basis.directions.topRows(1);
    one.strengths = VectorXd::Constant(1, 3.0);
    one.anchor = VectorXd::Zero(10);
    VectorXd parallel = 2.2 * basis.directions.row(0).transpose();
    CHECK(project_velocity(parallel, one, 1.0).cwiseAbs().maxCoeff() <= 1e-14);
  }

  SUBCASE("idempotent in the leading direction at gamma one") {
    VectorXd once = project_velocity(v, basis, 1.0);
    VectorXd twice = project_velocity(once, basis, 1.0);
    CHECK(std::abs(twice.dot(basis.directions.row(0))) <= 1e-14);
    CHECK(std::abs(once.dot(basis.directions.row(0))) <= 1e-14);
  }

  SUBCASE("zero leading strength is rejected") {
    ConservationBasis bad = basis;
    bad.strengths.setZero();
    CHECK_THROWS_AS(project_velocity(v, bad, 1.0), std::invalid_argument);
  }
  CHECK_THROWS_AS(project_velocity(v, basis, 1.5), std::invalid_argument);
}

TEST_CASE("singular conservation bases hold per-layer orthogonal directions") {
  auto tiny = testutil::TrainedTinyNet::make(721, 4, 8, 25, 8);
  BasisOptions opts;
  opts.method = BasisMethod::Singular;
  opts.budget = 3;
  opts.scope_layers = {1};  // 8 -> 4 output layer
  ConservationBasis basis = build_basis(tiny.net, tiny.data, opts);

  // 3 weight directions + ceil(0.2 * 4) = 1 bias direction
  CHECK(basis.count() == 4);
  CHECK(basis.anchor == tiny.net.params());
  for (int i = 0; i < basis.count(); ++i)
    CHECK(basis.directions.row(i).norm() == doctest::Approx(1.0).epsilon(1e-10));
  for (int i = 0; i < basis.count(); ++i)
    for (int j = i + 1; j < basis.count(); ++j)
      CHECK(std::abs(basis.directions.row(i).dot(basis.directions.row(j))) <= 1e-10);
  for (int i = 1; i < basis.count(); ++i)
    CHECK(basis.strengths[i] <= basis.strengths[i - 1]);
}

TEST_CASE("hessian conservation bases follow the magnitude ordering") {
  auto tiny = testutil::TrainedTinyNet::make(731, 3, 6, 20, 6);
  BasisOptions opts;
  opts.method = BasisMethod::Hessian;
  opts.budget = 5;
  ConservationBasis basis = build_basis(tiny.net, tiny.data, opts);
  CHECK(basis.count() == 5);
  for (int i = 1; i < 5; ++i) CHECK(basis.strengths[i] <= basis.strengths[i - 1]);
  CHECK((basis.strengths.array() >= 0.0).all());

  // strengths match the top dense-Hessian magnitudes
  EigenBasis dense = eigh(dense_hessian(tiny.net, tiny.data, 0.0), Ordering::Magnitude);
  for (int i = 0; i < 5; ++i)
    CHECK(basis.strengths[i] ==
          doctest::Approx(std::abs(dense.values[i])).epsilon(1e-9));
}

TEST_CASE("oversized budgets clip to the available rank") {
  auto tiny = testutil::TrainedTinyNet::make(741, 3, 6, 15, 5);
  BasisOptions opts;
  opts.method = BasisMethod::Singular;
  opts.budget = 999;  // beyond the 5x3 layer rank
  opts.scope_layers = {1};
  ConservationBasis basis = build_basis(tiny.net, tiny.data, opts);
  CHECK(basis.count() == 3 + 1);  // min(999, rank 3) + ceil(0.2 * 3 biases)
}

TEST_CASE("two-task run with method none is exactly the trainer") {
  Dataset blobs = synth_blobs(6, 8, 30, 8.0, 751);
  TaskSplit split = split_tasks(blobs, {0, 1, 2}, {3, 4, 5});
  Network net = Network::glorot({8, 10, 6}, InitMode::Uniform, 752);

  TwoTaskConfig cfg;
  cfg.method = CfMethod::None;
  cfg.epochs = 3;
  cfg.task1_final_lr = 1.0;
  cfg.lr_fraction = 0.05;
  cfg.batch_size = 8;
  cfg.seed = 753;
  TwoTaskResult result = two_task_run(net, split.task_b, split.task_a, split.task_b, nullptr, cfg);

  TrainConfig tc;
  tc.schedule = ConstantSchedule{0.05};
  tc.batch_size = 8;
  tc.epochs = 3;
  tc.seed = 753;
  TrainResult direct = train(net, split.task_b, nullptr, tc);
  CHECK(result.final_net.params() == direct.net.params());
  CHECK(result.epochs.size() == 3);
}

TEST_CASE("a full-space basis at gamma one freezes the network") {
  Dataset blobs = synth_blobs(4, 6, 20, 8.0, 761);
  TaskSplit split = split_tasks(blobs, {0, 1}, {2, 3});
  Network net = Network::glorot({6, 5, 4}, InitMode::Uniform, 762);
  const Eigen::Index n = net.params().size();

  ConservationBasis full;
  full.directions = MatrixXd::Identity(n, n);
  full.strengths = VectorXd::Ones(n);
  full.anchor = net.params();
  full.method = "hessian";

  TwoTaskConfig cfg;
  cfg.method = CfMethod::HessGrad;
  cfg.gamma = 1.0;
  cfg.epochs = 2;
  cfg.task1_final_lr = 1.0;
  cfg.lr_fraction = 0.1;
  cfg.batch_size = 8;
  TwoTaskResult result = two_task_run(net, split.task_b, split.task_a, split.task_b, &full, cfg);
  CHECK(result.final_net.params() == net.params());
  CHECK(result.epochs.front().acc_task1 ==
        doctest::Approx(accuracy(net, split.task_a.inputs, split.task_a.labels)));
  CHECK(result.epochs.back().acc_task2 ==
        doctest::Approx(accuracy(net, split.task_b.inputs, split.task_b.labels)));
}

TEST_CASE("loss methods protect task one on shared-feature blobs") {
  // pretrain on all classes, reinit the last layer, retrain it on task 1;
  // the narrow hidden layer forces both tasks through shared features
  const std::uint64_t seed = 42;
  Dataset blobs = synth_blobs(6, 12, 60, 4.8, seed);
  Dataset eval = synth_blobs(6, 12, 30, 4.8, seed + 1);
  TaskSplit split = split_tasks(blobs, {0, 1, 2}, {3, 4, 5});
  TaskSplit eval_split = split_tasks(eval, {0, 1, 2}, {3, 4, 5});

  Network net = Network::glorot({12, 6, 6}, InitMode::Uniform, seed + 2);
  TrainConfig pre;
  pre.schedule = ConstantSchedule{0.2};
  pre.batch_size = 32;
  pre.epochs = 100;
  pre.seed = seed + 3;
  net = train(net, blobs, nullptr, pre).net;
  glorot_reinit_layer(net, 1, InitMode::Uniform, seed + 4);
  TrainConfig task1 = pre;
  task1.seed = seed + 5;
  task1.trainable_layers = {1};
  net = train(net, split.task_a, nullptr, task1).net;
  REQUIRE(accuracy(net, split.task_a.inputs, split.task_a.labels) == 1.0);

  BasisOptions bopts;
  bopts.method = BasisMethod::Hessian;
  bopts.budget = 20;
  bopts.scope_layers = {1};
  ConservationBasis basis = build_basis(net, split.task_a, bopts);

  TwoTaskConfig cfg;
  cfg.method = CfMethod::HessLoss;
  cfg.lambda_cf = 100.0;
  cfg.epochs = 150;
  cfg.task1_final_lr = 0.2;
  cfg.lr_fraction = 0.01;
  cfg.batch_size = 8;
  cfg.weight_decay = 0.02;
  cfg.seed = seed + 6;
  cfg.trainable_layers = {1};
  TwoTaskResult guarded =
      two_task_run(net, split.task_b, eval_split.task_a, eval_split.task_b, &basis, cfg);

  cfg.method = CfMethod::None;
  TwoTaskResult naked =
      two_task_run(net, split.task_b, eval_split.task_a, eval_split.task_b, nullptr, cfg);

  const TwoTaskEpoch& g = guarded.epochs[static_cast<std::size_t>(guarded.selected)];
  CHECK(g.acc_task1 >= 0.6);
  CHECK(g.acc_task2 >= 0.6);
  CHECK(guarded.epochs.back().acc_task1 > naked.epochs.back().acc_task1 + 0.1);
}
