#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "netspectra/pca.hpp"

using namespace netspectra;

namespace {

MatrixXd random_snapshots(int t, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  MatrixXd snaps(t, n);
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < n; ++j) snaps(i, j) = gauss(rng);
  return snaps;
}

}  // namespace

TEST_CASE("constant trajectories carry no variance") {
  MatrixXd snaps = MatrixXd::Constant(5, 8, 1.3);
  PcaResult result = pca_of(snaps);
  for (int i = 0; i < result.count(); ++i) CHECK(result.variances[i] == 0.0);
  CHECK_THROWS_AS(pca_of(MatrixXd::Zero(1, 4)), std::invalid_argument);
}

TEST_CASE("two snapshots give exactly one mode along the difference") {
  MatrixXd snaps(2, 6);
  snaps.row(0) = VectorXd::LinSpaced(6, 0.0, 1.0);
  snaps.row(1) = VectorXd::LinSpaced(6, 1.0, -0.5);
  PcaResult result = pca_of(snaps);
  REQUIRE(result.count() == 1);
  VectorXd diff = (snaps.row(1) - snaps.row(0)).normalized();
  CHECK(std::abs(result.components.row(0).dot(diff)) == doctest::Approx(1.0).epsilon(1e-12));
  // variance of a two-point series {a, b}: (b-a)^2 / 4
  const double spread = (snaps.row(1) - snaps.row(0)).norm();
  CHECK(result.variances[0] == doctest::Approx(spread * spread / 4.0).epsilon(1e-12));
}

TEST_CASE("gram route agrees with the direct covariance eigendecomposition") {
  const int t = 20, n = 50;
  MatrixXd snaps = random_snapshots(t, n, 211);
  PcaResult gram = pca_of(snaps);  // T < n: gram route

  // independent n x n oracle
  VectorXd mean = snaps.colwise().mean();
  MatrixXd centered = snaps.rowwise() - mean.transpose();
  MatrixXd cov = centered.transpose() * centered / double(t);
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(cov);

  REQUIRE(gram.count() == t - 1);  // centered rank
  for (int i = 0; i < gram.count(); ++i) {
    const double direct = solver.eigenvalues()[n - 1 - i];
    CHECK(gram.variances[i] == doctest::Approx(direct).epsilon(1e-8));
    const VectorXd dir = solver.eigenvectors().col(n - 1 - i);
    CHECK(std::abs(gram.components.row(i).dot(dir)) == doctest::Approx(1.0).epsilon(1e-8));
  }
  // orthonormal components
  MatrixXd gram_prod = gram.components * gram.components.transpose();
  CHECK((gram_prod - MatrixXd::Identity(gram.count(), gram.count())).cwiseAbs().maxCoeff() <=
        1e-8);
}

TEST_CASE("projections carry the component variance") {
  MatrixXd snaps = random_snapshots(40, 12, 221);
  PcaResult result = pca_of(snaps);
  for (int i = 0; i < 3; ++i) {
    VectorXd theta = project(snaps, result.components.row(i));
    const double mean = theta.mean();
    const double var = (theta.array() - mean).square().sum() / double(theta.size());
    CHECK(var == doctest::Approx(result.variances[i]).epsilon(1e-10));
  }

  // orthogonal direction: constant series
  MatrixXd line(3, 4);
  VectorXd p(4), q(4);
  p << 1, 0, 0, 0;
  q << 0, 1, 0, 0;
  for (int i = 0; i < 3; ++i) line.row(i) = (2.0 * i) * p + 5.0 * q;
  VectorXd theta_q = project(line, q);
  CHECK((theta_q.array() == 5.0).all());

  // linear trajectory: theta(t) = a t ||p||^2
  const double a = 0.7;
  MatrixXd drift(6, 4);
  for (int i = 0; i < 6; ++i) drift.row(i) = a * double(i) * p;
  VectorXd theta = project(drift, p);
  for (int i = 0; i < 6; ++i) CHECK(theta[i] == doctest::Approx(a * i).epsilon(1e-12));
}

TEST_CASE("full-basis projections satisfy parseval") {
  MatrixXd snaps = random_snapshots(30, 10, 231);  // T >= n: complete basis
  PcaResult result = pca_of(snaps);
  REQUIRE(result.count() == 10);
  for (int t = 0; t < snaps.rows(); ++t) {
    double sum = 0.0;
    for (int i = 0; i < result.count(); ++i) {
      const double theta = snaps.row(t).dot(result.components.row(i));
      sum += theta * theta;
    }
    CHECK(sum == doctest::Approx(snaps.row(t).squaredNorm()).epsilon(1e-10));
  }
}

TEST_CASE("component signs put the largest entry positive") {
  MatrixXd snaps = random_snapshots(25, 8, 241);
  PcaResult result = pca_of(snaps);
  for (int i = 0; i < result.count(); ++i) {
    Eigen::Index arg;
    result.components.row(i).cwiseAbs().maxCoeff(&arg);
    CHECK(result.components(i, arg) > 0.0);
  }
}

TEST_CASE("drift fit recovers planted lines") {
  VectorXd times = VectorXd::LinSpaced(50, 0, 49);
  VectorXd theta = 2.0 * (times.array() - 10.0) + 1.0;
  DriftFit fit = drift_fit(times, theta, 10.0);
  CHECK(fit.slope == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(fit.intercept == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(fit.residual_rms <= 1e-10);
  CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_FALSE(fit.degenerate);

  SUBCASE("white noise has no explanatory power") {
    std::mt19937_64 rng(251);
    std::normal_distribution<double> gauss;
    VectorXd noise(200), t2 = VectorXd::LinSpaced(200, 0, 199);
    for (int i = 0; i < 200; ++i) noise[i] = gauss(rng);
    DriftFit nf = drift_fit(t2, noise, 0.0);
    CHECK(nf.r_squared <= 0.05);
  }
  SUBCASE("constant series is flagged degenerate") {
    VectorXd flat = VectorXd::Constant(20, 3.0);
    VectorXd t2 = VectorXd::LinSpaced(20, 0, 19);
    DriftFit df = drift_fit(t2, flat, 0.0);
    CHECK(df.degenerate);
    CHECK(df.slope == 0.0);
    CHECK(std::isnan(df.r_squared));
  }
  SUBCASE("too few points after t0") {
    CHECK_THROWS_AS(drift_fit(times, theta, 48.0), std::invalid_argument);
  }
}

TEST_CASE("faulhaber variance matches direct variance of linear series") {
  CHECK(linear_drift_variance(3.7, 1) == 0.0);

  // a = 2, T = 5: series {0, 2, 4, 6, 8}
  VectorXd series(5);
  series << 0, 2, 4, 6, 8;
  const double mean = series.mean();
  const double direct = (series.array() - mean).square().sum() / 5.0;
  CHECK(direct == doctest::Approx(8.0));
  CHECK(linear_drift_variance(2.0, 5) == doctest::Approx(8.0).epsilon(1e-15));

  CHECK(linear_drift_variance(4.0, 5) == doctest::Approx(4.0 * 8.0).epsilon(1e-15));

  // random (a, T) against the direct computation
  std::mt19937_64 rng(261);
  std::uniform_real_distribution<double> ua(-3.0, 3.0);
  std::uniform_int_distribution<long> ut(1, 400);
  for (int trial = 0; trial < 50; ++trial) {
    const double a = ua(rng);
    const long t = ut(rng);
    VectorXd s(t);
    for (long i = 0; i < t; ++i) s[i] = a * double(i);
    const double m = s.mean();
    const double var = (s.array() - m).square().sum() / double(t);
    CHECK(std::abs(linear_drift_variance(a, t) - var) <=
          1e-12 * std::max(1.0, var));
  }
}

TEST_CASE("hcross evaluates the crossover formula") {
  CHECK(hcross(32, 0.0, 0.01, 60000) == doctest::Approx(0.16).epsilon(1e-12));
  CHECK(hcross(32, 0.999999, 0.01, 60000) <= 1e-6);
  CHECK(hcross(64, 0.0, 0.01, 60000) == doctest::Approx(0.32).epsilon(1e-12));
  CHECK_THROWS_AS(hcross(0, 0.0, 0.01, 100), std::invalid_argument);
}

TEST_CASE("scaling scatter recovers planted power laws") {
  const int k = 40;
  VectorXd h = VectorXd::LinSpaced(k, 1.0, 40.0).reverse();
  EigenBasis hb;
  hb.values = h;
  hb.vectors = MatrixXd::Identity(k, k);
  PcaResult pca;
  pca.components = MatrixXd::Identity(k, k);
  pca.mean = VectorXd::Zero(k);

  SUBCASE("quadratic") {
    pca.variances = 0.37 * h.array().square();
    ScalingScatter sc = scaling_scatter(pca, hb, 0, k);
    CHECK(sc.alpha == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(sc.excluded == 0);
  }
  SUBCASE("linear") {
    pca.variances = 5.1 * h;
    ScalingScatter sc = scaling_scatter(pca, hb, 0, k);
    CHECK(sc.alpha == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("piecewise flat above the crossover") {
    const double cross = 20.0;
    pca.variances.resize(k);
    for (int i = 0; i < k; ++i)
      pca.variances[i] = h[i] > cross ? cross : h[i];  // const above, linear below
    ScalingScatter above = scaling_scatter(pca, hb, 0, 15, cross);
    ScalingScatter below = scaling_scatter(pca, hb, 25, k, cross);
    CHECK(std::abs(above.alpha) <= 0.1);
    CHECK(below.alpha == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(above.hcross_marker == cross);
  }
  SUBCASE("nonpositive pairs are excluded and counted") {
    pca.variances = 5.1 * h;
    pca.variances[k - 1] = 0.0;
    ScalingScatter sc = scaling_scatter(pca, hb, 0, k);
    CHECK(sc.excluded == 1);
  }
}

TEST_CASE("partial reconstruction accumulates principal components") {
  MatrixXd snaps = random_snapshots(30, 10, 271);
  PcaResult result = pca_of(snaps);
  VectorXd w = snaps.row(17);

  CHECK(pc_partial_reconstruction(w, result, 0) == VectorXd::Zero(10));
  VectorXd full = pc_partial_reconstruction(w, result, result.count());
  CHECK((full - w).cwiseAbs().maxCoeff() <= 1e-8);  // w lies in the full span
  CHECK_THROWS_AS(pc_partial_reconstruction(w, result, result.count() + 1),
                  std::invalid_argument);
}

TEST_CASE("pc addition accuracy climbs toward the trained accuracy") {
  auto tiny = testutil::TrainedTinyNet::make(281);
  TrainConfig cfg;
  cfg.schedule = ConstantSchedule{0.02};
  cfg.batch_size = 16;
  cfg.epochs = 3;
  cfg.seed = 282;
  cfg.record_stride = 1;
  TrainResult more = train(tiny.net, tiny.data, nullptr, cfg);
  PcaResult pca = pca_of(more.trajectory.weight_matrix());

  const VectorXd w_final = more.net.params();
  const double full_acc = accuracy(more.net, tiny.data.inputs, tiny.data.labels);
  std::vector<double> accs;
  Network probe = more.net;
  for (int i = 0; i <= pca.count(); ++i) {
    probe.set_params(pc_partial_reconstruction(w_final, pca, i));
    accs.push_back(accuracy(probe, tiny.data.inputs, tiny.data.labels));
  }
  // grows on average toward the full-weight accuracy
  const std::size_t half = accs.size() / 2;
  double first = 0.0, second = 0.0;
  for (std::size_t i = 0; i < half; ++i) first += accs[i];
  for (std::size_t i = half; i < accs.size(); ++i) second += accs[i];
  CHECK(second / double(accs.size() - half) >= first / double(half));
  // the trajectory mean is not in the span, so the endpoint is approximate
  CHECK(accs.back() >= full_acc - 0.05);
}

TEST_CASE("drift direction dominates the first component when variance allows") {
  // linear drift plus small isotropic noise
  const int t = 60, n = 20;
  std::mt19937_64 rng(291);
  std::normal_distribution<double> gauss;
  VectorXd dir = VectorXd::Zero(n);
  dir[3] = 1.0;
  MatrixXd snaps(t, n);
  const double a = 1.0;
  for (int i = 0; i < t; ++i) {
    for (int j = 0; j < n; ++j) snaps(i, j) = 0.05 * gauss(rng);
    snaps.row(i) += a * double(i) * dir;
  }
  PcaResult result = pca_of(snaps);
  CHECK(std::abs(result.components.row(0).dot(dir)) >= 0.99);
}
