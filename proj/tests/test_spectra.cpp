#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "netspectra/spectra.hpp"
#include "netspectra/stats.hpp"

using namespace netspectra;

namespace {

MatrixXd random_orthogonal(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = gauss(rng);
  return Eigen::HouseholderQR<MatrixXd>(a).householderQ();
}

VectorXd random_unit(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = gauss(rng);
  return v.normalized();
}

}  // namespace

TEST_CASE("overlap of a basis with itself is the identity") {
  MatrixXd q = random_orthogonal(8, 401);
  OverlapMatrix m = overlap(q, q, false);
  CHECK((m.entries - MatrixXd::Identity(8, 8)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("overlap columns satisfy parseval against a complete basis") {
  MatrixXd rows = random_orthogonal(10, 402);
  MatrixXd cols(4, 10);
  for (int j = 0; j < 4; ++j) cols.row(j) = 3.7 * random_unit(10, 403 + j);
  OverlapMatrix m = overlap(rows, cols, true);
  for (int j = 0; j < 4; ++j)
    CHECK(m.entries.col(j).squaredNorm() == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(m.entries.maxCoeff() <= 1.0 + 1e-12);
}

TEST_CASE("rotated bases spread their overlap") {
  MatrixXd a = MatrixXd::Identity(12, 12);
  MatrixXd b = random_orthogonal(12, 404);
  OverlapMatrix m = overlap(a, b, false);
  CHECK(m.entries.maxCoeff() < 1.0);
  for (int j = 0; j < 12; ++j)
    CHECK(m.entries.col(j).squaredNorm() == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("zero columns are rejected when normalizing") {
  MatrixXd rows = MatrixXd::Identity(3, 3);
  MatrixXd cols = MatrixXd::Zero(1, 3);
  CHECK_THROWS_AS(overlap(rows, cols, true), std::invalid_argument);
  CHECK_NOTHROW(overlap(rows, cols, false));
}

TEST_CASE("weight product picks out basis coordinates") {
  MatrixXd q = random_orthogonal(9, 405);
  EigenBasis basis;
  basis.values = VectorXd::LinSpaced(9, 9.0, 1.0);
  basis.vectors = q;

  VectorXd w = 2.5 * q.row(4).transpose();
  VectorXd wp = weight_product(basis, w);
  for (int i = 0; i < 9; ++i)
    CHECK(wp[i] == doctest::Approx(i == 4 ? 1.0 : 0.0).epsilon(1e-12));

  VectorXd any = random_unit(9, 406) * 1.7;
  CHECK(weight_product(basis, any).squaredNorm() == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("training reshapes the weight product across the spectrum") {
  // Initialization-time weights are featureless against the trained
  // eigenbasis; training concentrates the product on few directions.
  const std::uint64_t seed = 411;
  Dataset data = synth_blobs(5, 16, 40, 8.0, seed);
  Network init = Network::glorot({16, 16, 5}, InitMode::Uniform, seed + 1);
  TrainConfig cfg;
  cfg.schedule = ConstantSchedule{0.05};
  cfg.batch_size = 16;
  cfg.epochs = 80;
  cfg.seed = seed + 2;
  Network trained = train(init, data, nullptr, cfg).net;

  EigenBasis basis = eigh(dense_hessian(trained, data, 0.0), Ordering::Magnitude);
  VectorXd wp_init = weight_product(basis, init.params());
  VectorXd wp_final = weight_product(basis, trained.params());
  CHECK(wp_init.squaredNorm() == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(wp_final.squaredNorm() == doctest::Approx(1.0).epsilon(1e-10));
  // trained weights localize in the eigenbasis relative to the init draw
  CHECK(wp_final.cwiseAbs().maxCoeff() > wp_init.cwiseAbs().maxCoeff());
  // both series are index-aligned with the magnitude ordering
  CHECK(basis.ordering == Ordering::Magnitude);
}

TEST_CASE("eigenvector addition reproduces the network at full rank") {
  auto tiny = testutil::TrainedTinyNet::make(421);
  EigenBasis basis =
      eigh(dense_hessian(tiny.net, tiny.data, 0.0), Ordering::Magnitude);
  AdditionCurve curve =
      add_eigvec_curve(tiny.net, basis, Ordering::Magnitude, tiny.data);
  REQUIRE(curve.complete);
  const double full_acc = accuracy(tiny.net, tiny.data.inputs, tiny.data.labels);
  const double full_loss = batch_loss(tiny.net, tiny.data.inputs, tiny.data.labels, 0.0);
  CHECK(curve.accuracy.back() == doctest::Approx(full_acc).epsilon(1e-12));
  CHECK(curve.loss.back() == doctest::Approx(full_loss).epsilon(1e-9));

  // i = 0 zeroes the analyzed block
  Network zeroed = tiny.net;
  zeroed.params().setZero();
  CHECK(curve.accuracy.front() ==
        doctest::Approx(accuracy(zeroed, tiny.data.inputs, tiny.data.labels)).epsilon(1e-12));

  // the two orderings agree at the endpoint
  AdditionCurve alg = add_eigvec_curve(tiny.net, basis, Ordering::Algebraic, tiny.data);
  CHECK(alg.accuracy.back() == doctest::Approx(curve.accuracy.back()).epsilon(1e-12));
  CHECK(alg.loss.back() == doctest::Approx(curve.loss.back()).epsilon(1e-9));
}

TEST_CASE("incomplete bases flag a truncated curve") {
  auto tiny = testutil::TrainedTinyNet::make(431);
  HvpFn oracle = hvp_oracle(tiny.net, tiny.data, 0.0);
  LanczosOptions opts;
  opts.k = 6;
  opts.seed = 432;
  EigenBasis partial = lanczos_topk(oracle, static_cast<int>(tiny.net.params().size()), opts);
  AdditionCurve curve =
      add_eigvec_curve(tiny.net, partial, Ordering::Magnitude, tiny.data);
  CHECK_FALSE(curve.complete);
  CHECK(curve.index.back() == 6);
}

TEST_CASE("single-layer bases reconstruct inside their block") {
  auto tiny = testutil::TrainedTinyNet::make(441);
  auto [begin, end] = tiny.net.layout().layer_span(1);
  HvpFn oracle = hvp_oracle_block(tiny.net, tiny.data, 0.0, begin, end);
  EigenBasis basis = eigh(dense_hessian(oracle, static_cast<int>(end - begin)),
                          Ordering::Magnitude);
  AdditionCurve curve =
      add_eigvec_curve(tiny.net, basis, Ordering::Magnitude, tiny.data, begin, end);
  REQUIRE(curve.complete);
  const double full_acc = accuracy(tiny.net, tiny.data.inputs, tiny.data.labels);
  CHECK(curve.accuracy.back() == doctest::Approx(full_acc).epsilon(1e-12));
}

TEST_CASE("loss slices pass through the unperturbed loss") {
  auto tiny = testutil::TrainedTinyNet::make(451);
  EigenBasis basis = eigh(dense_hessian(tiny.net, tiny.data, 0.0), Ordering::Magnitude);
  VectorXd direction = basis.vectors.row(0);

  LossSlice slice = loss_slice_default(tiny.net, tiny.data, direction, 0.0);
  const double w_dot_h = tiny.net.params().dot(direction);
  CHECK(slice.w_dot_h == doctest::Approx(w_dot_h));

  bool found = false;
  for (const SlicePoint& p : slice.points) {
    if (p.alpha == w_dot_h) {
      CHECK(p.loss == doctest::Approx(slice.base_loss).epsilon(1e-12));
      CHECK(p.quadratic == doctest::Approx(slice.base_loss).epsilon(1e-12));
      found = true;
    }
  }
  CHECK(found);
  // grid includes the removal point alpha = 0
  CHECK(std::any_of(slice.points.begin(), slice.points.end(),
                    [](const SlicePoint& p) { return p.alpha == 0.0; }));

  // quadratic overlay is symmetric about the model minimum
  const double center = slice.w_dot_h - slice.grad_proj / slice.curvature;
  LossSlice sym = loss_slice(tiny.net, tiny.data, direction,
                             {center - 0.3, center + 0.3}, 0.0);
  CHECK(sym.points[0].quadratic == doctest::Approx(sym.points[1].quadratic).epsilon(1e-10));
}

TEST_CASE("slice curvature tracks the eigenvalue near the minimum") {
  auto tiny = testutil::TrainedTinyNet::make(461);
  EigenBasis basis = eigh(dense_hessian(tiny.net, tiny.data, 0.0), Ordering::Magnitude);
  for (int i : {0, 2}) {
    VectorXd dir = basis.vectors.row(i);
    const double w_dot_h = tiny.net.params().dot(dir);
    const double delta = 1e-3;
    LossSlice probe = loss_slice(tiny.net, tiny.data, dir,
                                 {w_dot_h - delta, w_dot_h, w_dot_h + delta}, 0.0);
    const double fd_curv = (probe.points[0].loss - 2.0 * probe.points[1].loss +
                            probe.points[2].loss) /
                           (delta * delta);
    CHECK(fd_curv == doctest::Approx(basis.values[i]).epsilon(0.05));
  }
}

TEST_CASE("loss scaling fixes alpha = 1 and scales the penalty quadratically") {
  auto tiny = testutil::TrainedTinyNet::make(471);
  const double lambda = 0.01;
  std::vector<double> alphas{0.5, 1.0, 1.5, 2.0};
  auto with = loss_scaling(tiny.net, tiny.data, alphas, kScopeWholeNet, lambda);
  auto without = loss_scaling(tiny.net, tiny.data, alphas, kScopeWholeNet, 0.0);
  const double base = batch_loss(tiny.net, tiny.data.inputs, tiny.data.labels, lambda);
  CHECK(with[1].loss == doctest::Approx(base).epsilon(1e-12));

  const double w2 = tiny.net.params().squaredNorm();
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    const double penalty = with[i].loss - without[i].loss;
    CHECK(penalty ==
          doctest::Approx(alphas[i] * alphas[i] * lambda * w2).epsilon(1e-10));
  }
  CHECK_THROWS_AS(loss_scaling(tiny.net, tiny.data, {0.0}, kScopeWholeNet, 0.0),
                  std::invalid_argument);
}

TEST_CASE("upscaling a confident net decays the loss log-linearly") {
  auto tiny = testutil::TrainedTinyNet::make(481, 4, 8, 25, 12, 0.05, 120);
  REQUIRE(accuracy(tiny.net, tiny.data.inputs, tiny.data.labels) == 1.0);
  std::vector<double> alphas;
  for (int i = 0; i <= 20; ++i) alphas.push_back(1.0 + i * 0.05);
  auto table = loss_scaling(tiny.net, tiny.data, alphas, kScopeWholeNet, 0.0);
  VectorXd x(static_cast<Eigen::Index>(alphas.size()));
  VectorXd y(static_cast<Eigen::Index>(alphas.size()));
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    CHECK(table[i].loss > 0.0);
    x[static_cast<Eigen::Index>(i)] = table[i].alpha;
    y[static_cast<Eigen::Index>(i)] = std::log(table[i].loss);
    if (i) CHECK(table[i].loss < table[i - 1].loss);
  }
  LineFit fit = fit_line(x, y);
  CHECK(fit.slope < 0.0);
  CHECK(fit.r_squared >= 0.95);
}

TEST_CASE("layer scope only scales the selected block") {
  auto tiny = testutil::TrainedTinyNet::make(491);
  auto scoped = loss_scaling(tiny.net, tiny.data, {1.0}, 1, 0.0);
  CHECK(scoped[0].loss ==
        doctest::Approx(batch_loss(tiny.net, tiny.data.inputs, tiny.data.labels, 0.0)));
  CHECK_THROWS_AS(loss_scaling(tiny.net, tiny.data, {1.0}, 7, 0.0), std::invalid_argument);
}

TEST_CASE("layer concentration sums to one over layers") {
  ParamLayout layout({6, 5, 4});
  const Eigen::Index n = layout.total();

  SUBCASE("support in one layer concentrates fully") {
    auto [begin, end] = layout.layer_span(0);
    VectorXd h = VectorXd::Zero(n);
    h.segment(begin, end - begin) = random_unit(end - begin, 501);
    VectorXd fractions = layer_concentration(h, layout);
    CHECK(fractions[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fractions[1] == doctest::Approx(0.0));
  }
  SUBCASE("random vectors spread by parameter count") {
    VectorXd mean_fraction = VectorXd::Zero(layout.layer_count());
    const int trials = 64;
    for (int trial = 0; trial < trials; ++trial)
      mean_fraction += layer_concentration(random_unit(n, 502 + trial), layout);
    mean_fraction /= double(trials);
    for (int l = 0; l < layout.layer_count(); ++l) {
      auto [begin, end] = layout.layer_span(l);
      const double expect = double(end - begin) / double(n);
      const double sigma =
          std::sqrt(2.0 * expect * (1.0 - expect) / double(n) / double(trials));
      CHECK(std::abs(mean_fraction[l] - expect) <= 5.0 * sigma + 1e-3);
    }
  }
  SUBCASE("fractions always sum to one") {
    VectorXd fractions = layer_concentration(random_unit(n, 503), layout);
    CHECK(fractions.sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(layer_concentration(VectorXd::Ones(n), layout), std::invalid_argument);
}

TEST_CASE("inverse participation ratio spans localization extremes") {
  VectorXd basis_vec = VectorXd::Zero(50);
  basis_vec[7] = 1.0;
  CHECK(ipr(basis_vec) == doctest::Approx(1.0));

  VectorXd uniform = VectorXd::Constant(50, 1.0 / std::sqrt(50.0));
  CHECK(ipr(uniform) == doctest::Approx(1.0 / 50.0).epsilon(1e-12));

  VectorXd half = VectorXd::Zero(50);
  half.head(25).setConstant(1.0 / std::sqrt(25.0));
  CHECK(ipr(half) == doctest::Approx(2.0 / 50.0).epsilon(1e-12));

  CHECK_THROWS_AS(ipr(VectorXd::Ones(4)), std::invalid_argument);
}

TEST_CASE("porter-thomas test accepts gaussian vectors and rejects structure") {
  const int n = 100;
  std::vector<double> pvalues;
  for (int trial = 0; trial < 200; ++trial)
    pvalues.push_back(porter_thomas_pvalue(random_unit(n, 600 + trial)));
  std::sort(pvalues.begin(), pvalues.end());
  const double median = pvalues[100];
  CHECK(median >= 0.2);
  CHECK(median <= 0.8);

  VectorXd flat = VectorXd::Constant(64, 1.0 / 8.0);
  CHECK(porter_thomas_pvalue(flat) < 1e-6);

  VectorXd tiny_vec = random_unit(10, 601);
  CHECK_THROWS_AS(porter_thomas_pvalue(tiny_vec), std::invalid_argument);
}

TEST_CASE("trained hessian eigenvectors are far from porter-thomas") {
  auto tiny = testutil::TrainedTinyNet::make(611);
  EigenBasis basis = eigh(dense_hessian(tiny.net, tiny.data, 0.0), Ordering::Magnitude);
  CHECK(porter_thomas_pvalue(basis.vectors.row(0)) < 0.05);
}

TEST_CASE("layer vectors embed isometrically") {
  ParamLayout layout({5, 4, 3});
  auto [begin, end] = layout.layer_span(1);
  VectorXd h = random_unit(end - begin, 621);
  VectorXd full = embed_layer_vector(h, 1, layout);
  CHECK(full.norm() == doctest::Approx(h.norm()).epsilon(1e-14));
  CHECK(full.segment(begin, end - begin) == h);
  CHECK(full.head(begin).cwiseAbs().maxCoeff() == 0.0);

  // embedded self-overlap is the identity
  MatrixXd layer_basis = random_orthogonal(static_cast<int>(end - begin), 622);
  MatrixXd embedded(layer_basis.rows(), layout.total());
  for (int i = 0; i < layer_basis.rows(); ++i)
    embedded.row(i) = embed_layer_vector(layer_basis.row(i), 1, layout);
  OverlapMatrix self = overlap(embedded, embedded, false);
  CHECK((self.entries - MatrixXd::Identity(layer_basis.rows(), layer_basis.rows()))
            .cwiseAbs()
            .maxCoeff() <= 1e-12);

  CHECK_THROWS_AS(embed_layer_vector(h, 0, layout), std::invalid_argument);
}

TEST_CASE("layer hessian tops align with the network hessian top") {
  auto tiny = testutil::TrainedTinyNet::make(631);
  const Eigen::Index n = tiny.net.params().size();
  EigenBasis full = eigh(dense_hessian(tiny.net, tiny.data, 0.0), Ordering::Magnitude);

  auto [begin, end] = tiny.net.layout().layer_span(1);
  HvpFn oracle = hvp_oracle_block(tiny.net, tiny.data, 0.0, begin, end);
  EigenBasis layer = eigh(dense_hessian(oracle, static_cast<int>(end - begin)),
                          Ordering::Magnitude);

  VectorXd embedded = embed_layer_vector(layer.vectors.row(0), 1, tiny.net.layout());
  const double top_overlap = std::abs(full.vectors.row(0).dot(embedded));
  CHECK(top_overlap > 1.0 / std::sqrt(double(n)));
}

TEST_CASE("spectral density is a smoothed unit-mass spectrum") {
  SUBCASE("single value gives a centered bump") {
    DensityTable table = spectral_density(VectorXd::Constant(1, 2.5), 1.0, 301);
    Eigen::Index arg;
    table.density.maxCoeff(&arg);
    CHECK(table.grid[arg] == doctest::Approx(2.5).epsilon(1e-6));
  }
  SUBCASE("mass integrates to one on spread spectra") {
    VectorXd values = VectorXd::LinSpaced(200, -25.0, 25.0);
    DensityTable table = spectral_density(values, 1.0, 2001);
    // trapezoid oracle over the returned grid
    double mass = 0.0;
    for (Eigen::Index i = 0; i + 1 < table.grid.size(); ++i)
      mass += 0.5 * (table.density[i] + table.density[i + 1]) *
              (table.grid[i + 1] - table.grid[i]);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-3));
  }
  SUBCASE("a uniform shift moves the peak by the same amount") {
    VectorXd values(5);
    values << -1.0, 0.0, 0.2, 0.4, 3.0;
    const double shift = 2.0 * 0.05;
    DensityTable base = spectral_density(values, 1.0, 4001);
    DensityTable moved = spectral_density((values.array() + shift).matrix(), 1.0, 4001);
    Eigen::Index arg_base, arg_moved;
    base.density.maxCoeff(&arg_base);
    moved.density.maxCoeff(&arg_moved);
    CHECK(moved.grid[arg_moved] - base.grid[arg_base] == doctest::Approx(shift).epsilon(1e-6));
  }
}
