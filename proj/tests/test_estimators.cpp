#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "ss3/errors.hpp"
#include "ss3/estimators.hpp"
#include "ss3/log.hpp"
#include "ss3/metrics.hpp"
#include "ss3/random.hpp"
#include "ss3/sampling.hpp"
#include "support/dense_oracle.hpp"

using namespace ss3;

namespace {

ObservationSet fully_observed(const Matrix& y) {
  std::vector<Entry> e;
  for (Index j = 0; j < y.cols(); ++j)
    for (Index i = 0; i < y.rows(); ++i) e.push_back({i, j, y(i, j)});
  return ObservationSet::entrywise(y.rows(), y.cols(), e);
}

// prox of sum (L - Y)^2 + lambda ||L||_* with every entry observed
Matrix closed_form_svt(const Matrix& y, double lambda) {
  Eigen::JacobiSVD<Matrix> svd(y, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector s = (svd.singularValues().array() - lambda / 2.0).max(0.0);
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

EstimatorConfig svt_cfg(double lambda) {
  EstimatorConfig c;
  c.kind = EstimatorKind::svt;
  c.lambda = lambda;
  c.max_iters = 5000;
  c.conv_tol = 1e-12;
  return c;
}

}  // namespace

TEST_CASE("estimator kind parsing") {
  CHECK(parse_estimator_kind("svt") == EstimatorKind::svt);
  CHECK(parse_estimator_kind("pca") == EstimatorKind::pca_column);
  CHECK(std::string(to_string(EstimatorKind::als)) == "als");
  CHECK_THROWS_AS(parse_estimator_kind("lasso"), InvalidInput);
  EstimatorConfig c;
  c.max_iters = 0;
  CHECK_THROWS_AS(c.validate(), InvalidInput);
}

TEST_CASE("svt: huge lambda gives zero") {
  std::mt19937_64 rng(3);
  const Matrix y = oracle::random_matrix(8, 6, rng);
  const ObservationSet obs = fully_observed(y);
  const double lmax = lambda_max(obs, EstimatorKind::svt);
  CHECK(lmax == doctest::Approx(2.0 * Eigen::JacobiSVD<Matrix>(y).singularValues()(0)));
  CHECK(svt_complete(obs, svt_cfg(lmax * 1.0001)).estimate.norm() == 0.0);
  CHECK(svt_complete(obs, svt_cfg(lmax * 0.9)).estimate.norm() > 0.0);
}

TEST_CASE("svt: fully observed equals the closed-form prox") {
  std::mt19937_64 rng(5);
  const Vector u = oracle::random_matrix(9, 1, rng).col(0);
  const Vector v = oracle::random_matrix(7, 1, rng).col(0);
  const Matrix y = u * v.transpose() + 0.01 * oracle::random_matrix(9, 7, rng);
  for (double lambda : {0.01, 0.1, 0.5}) {
    for (bool acc : {true, false}) {
      EstimatorConfig c = svt_cfg(lambda);
      c.accelerate = acc;
      const Matrix est = svt_complete(fully_observed(y), c).estimate;
      CHECK((est - closed_form_svt(y, lambda)).norm() < 1e-3);
    }
  }
}

TEST_CASE("svt: objective is monotone") {
  const Vector spec = (Vector(3) << 1.0, 0.5, 0.2).finished();
  const SyntheticTruth truth = gen_low_rank(20, 15, spec, 11);
  const ObservationSet obs = gen_completion(truth, 150, 0.05, 12);
  for (bool acc : {true, false}) {
    EstimatorConfig c = svt_cfg(0.2);
    c.accelerate = acc;
    c.max_iters = 300;
    const SvtResult r = svt_complete(obs, c, nullptr, true);
    REQUIRE(r.objective_trace.size() >= 2);
    for (std::size_t i = 1; i < r.objective_trace.size(); ++i)
      CHECK(r.objective_trace[i] <= r.objective_trace[i - 1] + 1e-12);
  }
}

TEST_CASE("svt: warm start reaches the same optimum") {
  const Vector spec = (Vector(2) << 1.0, 0.5).finished();
  const SyntheticTruth truth = gen_low_rank(15, 15, spec, 21);
  const ObservationSet obs = gen_completion(truth, 120, 0.02, 22);
  const SvtResult cold = svt_complete(obs, svt_cfg(0.1));
  const Matrix warm0 = svt_complete(obs, svt_cfg(0.3)).estimate;
  const SvtResult warm = svt_complete(obs, svt_cfg(0.1), &warm0);
  CHECK(warm.objective == doctest::Approx(cold.objective).epsilon(1e-6));
  CHECK((warm.estimate - cold.estimate).norm() < 1e-3);
}

TEST_CASE("svt: rejects other models and lambda <= 0") {
  const ObservationSet reps = ObservationSet::replicates({Matrix::Ones(2, 2)});
  CHECK_THROWS_AS(svt_complete(reps, svt_cfg(1.0)), InvalidInput);
  CHECK_THROWS_AS(svt_complete(fully_observed(Matrix::Ones(2, 2)), svt_cfg(0.0)), InvalidInput);
}

TEST_CASE("svt: cross-validated lambda beats the zero predictor") {
  const Vector spec = (Vector(10) << 1, 1, 1, .5, .5, .5, .5, .5, .1, .1).finished();
  const SyntheticTruth truth = gen_low_rank(70, 70, spec, 31);
  SnrModel model;
  model.m = 3186;
  const double sigma = calibrate_snr(truth, model, 2.0, 50, 32);
  const ObservationSet obs = gen_completion(truth, 3186 + 800, sigma, 33);
  std::vector<Index> tr(3186), te(800);
  // gen_completion sorts entries, so shuffle the split deterministically
  std::vector<Index> all(3986);
  std::iota(all.begin(), all.end(), Index{0});
  std::shuffle(all.begin(), all.end(), std::mt19937_64(34));
  std::copy(all.begin(), all.begin() + 3186, tr.begin());
  std::copy(all.begin() + 3186, all.end(), te.begin());
  const ObservationSet train = obs.subset(tr);
  const ObservationSet test = obs.subset(te);
  EstimatorConfig c = svt_cfg(1.0);
  c.max_iters = 500;
  c.conv_tol = 1e-6;
  const double lmax = lambda_max(train, EstimatorKind::svt);
  const LambdaSelection sel = select_lambda_cv(train, c, log_grid(lmax, lmax * 1e-3, 20), 5, 35);
  CHECK(sel.grid.size() == 20);
  CHECK(sel.lambda < lmax);
  c.lambda = sel.lambda;
  const Matrix est = svt_complete(train, c).estimate;
  const double mse = prediction_mse(est, test);
  const double baseline = prediction_mse(Matrix::Zero(70, 70), test);
  MESSAGE("cv lambda " << sel.lambda << " mse " << mse << " baseline " << baseline);
  CHECK(mse < baseline);
}

TEST_CASE("log grid and holdout selection") {
  const auto g = log_grid(10.0, 0.1, 3);
  REQUIRE(g.size() == 3);
  CHECK(g[0] == doctest::Approx(10.0));
  CHECK(g[1] == doctest::Approx(1.0));
  CHECK(g[2] == doctest::Approx(0.1));
  CHECK_THROWS_AS(log_grid(1.0, 2.0, 3), InvalidInput);

  const Vector spec = (Vector(1) << 1.0).finished();
  const SyntheticTruth truth = gen_low_rank(10, 10, spec, 1);
  const ObservationSet a = gen_completion(truth, 60, 0.01, 2);
  const ObservationSet b = gen_completion(truth, 40, 0.01, 3);
  const LambdaSelection sel = select_lambda_holdout(a, b, svt_cfg(1.0), log_grid(2.0, 0.01, 8));
  CHECK(sel.mse.size() == 8);
  CHECK(sel.lambda < 2.0);
}

TEST_CASE("als: exact rank-1 factorization at lambda 0") {
  std::mt19937_64 rng(7);
  const Vector u = oracle::random_matrix(6, 1, rng).col(0);
  const Vector v = oracle::random_matrix(5, 1, rng).col(0);
  const Matrix y = u * v.transpose();
  EstimatorConfig c;
  c.kind = EstimatorKind::als;
  c.k = 1;
  c.lambda = 0.0;
  c.max_iters = 200;
  c.conv_tol = 1e-14;
  const AlsResult r = als_complete(fully_observed(y), c);
  CHECK((r.estimate() - y).norm() / y.norm() < 1e-6);
}

TEST_CASE("als: huge lambda shrinks to zero") {
  std::mt19937_64 rng(8);
  const Matrix y = oracle::random_matrix(6, 5, rng);
  EstimatorConfig c;
  c.kind = EstimatorKind::als;
  c.k = 2;
  c.lambda = 1e8;
  const AlsResult r = als_complete(fully_observed(y), c);
  CHECK(r.u.norm() < 1e-6);
  CHECK(r.v.norm() < 1e-6);
}

TEST_CASE("als: objective is monotone for entrywise and linear data") {
  const Vector spec = (Vector(2) << 1.0, 0.5).finished();
  const SyntheticTruth truth = gen_low_rank(12, 10, spec, 41);
  const ObservationSet ent = gen_completion(truth, 70, 0.05, 42);
  const ObservationSet lin = gen_linear(truth, 90, 0.05, 43);
  for (const ObservationSet* obs : {&ent, &lin}) {
    EstimatorConfig c;
    c.kind = EstimatorKind::als;
    c.k = 3;
    c.lambda = 0.05;
    c.max_iters = 100;
    c.conv_tol = 1e-12;
    const AlsResult r = als_complete(*obs, c, true);
    REQUIRE(r.objective_trace.size() >= 2);
    for (std::size_t i = 1; i < r.objective_trace.size(); ++i)
      CHECK(r.objective_trace[i] <= r.objective_trace[i - 1] * (1 + 1e-12) + 1e-14);
  }
}

TEST_CASE("als: linear measurements recover a low-rank matrix") {
  const Vector spec = (Vector(2) << 1.0, 0.6).finished();
  const SyntheticTruth truth = gen_low_rank(8, 8, spec, 51);
  const ObservationSet lin = gen_linear(truth, 200, 0.0, 52);
  EstimatorConfig c;
  c.kind = EstimatorKind::als;
  c.k = 2;
  c.lambda = 1e-9;
  c.max_iters = 500;
  c.conv_tol = 1e-15;
  const Matrix est = als_complete(lin, c).estimate();
  CHECK((est - truth.l_star).norm() < 1e-4);
}

TEST_CASE("als: balancedness diagnostic") {
  const Vector spec = (Vector(2) << 1.0, 0.5).finished();
  const SyntheticTruth truth = gen_low_rank(10, 10, spec, 61);
  EstimatorConfig c;
  c.kind = EstimatorKind::als;
  c.k = 2;
  c.lambda = 0.1;
  c.max_iters = 2000;
  c.conv_tol = 1e-14;
  const AlsResult r = als_complete(fully_observed(truth.l_star), c);
  MESSAGE("||U|| " << r.u.norm() << " ||V|| " << r.v.norm());
  CHECK(std::abs(r.u.norm() - r.v.norm()) / r.v.norm() < 0.01);
}

TEST_CASE("spectral denoising") {
  std::mt19937_64 rng(9);
  const Matrix uu = oracle::random_basis(5, 3, rng);
  const Matrix vv = oracle::random_basis(4, 3, rng);
  const Matrix m = uu * Vector::LinSpaced(3, 3.0, 1.0).asDiagonal() * vv.transpose();
  const ObservationSet one = ObservationSet::replicates({m});
  CHECK((spectral_denoise(one, 4) - m).norm() < 1e-12);
  const Matrix k2 = spectral_denoise(one, 2);
  const Vector s = Eigen::JacobiSVD<Matrix>(k2).singularValues();
  CHECK(s(0) == doctest::Approx(3.0));
  CHECK(s(1) == doctest::Approx(2.0));
  CHECK(std::abs(s(2)) < 1e-12);
  const ObservationSet pm = ObservationSet::replicates({m, -m, 2 * m, -2 * m});
  CHECK(spectral_denoise(pm, 2).norm() < 1e-12);
  set_warnings_enabled(false);
  CHECK(spectral_denoise(one, 9).rows() == 5);
  set_warnings_enabled(true);
}

TEST_CASE("pca column space") {
  std::vector<Matrix> along;
  for (int i = 1; i <= 5; ++i) along.push_back(Vector::Unit(4, 0) * static_cast<double>(i));
  const Subspace s = pca_column(ObservationSet::replicates(along), 1);
  CHECK(subspace_overlap(s, Subspace::coordinate(4, {0})) == doctest::Approx(1.0));

  std::vector<Matrix> iso;
  for (int i = 0; i < 4; ++i) iso.push_back(Vector::Unit(4, i));
  CHECK((pca_column(ObservationSet::replicates(iso), 4).projector() - Matrix::Identity(4, 4)).norm() < 1e-10);

  const Index p = 10;
  Rng rng(13);
  Vector spike = standard_normal(p, rng);
  spike.normalize();
  std::vector<Matrix> draws;
  for (Index i = 0; i < 50 * p; ++i) draws.push_back(standard_normal(p, rng) + 3.0 * standard_normal(1, rng)(0) * spike);
  const Subspace lead = pca_column(ObservationSet::replicates(draws), 1);
  CHECK(principal_angles(lead, Subspace(spike))(0) < 0.1);
  CHECK_THROWS_AS(pca_column(ObservationSet::replicates(iso), 5), InvalidInput);
}

TEST_CASE("extract_tangent") {
  CHECK(extract_tangent(Matrix::Zero(4, 3)).rank() == 0);
  const Vector u = (Vector(3) << 1, 2, 2).finished() / 3.0;
  const Vector v = (Vector(2) << 3, 4).finished() / 5.0;
  const TangentSpace t = extract_tangent(2.0 * u * v.transpose());
  CHECK(t.rank() == 1);
  CHECK(subspace_overlap(t.col(), Subspace(u)) == doctest::Approx(1.0));
  const Matrix l = Vector::Unit(3, 0) * Vector::Unit(3, 0).transpose() +
                   1e-12 * Vector::Unit(3, 1) * Vector::Unit(3, 1).transpose();
  CHECK(extract_tangent(l, 1e-8).rank() == 1);
  CHECK(extract_tangent(l, 1e-14).rank() == 2);
}

TEST_CASE("refit") {
  std::mt19937_64 rng(17);
  const Matrix y = oracle::random_matrix(7, 6, rng);
  const TangentSpace t = oracle::random_tangent(7, 6, 2, rng);
  const ObservationSet full = fully_observed(y);
  const ObservationSet rep = ObservationSet::replicates({y});
  const Matrix closed = refit(t, rep);
  CHECK((closed - t.col().projector() * y * t.row().projector()).norm() < 1e-10);
  // entrywise with every entry equals the closed form
  CHECK((refit(t, full) - closed).norm() < 1e-8);
  // residual orthogonal to the fitted family U_C M U_R'
  const Matrix resid = y - closed;
  CHECK((t.col().basis().transpose() * resid * t.row().basis()).norm() < 1e-8);
  // T of Y itself: truncation of the SVD
  const ThinSvd svd = thin_svd(y);
  const TangentSpace top(Subspace(svd.u.leftCols(2)), Subspace(svd.v.leftCols(2)));
  CHECK((refit(top, full) - svd.u.leftCols(2) * svd.s.head(2).asDiagonal() * svd.v.leftCols(2).transpose()).norm() <
        1e-8);
  CHECK(refit(TangentSpace::zero(7, 6), full).norm() == 0.0);
}

TEST_CASE("refit: tangent of the refit is contained in T") {
  std::mt19937_64 rng(19);
  const Vector spec = (Vector(3) << 1.0, 0.7, 0.4).finished();
  const SyntheticTruth truth = gen_low_rank(9, 8, spec, 71);
  const ObservationSet ent = gen_completion(truth, 50, 0.1, 72);
  const ObservationSet lin = gen_linear(truth, 40, 0.1, 73);
  for (int trial = 0; trial < 20; ++trial) {
    const TangentSpace t = oracle::random_tangent(9, 8, 1 + trial % 3, rng);
    for (const ObservationSet* obs : {&ent, &lin}) {
      const TangentSpace fitted = extract_tangent(refit(t, *obs));
      CHECK(tangent_overlap(fitted, t) == doctest::Approx(static_cast<double>(fitted.dim())).epsilon(1e-6));
    }
  }
}

TEST_CASE("estimate dispatch and prediction error") {
  const Matrix m = Matrix::Constant(3, 3, 2.0);
  const ObservationSet rep = ObservationSet::replicates({m});
  EstimatorConfig c;
  c.kind = EstimatorKind::spectral;
  c.k = 1;
  CHECK(estimate_tangent(rep, c).rank() == 1);
  CHECK(prediction_mse(m, rep) == doctest::Approx(0.0));
  CHECK(prediction_mse(Matrix::Zero(3, 3), rep) == doctest::Approx(4.0));
  c.kind = EstimatorKind::pca_column;
  CHECK_THROWS_AS(estimate_matrix(rep, c), InvalidInput);
}

TEST_CASE("observation validation and round trips") {
  CHECK_THROWS_AS(ObservationSet::entrywise(2, 2, {{0, 0, 1.0}, {0, 0, 2.0}}), InvalidInput);
  CHECK_THROWS_AS(ObservationSet::entrywise(2, 2, {{2, 0, 1.0}}), InvalidInput);
  CHECK_THROWS_AS(ObservationSet::entrywise(2, 2, {}), InvalidInput);
  CHECK_THROWS_AS(ObservationSet::replicates({Matrix::Ones(2, 2), Matrix::Ones(2, 3)}), DimensionMismatch);

  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "ss3_obs_roundtrip";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const Vector spec = (Vector(1) << 1.0).finished();
  const SyntheticTruth truth = gen_low_rank(4, 3, spec, 1);

  const ObservationSet ent = gen_completion(truth, 7, 0.1, 2);
  save_observations(dir / "ent.csv", ent);
  const ObservationSet ent2 = load_observations(dir / "ent.csv");
  REQUIRE(ent2.size() == 7);
  CHECK(ent2.p1() == 4);
  CHECK(ent2.p2() == 3);
  for (Index s = 0; s < 7; ++s) CHECK(ent2.entries()[s].y == ent.entries()[s].y);

  const ObservationSet rep = gen_denoise(truth, 3, 0.5, 1.0, 3);
  save_observations(dir / "rep", rep);
  const ObservationSet rep2 = load_observations(dir / "rep");
  REQUIRE(rep2.size() == 3);
  CHECK(rep2.replicate_list()[2] == rep.replicate_list()[2]);

  const ObservationSet lin = gen_linear(truth, 5, 0.1, 4);
  save_observations(dir / "lin", lin);
  const ObservationSet lin2 = load_observations(dir / "lin");
  CHECK(lin2.model() == ObservationModel::linear);
  CHECK(lin2.sensing() == lin.sensing());
  CHECK(lin2.values() == lin.values());
  CHECK((lin.functional(1) - Eigen::Map<const Matrix>(lin.sensing().row(1).transpose().eval().data(), 4, 3)).norm() ==
        0.0);
  fs::remove_all(dir);
}
