#include "ss3/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ss3/errors.hpp"
#include "ss3/estimators.hpp"
#include "ss3/random.hpp"

namespace ss3 {

BagPlan complementary_bags(Index n, Index b, std::uint64_t seed) {
  if (n < 2 || n % 2 != 0) throw InvalidInput("complementary_bags: n must be even and positive");
  if (b < 2 || b % 2 != 0) throw InvalidInput("complementary_bags: B must be even and at least 2");
  BagPlan plan;
  plan.n = n;
  plan.b = b;
  plan.seed = seed;
  plan.bags.reserve(static_cast<std::size_t>(b));
  Rng rng(seed);
  std::vector<Index> perm(static_cast<std::size_t>(n));
  const auto half = perm.begin() + n / 2;
  for (Index j = 0; j < b / 2; ++j) {
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Index> first(perm.begin(), half);
    std::vector<Index> second(half, perm.end());
    std::sort(first.begin(), first.end());
    std::sort(second.begin(), second.end());
    plan.bags.push_back(std::move(first));
    plan.bags.push_back(std::move(second));
  }
  return plan;
}

namespace {

void check_spectrum(Index p1, Index p2, const Vector& spectrum) {
  if (p1 < 1 || p2 < 1) throw InvalidInput("gen_low_rank: dimensions must be positive");
  if (spectrum.size() > std::min(p1, p2)) throw InvalidInput("gen_low_rank: spectrum longer than min(p1, p2)");
  for (Index i = 0; i < spectrum.size(); ++i) {
    if (!(spectrum(i) > 0.0) || !std::isfinite(spectrum(i)))
      throw InvalidInput("gen_low_rank: singular values must be positive");
    if (i > 0 && spectrum(i) > spectrum(i - 1)) throw InvalidInput("gen_low_rank: spectrum must be non-increasing");
  }
}

SyntheticTruth assemble(Matrix u_full, Matrix v_full, const Vector& spectrum, std::uint64_t seed) {
  const Index r = spectrum.size();
  SyntheticTruth t;
  t.l_star = u_full.leftCols(r) * spectrum.asDiagonal() * v_full.leftCols(r).transpose();
  t.t_star = TangentSpace(Subspace(u_full.leftCols(r)), Subspace(v_full.leftCols(r)));
  t.spectrum = spectrum;
  t.seed = seed;
  t.u_full = std::move(u_full);
  t.v_full = std::move(v_full);
  return t;
}

// Orthogonal p x p matrix whose first column has squared weight mu on e_0 and
// whose columns 1..r-1 vanish at coordinate 0.
Matrix coherent_orthogonal(Index p, Index r, double mu, Rng& rng) {
  Matrix g = standard_normal(p, p, rng);
  g.row(0).setZero();
  Matrix seedcols(p, p);
  seedcols.col(0) = Vector::Unit(p, 0);
  seedcols.rightCols(p - 1) = g.leftCols(p - 1);
  Eigen::HouseholderQR<Matrix> qr(seedcols);
  Matrix q = qr.householderQ() * Matrix::Identity(p, p);
  // q.col(0) = +-e_0, q.col(1) is a unit vector orthogonal to e_0.
  Matrix out(p, p);
  const Vector w = q.col(1);
  out.col(0) = std::sqrt(mu) * Vector::Unit(p, 0) + std::sqrt(1.0 - mu) * w;
  for (Index j = 1; j < r; ++j) out.col(j) = q.col(j + 1);
  // Remaining columns complete the basis.
  if (r < p) {
    const Subspace lead(out.leftCols(r));
    out.rightCols(p - r) = lead.complement_basis();
  }
  return out;
}

}  // namespace

SyntheticTruth truth_from_matrix(const Matrix& l_star, std::uint64_t seed, double rank_tol) {
  const TangentSpace t = extract_tangent(l_star, rank_tol);
  const Index r = t.rank();
  SyntheticTruth out;
  out.l_star = l_star;
  out.t_star = t;
  out.spectrum = thin_svd(l_star).s.head(r);
  out.seed = seed;
  out.u_full.resize(l_star.rows(), l_star.rows());
  out.u_full << t.col().basis(), t.col().complement_basis();
  out.v_full.resize(l_star.cols(), l_star.cols());
  out.v_full << t.row().basis(), t.row().complement_basis();
  return out;
}

SyntheticTruth gen_low_rank(Index p1, Index p2, const Vector& spectrum, std::uint64_t seed) {
  check_spectrum(p1, p2, spectrum);
  return assemble(haar_orthogonal(p1, derive_seed(seed, 1)), haar_orthogonal(p2, derive_seed(seed, 2)), spectrum,
                  seed);
}

SyntheticTruth gen_low_rank_coherent(Index p1, Index p2, const Vector& spectrum, double mu, std::uint64_t seed) {
  check_spectrum(p1, p2, spectrum);
  const Index r = spectrum.size();
  if (r < 1) throw InvalidInput("gen_low_rank_coherent: empty spectrum");
  if (r + 1 > std::min(p1, p2)) throw InvalidInput("gen_low_rank_coherent: need rank < min(p1, p2)");
  if (!(mu > 0.0 && mu <= 1.0)) throw InvalidInput("gen_low_rank_coherent: mu must lie in (0, 1]");
  Rng ru(derive_seed(seed, 1));
  Rng rv(derive_seed(seed, 2));
  Matrix u = coherent_orthogonal(p1, r, mu, ru);
  Matrix v = coherent_orthogonal(p2, r, mu, rv);
  return assemble(std::move(u), std::move(v), spectrum, seed);
}

double incoherence(const TangentSpace& t) {
  const double c = t.col().basis().rowwise().squaredNorm().maxCoeff();
  const double r = t.row().basis().rowwise().squaredNorm().maxCoeff();
  if (t.rank() == 0) return 0.0;
  return std::max(c, r);
}

ObservationSet gen_completion(const SyntheticTruth& truth, Index m, double sigma, std::uint64_t seed) {
  const Index p1 = truth.l_star.rows();
  const Index p2 = truth.l_star.cols();
  const Index total = p1 * p2;
  if (m < 1 || m > total) throw InvalidInput("gen_completion: m must lie in [1, p1*p2]");
  if (!(sigma >= 0.0)) throw InvalidInput("gen_completion: sigma must be non-negative");
  Rng rng(seed);
  std::vector<Index> idx(static_cast<std::size_t>(total));
  std::iota(idx.begin(), idx.end(), Index{0});
  for (Index s = 0; s < m; ++s) {
    std::uniform_int_distribution<Index> pick(s, total - 1);
    std::swap(idx[static_cast<std::size_t>(s)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  idx.resize(static_cast<std::size_t>(m));
  std::sort(idx.begin(), idx.end());
  const Vector noise = standard_normal(m, rng);
  std::vector<Entry> entries;
  entries.reserve(static_cast<std::size_t>(m));
  for (Index s = 0; s < m; ++s) {
    const Index k = idx[static_cast<std::size_t>(s)];
    const Index i = k % p1;
    const Index j = k / p1;
    entries.push_back({i, j, truth.l_star(i, j) + sigma * noise(s)});
  }
  return ObservationSet::entrywise(p1, p2, std::move(entries));
}

ObservationSet gen_denoise(const SyntheticTruth& truth, Index n, double delta, double gamma, std::uint64_t seed) {
  if (n < 1) throw InvalidInput("gen_denoise: n must be positive");
  if (!(delta >= 0.0) || !(gamma >= 0.0)) throw InvalidInput("gen_denoise: delta and gamma must be non-negative");
  const Index p1 = truth.l_star.rows();
  const Index p2 = truth.l_star.cols();
  const Index d = std::min(p1, p2);
  if (gamma > 0.0 && (truth.u_full.cols() != p1 || truth.v_full.cols() != p2))
    throw InvalidInput("gen_denoise: truth lacks full singular bases");
  std::vector<Matrix> reps(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    Rng rng(seed + static_cast<std::uint64_t>(i));
    const Vector diag = standard_normal(d, rng);
    Matrix y = standard_normal(p1, p2, rng);
    if (gamma > 0.0)
      y.noalias() += (truth.u_full.leftCols(d) * (gamma * diag).asDiagonal()) * truth.v_full.leftCols(d).transpose();
    y *= delta;
    y += truth.l_star;
    reps[static_cast<std::size_t>(i)] = std::move(y);
  }
  return ObservationSet::replicates(std::move(reps));
}

ObservationSet gen_linear(const SyntheticTruth& truth, Index n, double sigma, std::uint64_t seed) {
  if (n < 1) throw InvalidInput("gen_linear: n must be positive");
  if (!(sigma >= 0.0)) throw InvalidInput("gen_linear: sigma must be non-negative");
  const Index p1 = truth.l_star.rows();
  const Index p2 = truth.l_star.cols();
  Rng rng(seed);
  Matrix sensing = standard_normal(n, p1 * p2, rng);
  const Eigen::Map<const Vector> vl(truth.l_star.data(), p1 * p2);
  Vector y = sensing * vl + sigma * standard_normal(n, rng);
  return ObservationSet::linear(p1, p2, std::move(sensing), std::move(y));
}

Matrix gen_denoise_mean(const SyntheticTruth& truth, Index n, double delta, double gamma, std::uint64_t seed) {
  if (n < 1) throw InvalidInput("gen_denoise_mean: n must be positive");
  if (!(delta >= 0.0) || !(gamma >= 0.0)) throw InvalidInput("gen_denoise_mean: delta and gamma must be non-negative");
  const Index p1 = truth.l_star.rows();
  const Index p2 = truth.l_star.cols();
  const Index d = std::min(p1, p2);
  const double sd = 1.0 / std::sqrt(static_cast<double>(n));
  Rng rng(seed);
  const Vector diag = sd * standard_normal(d, rng);
  Matrix y = sd * standard_normal(p1, p2, rng);
  if (gamma > 0.0)
    y.noalias() += (truth.u_full.leftCols(d) * (gamma * diag).asDiagonal()) * truth.v_full.leftCols(d).transpose();
  return truth.l_star + delta * y;
}

ObservationSet draw_dataset(const SyntheticTruth& truth, const DataModel& model, Index units, std::uint64_t seed) {
  switch (model.model) {
    case ObservationModel::entrywise: return gen_completion(truth, units, model.noise, seed);
    case ObservationModel::replicate: return gen_denoise(truth, units, model.noise, model.gamma, seed);
    case ObservationModel::linear: return gen_linear(truth, units, model.noise, seed);
  }
  throw InvalidInput("draw_dataset: unknown model");
}

namespace {

// Monte-Carlo estimate of SNR * scale, which does not depend on the scale.
// Every definition is of the form E[signal / (scale * noise)].
double snr_constant(const SyntheticTruth& truth, const SnrModel& model, int mc_reps, std::uint64_t seed) {
  const Index p1 = truth.l_star.rows();
  const Index p2 = truth.l_star.cols();
  double acc = 0.0;
  switch (model.definition) {
    case SnrDefinition::frobenius: {
      if (model.m < 1) throw InvalidInput("calibrate_snr: frobenius definition needs m >= 1");
      const double num = truth.l_star.norm();
      for (int r = 0; r < mc_reps; ++r) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
        acc += num / standard_normal(model.m, rng).norm();
      }
      return acc / mc_reps;
    }
    case SnrDefinition::spectral: {
      const Vector sv = thin_svd(truth.l_star).s;
      const double num = sv.size() ? sv(0) : 0.0;
      const Index d = std::min(p1, p2);
      // U* (gamma D + U*' eps V*) V*' has the law of U* (gamma D + eps') V*'.
      for (int r = 0; r < mc_reps; ++r) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
        const Vector diag = standard_normal(d, rng);
        Matrix x = standard_normal(p1, p2, rng);
        x.diagonal() += model.gamma * diag;
        const Matrix gram = p1 <= p2 ? Matrix(x * x.transpose()) : Matrix(x.transpose() * x);
        Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
        acc += num / std::sqrt(std::max(es.eigenvalues().maxCoeff(), 0.0));
      }
      return acc / mc_reps;
    }
    case SnrDefinition::rms_scalar: {
      double sig = 0.0;
      double noise = 0.0;
      const Eigen::Map<const Vector> vl(truth.l_star.data(), p1 * p2);
      for (int r = 0; r < mc_reps; ++r) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
        const Vector a = standard_normal(p1 * p2, rng);
        const double z = standard_normal(1, rng)(0);
        sig += std::pow(a.dot(vl), 2);
        noise += z * z;
      }
      return std::sqrt(sig / noise);
    }
  }
  return 0.0;
}

}  // namespace

double achieved_snr(const SyntheticTruth& truth, const SnrModel& model, double scale, int mc_reps, std::uint64_t seed) {
  if (!(scale > 0.0)) throw InvalidInput("achieved_snr: scale must be positive");
  if (mc_reps < 1) throw InvalidInput("achieved_snr: mc_reps must be positive");
  return snr_constant(truth, model, mc_reps, seed) / scale;
}

double calibrate_snr(const SyntheticTruth& truth, const SnrModel& model, double target_snr, int mc_reps,
                     std::uint64_t seed) {
  if (!(target_snr > 0.0) || !std::isfinite(target_snr)) throw InvalidInput("calibrate_snr: target must be positive");
  if (mc_reps < 1) throw InvalidInput("calibrate_snr: mc_reps must be positive");
  const double c = snr_constant(truth, model, mc_reps, seed);
  if (!(c > 0.0) || !std::isfinite(c)) throw NumericError("calibrate_snr: signal has zero norm");
  auto snr = [&](double s) { return c / s; };
  // Geometric bisection on log(scale); the same draws are reused at every
  // step, so the achieved SNR is a deterministic decreasing function.
  double lo = 1.0;
  double hi = 1.0;
  while (snr(lo) < target_snr) lo *= 0.5;
  while (snr(hi) > target_snr) hi *= 2.0;
  for (int step = 0; step < 100; ++step) {
    const double mid = std::sqrt(lo * hi);
    const double s = snr(mid);
    if (std::abs(s / target_snr - 1.0) < 1e-6) return mid;
    if (s > target_snr)
      lo = mid;
    else
      hi = mid;
  }
  const double mid = std::sqrt(lo * hi);
  if (std::abs(snr(mid) / target_snr - 1.0) > 0.01) throw NumericError("calibrate_snr: bisection did not converge");
  return mid;
}

}  // namespace ss3
