#include "ss3/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ss3/errors.hpp"
#include "ss3/log.hpp"
#include "ss3/random.hpp"

namespace ss3 {

const char* to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::svt: return "svt";
    case EstimatorKind::als: return "als";
    case EstimatorKind::spectral: return "spectral";
    case EstimatorKind::pca_column: return "pca";
  }
  return "?";
}

EstimatorKind parse_estimator_kind(const std::string& s) {
  if (s == "svt") return EstimatorKind::svt;
  if (s == "als") return EstimatorKind::als;
  if (s == "spectral") return EstimatorKind::spectral;
  if (s == "pca" || s == "pca_column") return EstimatorKind::pca_column;
  throw InvalidInput("unknown estimator '" + s + "' (expected svt, als, spectral or pca)");
}

void EstimatorConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidInput("estimator: lambda must be finite and >= 0");
  if (k < 0) throw InvalidInput("estimator: k must be >= 0");
  if (max_iters < 1) throw InvalidInput("estimator: max_iters must be >= 1");
  if (!(conv_tol > 0.0)) throw InvalidInput("estimator: conv_tol must be > 0");
  if (!(rank_tol > 0.0)) throw InvalidInput("estimator: rank_tol must be > 0");
}

namespace {

// Singular-value soft-thresholding. Uses the eigendecomposition of the smaller
// Gram matrix; falls back to a direct SVD when the threshold is so small that
// squared singular values near it are below Gram precision.
Matrix soft_threshold(const Matrix& z, double thr, double& nuclear) {
  const bool tall = z.rows() >= z.cols();
  const Matrix g = tall ? Matrix(z.transpose() * z) : Matrix(z * z.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(g);
  if (es.info() != Eigen::Success) throw NumericError("svt: eigensolver failed");
  const Vector& ev = es.eigenvalues();
  const Index n = ev.size();
  const double smax = std::sqrt(std::max(ev(n - 1), 0.0));
  nuclear = 0.0;
  if (smax <= thr) return Matrix::Zero(z.rows(), z.cols());
  if (thr < 1e-6 * smax) {
    const ThinSvd svd = thin_svd(z);
    Index m = 0;
    while (m < svd.s.size() && svd.s(m) > thr) ++m;
    const Vector shrunk = (svd.s.head(m).array() - thr).matrix();
    nuclear = shrunk.sum();
    return svd.u.leftCols(m) * shrunk.asDiagonal() * svd.v.leftCols(m).transpose();
  }
  Index m = 0;
  while (m < n && std::sqrt(std::max(ev(n - 1 - m), 0.0)) > thr) ++m;
  const Matrix w = es.eigenvectors().rightCols(m);
  Vector scale(m);
  for (Index c = 0; c < m; ++c) {
    const double s = std::sqrt(std::max(ev(n - m + c), 0.0));
    scale(c) = (s - thr) / s;
    nuclear += s - thr;
  }
  if (tall) return (z * w) * scale.asDiagonal() * w.transpose();
  return w * scale.asDiagonal() * (w.transpose() * z);
}

struct Mask {
  Matrix mask;
  Matrix y;  // observed values, zero elsewhere
};

Mask dense_mask(const ObservationSet& obs) {
  Mask m{Matrix::Zero(obs.p1(), obs.p2()), Matrix::Zero(obs.p1(), obs.p2())};
  for (const Entry& e : obs.entries()) {
    m.mask(e.i, e.j) = 1.0;
    m.y(e.i, e.j) = e.y;
  }
  return m;
}

void require_model(const ObservationSet& obs, ObservationModel model, const char* who) {
  if (obs.model() != model)
    throw InvalidInput(std::string(who) + ": requires " + to_string(model) + " observations, got " +
                       to_string(obs.model()));
}

}  // namespace

// -------------------------------------------------------------------- SVT

SvtResult svt_complete(const ObservationSet& obs, const EstimatorConfig& cfg, const Matrix* warm_start,
                       bool record_objective) {
  cfg.validate();
  require_model(obs, ObservationModel::entrywise, "svt_complete");
  if (!(cfg.lambda > 0.0)) throw InvalidInput("svt_complete: lambda must be > 0");
  const Mask m = dense_mask(obs);
  const Matrix unobserved = Matrix::Ones(obs.p1(), obs.p2()) - m.mask;
  const double thr = cfg.lambda / 2.0;

  SvtResult res;
  Matrix x = warm_start ? *warm_start : Matrix::Zero(obs.p1(), obs.p2());
  if (x.rows() != obs.p1() || x.cols() != obs.p2()) throw DimensionMismatch("svt_complete: warm start shape");
  double fx;
  {
    const double nuc = x.isZero(0.0) ? 0.0 : thin_svd(x).s.sum();
    fx = (m.mask.cwiseProduct(x) - m.y).squaredNorm() + cfg.lambda * nuc;
  }
  Matrix yk = x;
  double tk = 1.0;
  if (record_objective) res.objective_trace.push_back(fx);
  for (int it = 1; it <= cfg.max_iters; ++it) {
    // gradient step of size 1/2 on the sampled loss, then the prox
    const Matrix z = m.y + unobserved.cwiseProduct(yk);
    double nuc = 0.0;
    const Matrix zk = soft_threshold(z, thr, nuc);
    const double fz = (m.mask.cwiseProduct(zk) - m.y).squaredNorm() + cfg.lambda * nuc;
    if (!std::isfinite(fz)) throw NumericError("svt_complete: non-finite objective");
    res.iterations = it;
    if (!cfg.accelerate) {
      const double change = std::abs(fx - fz);
      x = zk;
      yk = zk;
      fx = fz;
      if (record_objective) res.objective_trace.push_back(fx);
      if (change <= cfg.conv_tol * std::max(std::abs(fz), 1e-300)) {
        res.converged = true;
        break;
      }
      continue;
    }
    const double tn = (1.0 + std::sqrt(1.0 + 4.0 * tk * tk)) / 2.0;
    const bool accept = fz <= fx;
    const Matrix xn = accept ? zk : x;
    const double fn = std::min(fz, fx);
    yk = xn + (tk / tn) * (zk - xn) + ((tk - 1.0) / tn) * (xn - x);
    const double change = std::abs(fx - fn);
    x = xn;
    tk = tn;
    fx = fn;
    if (record_objective) res.objective_trace.push_back(fx);
    if (accept && it > 2 && change <= cfg.conv_tol * std::max(std::abs(fn), 1e-300)) {
      res.converged = true;
      break;
    }
  }
  res.estimate = std::move(x);
  res.objective = fx;
  return res;
}

// -------------------------------------------------------------------- ALS

namespace {

double als_objective(const ObservationSet& obs, const Matrix& u, const Matrix& v, double lambda) {
  double loss = 0.0;
  if (obs.model() == ObservationModel::entrywise) {
    for (const Entry& e : obs.entries()) {
      const double r = e.y - u.row(e.i).dot(v.row(e.j));
      loss += r * r;
    }
  } else {
    const Matrix l = u * v.transpose();
    const Vector pred = obs.sensing() * Eigen::Map<const Vector>(l.data(), l.size());
    loss = (obs.values() - pred).squaredNorm();
  }
  return loss + lambda * (u.squaredNorm() + v.squaredNorm());
}

// Solves (A + lambda I) x = b; pseudo-inverse when lambda = 0.
Vector ridge_solve(const Matrix& a, const Vector& b, double lambda, bool& degenerate) {
  if (lambda > 0.0) {
    Matrix reg = a;
    reg.diagonal().array() += lambda;
    Eigen::LLT<Matrix> llt(reg);
    if (llt.info() == Eigen::Success) return llt.solve(b);
  }
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(a);
  if (cod.rank() < a.rows()) degenerate = true;
  return cod.solve(b);
}

// Row-wise updates of `target` with `other` fixed; entrywise model.
// When `by_row` the unknown is U (rows indexed by i), otherwise V.
void als_entrywise_update(const std::vector<std::vector<std::pair<Index, double>>>& groups, const Matrix& other,
                          Matrix& target, double lambda, bool& degenerate) {
  const Index k = other.cols();
  for (Index r = 0; r < target.rows(); ++r) {
    const auto& g = groups[static_cast<std::size_t>(r)];
    Matrix a = Matrix::Zero(k, k);
    Vector b = Vector::Zero(k);
    for (const auto& [c, y] : g) {
      a.selfadjointView<Eigen::Lower>().rankUpdate(other.row(c).transpose());
      b += y * other.row(c).transpose();
    }
    if (g.empty() && lambda > 0.0) {
      target.row(r).setZero();
      continue;
    }
    const Matrix full = a.selfadjointView<Eigen::Lower>();
    target.row(r) = ridge_solve(full, b, lambda, degenerate).transpose();
  }
}

// Linear model: y_k = <A_k, U V'> = <A_k V, U>. `stack` holds row (k, a) = A_k(a, :)
// so stack * V gives every A_k V at once.
Matrix linear_design_for_u(const Matrix& stack, Index n, Index p1, const Matrix& v) {
  const Matrix av = stack * v;  // (n p1) x k, row k*p1 + a
  const Index k = v.cols();
  Matrix x(n, p1 * k);
  for (Index s = 0; s < n; ++s)
    for (Index c = 0; c < k; ++c) x.block(s, c * p1, 1, p1) = av.block(s * p1, c, p1, 1).transpose();
  return x;
}

}  // namespace

AlsResult als_complete(const ObservationSet& obs, const EstimatorConfig& cfg, bool record_objective) {
  cfg.validate();
  if (cfg.k < 1) throw InvalidInput("als_complete: k must be >= 1");
  if (obs.model() == ObservationModel::replicate) throw InvalidInput("als_complete: requires entrywise or linear observations");
  const Index p1 = obs.p1();
  const Index p2 = obs.p2();
  const Index k = cfg.k;

  Rng rng(cfg.seed);
  const double init_sd = 1.0 / std::sqrt(static_cast<double>(k));
  AlsResult res;
  res.u = standard_normal(p1, k, rng) * init_sd;
  res.v = standard_normal(p2, k, rng) * init_sd;

  std::vector<std::vector<std::pair<Index, double>>> by_row;
  std::vector<std::vector<std::pair<Index, double>>> by_col;
  Matrix stack_u;  // rows (s, a): A_s(a, :)      -> design for U
  Matrix stack_v;  // rows (s, b): A_s(:, b)'     -> design for V
  const Index n = obs.size();
  if (obs.model() == ObservationModel::entrywise) {
    by_row.resize(static_cast<std::size_t>(p1));
    by_col.resize(static_cast<std::size_t>(p2));
    for (const Entry& e : obs.entries()) {
      by_row[static_cast<std::size_t>(e.i)].push_back({e.j, e.y});
      by_col[static_cast<std::size_t>(e.j)].push_back({e.i, e.y});
    }
  } else {
    stack_u.resize(n * p1, p2);
    stack_v.resize(n * p2, p1);
    for (Index s = 0; s < n; ++s) {
      const Matrix a = obs.functional(s);
      stack_u.middleRows(s * p1, p1) = a;
      stack_v.middleRows(s * p2, p2) = a.transpose();
    }
  }

  double prev = als_objective(obs, res.u, res.v, cfg.lambda);
  if (record_objective) res.objective_trace.push_back(prev);
  for (int sweep = 1; sweep <= cfg.max_iters; ++sweep) {
    for (int half = 0; half < 2; ++half) {
      if (obs.model() == ObservationModel::entrywise) {
        if (half == 0)
          als_entrywise_update(by_row, res.v, res.u, cfg.lambda, res.degenerate);
        else
          als_entrywise_update(by_col, res.u, res.v, cfg.lambda, res.degenerate);
      } else {
        const bool solve_u = half == 0;
        const Index pa = solve_u ? p1 : p2;
        const Matrix x = linear_design_for_u(solve_u ? stack_u : stack_v, n, pa, solve_u ? res.v : res.u);
        Matrix gram = Matrix::Zero(x.cols(), x.cols());
        gram.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
        const Matrix full = gram.selfadjointView<Eigen::Lower>();
        const Vector sol = ridge_solve(full, x.transpose() * obs.values(), cfg.lambda, res.degenerate);
        (solve_u ? res.u : res.v) = Eigen::Map<const Matrix>(sol.data(), pa, k);
      }
      if (record_objective) res.objective_trace.push_back(als_objective(obs, res.u, res.v, cfg.lambda));
    }
    const double cur = record_objective ? res.objective_trace.back() : als_objective(obs, res.u, res.v, cfg.lambda);
    if (!std::isfinite(cur)) throw NumericError("als_complete: non-finite objective");
    res.sweeps = sweep;
    res.objective = cur;
    if (std::abs(prev - cur) <= cfg.conv_tol * std::max(std::abs(prev), 1e-300)) {
      res.converged = true;
      break;
    }
    prev = cur;
  }
  if (res.degenerate) warn("als_complete: singular normal equations solved by pseudo-inverse");
  return res;
}

// ------------------------------------------------------ spectral and PCA

Matrix spectral_denoise(const ObservationSet& obs, Index k) {
  require_model(obs, ObservationModel::replicate, "spectral_denoise");
  if (k < 0) throw InvalidInput("spectral_denoise: k must be >= 0");
  const Index kmax = std::min(obs.p1(), obs.p2());
  if (k > kmax) {
    warn("spectral_denoise: k exceeds min(p1,p2); clamped");
    k = kmax;
  }
  const Matrix mean = obs.replicate_mean();
  if (k == 0) return Matrix::Zero(obs.p1(), obs.p2());
  const ThinSvd svd = thin_svd(mean);
  return svd.u.leftCols(k) * svd.s.head(k).asDiagonal() * svd.v.leftCols(k).transpose();
}

Subspace pca_column(const ObservationSet& obs, Index k) {
  require_model(obs, ObservationModel::replicate, "pca_column");
  const Index p = obs.p1();
  if (k < 0 || k > p) throw InvalidInput("pca_column: k must lie in [0, p]");
  Matrix second = Matrix::Zero(p, p);
  for (const Matrix& y : obs.replicate_list()) second.selfadjointView<Eigen::Lower>().rankUpdate(y);
  const Matrix full = Matrix(second.selfadjointView<Eigen::Lower>()) / static_cast<double>(obs.size());
  const SymmetricEigen eig = eigen_descending(full);
  return Subspace(eig.vectors.leftCols(k));
}

// ---------------------------------------------------------- tangent / refit

TangentSpace extract_tangent(const Matrix& l, double rank_tol) {
  if (!l.allFinite()) throw NumericError("extract_tangent: non-finite estimate");
  if (l.rows() < 1 || l.cols() < 1) throw InvalidInput("extract_tangent: empty matrix");
  const ThinSvd svd = thin_svd(l);
  Index r = 0;
  if (svd.s.size() > 0 && svd.s(0) > 0.0)
    while (r < svd.s.size() && svd.s(r) > rank_tol * svd.s(0)) ++r;
  return TangentSpace(Subspace(svd.u.leftCols(r)), Subspace(svd.v.leftCols(r)));
}

Matrix refit(const TangentSpace& t, const ObservationSet& obs) {
  if (t.p1() != obs.p1() || t.p2() != obs.p2()) throw DimensionMismatch("refit: tangent space does not match observations");
  const Index k = t.rank();
  if (k == 0) return Matrix::Zero(obs.p1(), obs.p2());
  const Matrix& uc = t.col().basis();
  const Matrix& ur = t.row().basis();
  if (obs.model() == ObservationModel::replicate) {
    const Matrix m = uc.transpose() * obs.replicate_mean() * ur;
    return uc * m * ur.transpose();
  }
  // least squares in vec(M), column-major: coefficient of M(a,b) is U_C(i,a) U_R(j,b)
  const Index n = obs.size();
  Matrix x(n, k * k);
  Vector y(n);
  if (obs.model() == ObservationModel::entrywise) {
    for (Index s = 0; s < n; ++s) {
      const Entry& e = obs.entries()[static_cast<std::size_t>(s)];
      for (Index b = 0; b < k; ++b)
        for (Index a = 0; a < k; ++a) x(s, a + k * b) = uc(e.i, a) * ur(e.j, b);
      y(s) = e.y;
    }
  } else {
    for (Index s = 0; s < n; ++s) {
      const Matrix c = uc.transpose() * obs.functional(s) * ur;
      x.row(s) = Eigen::Map<const Vector>(c.data(), c.size()).transpose();
    }
    y = obs.values();
  }
  Matrix gram = x.transpose() * x;
  gram.diagonal().array() += 1e-10;
  const Vector sol = gram.ldlt().solve(x.transpose() * y);
  const Matrix m = Eigen::Map<const Matrix>(sol.data(), k, k);
  return uc * m * ur.transpose();
}

Matrix estimate_matrix(const ObservationSet& obs, const EstimatorConfig& cfg) {
  switch (cfg.kind) {
    case EstimatorKind::svt: return svt_complete(obs, cfg).estimate;
    case EstimatorKind::als: return als_complete(obs, cfg).estimate();
    case EstimatorKind::spectral: return spectral_denoise(obs, cfg.k);
    case EstimatorKind::pca_column: break;
  }
  throw InvalidInput("estimate_matrix: the pca estimator produces a column space, not a matrix");
}

TangentSpace estimate_tangent(const ObservationSet& obs, const EstimatorConfig& cfg) {
  return extract_tangent(estimate_matrix(obs, cfg), cfg.rank_tol);
}

Subspace estimate_column_space(const ObservationSet& obs, const EstimatorConfig& cfg) {
  if (cfg.kind == EstimatorKind::pca_column) return pca_column(obs, cfg.k);
  return estimate_tangent(obs, cfg).col();
}

// ------------------------------------------------------ lambda selection

double prediction_mse(const Matrix& l, const ObservationSet& held_out) {
  if (l.rows() != held_out.p1() || l.cols() != held_out.p2()) throw DimensionMismatch("prediction_mse: shape mismatch");
  double sse = 0.0;
  switch (held_out.model()) {
    case ObservationModel::entrywise:
      for (const Entry& e : held_out.entries()) sse += (l(e.i, e.j) - e.y) * (l(e.i, e.j) - e.y);
      break;
    case ObservationModel::replicate:
      for (const Matrix& r : held_out.replicate_list()) sse += (l - r).squaredNorm() / static_cast<double>(l.size());
      break;
    case ObservationModel::linear:
      sse = (held_out.values() - held_out.sensing() * Eigen::Map<const Vector>(l.data(), l.size())).squaredNorm();
      break;
  }
  return sse / static_cast<double>(held_out.size());
}

double lambda_max(const ObservationSet& obs, EstimatorKind kind) {
  Matrix back = Matrix::Zero(obs.p1(), obs.p2());
  if (obs.model() == ObservationModel::entrywise) {
    for (const Entry& e : obs.entries()) back(e.i, e.j) = e.y;
  } else if (obs.model() == ObservationModel::linear) {
    const Vector v = obs.sensing().transpose() * obs.values();
    back = Eigen::Map<const Matrix>(v.data(), obs.p1(), obs.p2());
  } else {
    back = obs.replicate_mean();
  }
  const double s = thin_svd(back).s(0);
  // svt: zero is optimal iff lambda >= 2 ||A*(y)||_2; als: iff lambda >= ||A*(y)||_2
  return kind == EstimatorKind::svt ? 2.0 * s : s;
}

std::vector<double> log_grid(double hi, double lo, int n) {
  if (!(hi > 0.0) || !(lo > 0.0) || lo > hi || n < 1) throw InvalidInput("log_grid: need 0 < lo <= hi and n >= 1");
  std::vector<double> g(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double t = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
    g[static_cast<std::size_t>(i)] = std::exp(std::log(hi) + t * (std::log(lo) - std::log(hi)));
  }
  return g;
}

namespace {

std::vector<double> path_mse(const ObservationSet& train, const ObservationSet& test, const EstimatorConfig& cfg,
                             const std::vector<double>& sorted_desc) {
  std::vector<double> mse;
  Matrix warm;
  bool have_warm = false;
  for (double lam : sorted_desc) {
    EstimatorConfig c = cfg;
    c.lambda = lam;
    Matrix est;
    if (cfg.kind == EstimatorKind::svt) {
      SvtResult r = svt_complete(train, c, have_warm ? &warm : nullptr);
      est = r.estimate;
      warm = std::move(r.estimate);
      have_warm = true;
    } else {
      est = estimate_matrix(train, c);
    }
    mse.push_back(prediction_mse(est, test));
  }
  return mse;
}

LambdaSelection pick(const std::vector<double>& sorted_desc, std::vector<double> mse) {
  LambdaSelection sel;
  sel.grid = sorted_desc;
  sel.mse = std::move(mse);
  std::size_t best = 0;
  for (std::size_t i = 1; i < sel.mse.size(); ++i)
    if (sel.mse[i] < sel.mse[best]) best = i;
  sel.lambda = sel.grid[best];
  return sel;
}

}  // namespace

LambdaSelection select_lambda_cv(const ObservationSet& obs, const EstimatorConfig& cfg, const std::vector<double>& grid,
                                 int folds, std::uint64_t seed) {
  if (grid.empty()) throw InvalidInput("select_lambda_cv: empty grid");
  if (folds < 2 || folds > obs.size()) throw InvalidInput("select_lambda_cv: folds must lie in [2, n]");
  std::vector<double> sorted(grid);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  std::vector<Index> perm(static_cast<std::size_t>(obs.size()));
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> total(sorted.size(), 0.0);
  for (int f = 0; f < folds; ++f) {
    std::vector<Index> train;
    std::vector<Index> test;
    for (std::size_t s = 0; s < perm.size(); ++s) (static_cast<int>(s % static_cast<std::size_t>(folds)) == f ? test : train).push_back(perm[s]);
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    const std::vector<double> mse = path_mse(obs.subset(train), obs.subset(test), cfg, sorted);
    for (std::size_t i = 0; i < mse.size(); ++i) total[i] += mse[i] / folds;
  }
  return pick(sorted, std::move(total));
}

LambdaSelection select_lambda_holdout(const ObservationSet& train, const ObservationSet& validation,
                                      const EstimatorConfig& cfg, const std::vector<double>& grid) {
  if (grid.empty()) throw InvalidInput("select_lambda_holdout: empty grid");
  std::vector<double> sorted(grid);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  return pick(sorted, path_mse(train, validation, cfg, sorted));
}

}  // namespace ss3
