#include "ss3/stability.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "ss3/errors.hpp"
#include "ss3/log.hpp"
#include "ss3/parallel.hpp"
#include "ss3/random.hpp"
#include "ss3/sampling.hpp"

namespace ss3 {

namespace {

constexpr double kTieTol = 1e-10;

// Compensated running sum, one accumulator per matrix entry.
class KahanSum {
 public:
  KahanSum(Index rows, Index cols) : sum_(Matrix::Zero(rows, cols)), comp_(Matrix::Zero(rows, cols)) {}
  void add(const Matrix& x) {
    const Matrix y = x - comp_;
    const Matrix t = sum_ + y;
    comp_ = (t - sum_) - y;
    sum_ = t;
  }
  const Matrix& sum() const { return sum_; }

 private:
  Matrix sum_;
  Matrix comp_;
};

// Descending eigenpairs; eigenvalues tied within kTieTol keep the solver's
// column order.
SymmetricEigen ordered_eigen(const Matrix& sym) {
  SymmetricEigen e = eigen_descending(sym);
  const Index n = e.values.size();
  Index start = 0;
  while (start < n) {
    Index end = start + 1;
    while (end < n && std::abs(e.values(end) - e.values(end - 1)) <= kTieTol) ++end;
    if (end - start > 1) {
      e.vectors.middleCols(start, end - start) = e.vectors.middleCols(start, end - start).rowwise().reverse().eval();
      e.values.segment(start, end - start).reverseInPlace();
    }
    start = end;
  }
  return e;
}

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

// Quadratic form of P_avg in a fixed pair of orthonormal frames. The bag
// projectors are rotated once; the Gram matrix on T(r) is then
//   G = Xbar_ik d_jl + d_ik Ybar_jl - (1/B) sum_l X^l_ik Y^l_jl
// over the support {(i, j) : i < r or j < r}.
class FrameGram {
 public:
  FrameGram(const AveragedProjectors& avg, const Matrix& fc, const Matrix& fr) {
    const std::size_t b = avg.tangents.size();
    x_.resize(b);
    y_.resize(b);
    KahanSum xs(fc.cols(), fc.cols());
    KahanSum ys(fr.cols(), fr.cols());
    for (std::size_t l = 0; l < b; ++l) {
      const Matrix w = fc.transpose() * avg.tangents[l].col().basis();
      const Matrix z = fr.transpose() * avg.tangents[l].row().basis();
      x_[l] = w * w.transpose();
      y_[l] = z * z.transpose();
      xs.add(x_[l]);
      ys.add(y_[l]);
    }
    xbar_ = symmetrize(xs.sum() / static_cast<double>(b));
    ybar_ = symmetrize(ys.sum() / static_cast<double>(b));
    inv_b_ = 1.0 / static_cast<double>(b);
  }

  Index p1() const { return xbar_.rows(); }
  Index p2() const { return ybar_.rows(); }

  Matrix gram(Index r) const {
    std::vector<Index> is;
    std::vector<Index> js;
    for (Index j = 0; j < p2(); ++j)
      for (Index i = 0; i < r; ++i) {
        is.push_back(i);
        js.push_back(j);
      }
    for (Index j = 0; j < r; ++j)
      for (Index i = r; i < p1(); ++i) {
        is.push_back(i);
        js.push_back(j);
      }
    const Index d = static_cast<Index>(is.size());
    Matrix g = Matrix::Zero(d, d);
    for (std::size_t l = 0; l < x_.size(); ++l) {
      const Matrix& x = x_[l];
      const Matrix& y = y_[l];
      for (Index b = 0; b < d; ++b) {
        const Index ib = is[static_cast<std::size_t>(b)];
        const Index jb = js[static_cast<std::size_t>(b)];
        double* col = g.col(b).data();
        for (Index a = b; a < d; ++a)
          col[a] += x(is[static_cast<std::size_t>(a)], ib) * y(js[static_cast<std::size_t>(a)], jb);
      }
    }
    g *= -inv_b_;
    for (Index b = 0; b < d; ++b) {
      const Index ib = is[static_cast<std::size_t>(b)];
      const Index jb = js[static_cast<std::size_t>(b)];
      for (Index a = b; a < d; ++a) {
        const Index ia = is[static_cast<std::size_t>(a)];
        const Index ja = js[static_cast<std::size_t>(a)];
        if (ja == jb) g(a, b) += xbar_(ia, ib);
        if (ia == ib) g(a, b) += ybar_(ja, jb);
      }
    }
    return g.selfadjointView<Eigen::Lower>();
  }

  double sigma_min(Index r) const {
    if (r == 0) return 1.0;
    const Matrix g = gram(r);
    Eigen::SelfAdjointEigenSolver<Matrix> es(g, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericError("stable_membership: eigen solver failed");
    return es.eigenvalues()(0);
  }

 private:
  std::vector<Matrix> x_;
  std::vector<Matrix> y_;
  Matrix xbar_;
  Matrix ybar_;
  double inv_b_ = 1.0;
};

void check_alpha(double alpha, const char* who) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput(std::string(who) + ": alpha must lie in (0, 1)");
}

Matrix frame(const Subspace& s) {
  Matrix f(s.ambient_dim(), s.ambient_dim());
  f.leftCols(s.rank()) = s.basis();
  f.rightCols(s.ambient_dim() - s.rank()) = s.complement_basis();
  return f;
}

TangentSpace leading_tangent(const SymmetricEigen& ec, const SymmetricEigen& er, Index r) {
  return TangentSpace(Subspace(ec.vectors.leftCols(r)), Subspace(er.vectors.leftCols(r)));
}

}  // namespace

double AveragedProjectors::trace() const {
  double s = 0.0;
  for (const TangentSpace& t : tangents) s += static_cast<double>(t.dim());
  return s / static_cast<double>(tangents.size());
}

Matrix AveragedProjectors::apply(const Matrix& m) const {
  if (m.rows() != p1() || m.cols() != p2()) throw DimensionMismatch("AveragedProjectors::apply: shape mismatch");
  KahanSum acc(p1(), p2());
  for (const TangentSpace& t : tangents) acc.add(tangent_apply(t, m));
  return acc.sum() / static_cast<double>(tangents.size());
}

AveragedProjectors average_projectors(std::vector<TangentSpace> tangents) {
  if (tangents.empty()) throw InvalidInput("average_projectors: no tangent spaces");
  const Index p1 = tangents.front().p1();
  const Index p2 = tangents.front().p2();
  KahanSum col(p1, p1);
  KahanSum row(p2, p2);
  for (const TangentSpace& t : tangents) {
    if (t.p1() != p1 || t.p2() != p2) throw DimensionMismatch("average_projectors: inconsistent dimensions");
    col.add(t.col().projector());
    row.add(t.row().projector());
  }
  AveragedProjectors avg;
  avg.b = static_cast<Index>(tangents.size());
  avg.p_avg_col = symmetrize(col.sum() / static_cast<double>(avg.b));
  avg.p_avg_row = symmetrize(row.sum() / static_cast<double>(avg.b));
  avg.tangents = std::move(tangents);
  return avg;
}

Matrix average_column_projector(const std::vector<Subspace>& spaces) {
  if (spaces.empty()) throw InvalidInput("average_column_projector: no subspaces");
  const Index p = spaces.front().ambient_dim();
  KahanSum acc(p, p);
  for (const Subspace& s : spaces) {
    if (s.ambient_dim() != p) throw DimensionMismatch("average_column_projector: inconsistent dimensions");
    acc.add(s.projector());
  }
  return symmetrize(acc.sum() / static_cast<double>(spaces.size()));
}

Matrix stable_gram(const TangentSpace& t, const AveragedProjectors& avg) {
  if (t.p1() != avg.p1() || t.p2() != avg.p2()) throw DimensionMismatch("stable_membership: dimension mismatch");
  return FrameGram(avg, frame(t.col()), frame(t.row())).gram(t.rank());
}

Membership stable_membership(const TangentSpace& t, const AveragedProjectors& avg, double alpha) {
  check_alpha(alpha, "stable_membership");
  if (t.p1() != avg.p1() || t.p2() != avg.p2()) throw DimensionMismatch("stable_membership: dimension mismatch");
  Membership m;
  if (t.rank() == 0) {
    m.member = true;
    m.sigma_min = 1.0;
    return m;
  }
  m.sigma_min = FrameGram(avg, frame(t.col()), frame(t.row())).sigma_min(t.rank());
  m.member = m.sigma_min >= alpha;
  return m;
}

const char* to_string(StabilityMode m) {
  switch (m) {
    case StabilityMode::tangent: return "tangent";
    case StabilityMode::tangent_modified: return "tangent-modified";
    case StabilityMode::column: return "column";
  }
  return "?";
}

StabilityMode parse_stability_mode(const std::string& s) {
  if (s == "tangent") return StabilityMode::tangent;
  if (s == "tangent-modified" || s == "modified") return StabilityMode::tangent_modified;
  if (s == "column") return StabilityMode::column;
  throw InvalidInput("unknown stability mode: " + s);
}

StabilityReport algorithm1(const AveragedProjectors& avg, double alpha, const SearchOptions& opts) {
  check_alpha(alpha, "algorithm1");
  const SymmetricEigen ec = ordered_eigen(avg.p_avg_col);
  const SymmetricEigen er = ordered_eigen(avg.p_avg_row);
  const FrameGram fg(avg, ec.vectors, er.vectors);
  const Index rmax = std::min(avg.p1(), avg.p2());

  StabilityReport rep;
  rep.mode = StabilityMode::tangent;
  rep.alpha = alpha;
  rep.membership_level = alpha;
  rep.trace_p_avg = avg.trace();
  rep.eig_col = ec.values;
  rep.eig_row = er.values;
  rep.bags_used = avg.b;

  std::vector<std::optional<double>> sig(static_cast<std::size_t>(rmax + 1));
  sig[0] = 1.0;
  auto eval = [&](Index r) {
    auto& s = sig[static_cast<std::size_t>(r)];
    if (!s) s = fg.sigma_min(r);
    return *s;
  };

  Index best = 0;
  if (opts.full_curve) {
    for (Index r = 1; r <= rmax; ++r) eval(r);
    while (best < rmax && eval(best + 1) >= alpha) ++best;
  } else if (opts.search == RankSearch::scan) {
    while (best < rmax && eval(best + 1) >= alpha) ++best;
  } else {
    // sigma_min is non-increasing in r, so membership is a prefix property
    Index lo = 0;
    Index hi = rmax + 1;  // lo is a member, hi is not (or out of range)
    while (hi - lo > 1) {
      const Index mid = lo + (hi - lo) / 2;
      if (eval(mid) >= alpha)
        lo = mid;
      else
        hi = mid;
    }
    best = lo;
  }
  for (Index r = 0; r <= rmax; ++r)
    if (sig[static_cast<std::size_t>(r)]) rep.sigma_min_curve.emplace_back(r, *sig[static_cast<std::size_t>(r)]);

  rep.r_selected = best;
  rep.selected = leading_tangent(ec, er, best);
  rep.selected_col = rep.selected.col();
  return rep;
}

StabilityReport algorithm1_modified(const AveragedProjectors& avg, double alpha, bool with_sigma) {
  check_alpha(alpha, "algorithm1_modified");
  const SymmetricEigen ec = ordered_eigen(avg.p_avg_col);
  const SymmetricEigen er = ordered_eigen(avg.p_avg_row);
  const Index rmax = std::min(avg.p1(), avg.p2());
  Index r = 0;
  while (r < rmax && ec.values(r) >= alpha && er.values(r) >= alpha) ++r;

  StabilityReport rep;
  rep.mode = StabilityMode::tangent_modified;
  rep.alpha = alpha;
  rep.membership_level = 1.0 - 4.0 * (1.0 - alpha);
  rep.trace_p_avg = avg.trace();
  rep.eig_col = ec.values;
  rep.eig_row = er.values;
  rep.bags_used = avg.b;
  rep.r_selected = r;
  rep.selected = leading_tangent(ec, er, r);
  rep.selected_col = rep.selected.col();
  rep.sigma_min_curve.emplace_back(0, 1.0);
  if (with_sigma && r > 0) rep.sigma_min_curve.emplace_back(r, FrameGram(avg, ec.vectors, er.vectors).sigma_min(r));
  return rep;
}

TangentSpace fixed_rank_tangent(const AveragedProjectors& avg, Index r) {
  if (r < 0 || r > std::min(avg.p1(), avg.p2())) throw InvalidInput("fixed_rank_tangent: rank out of range");
  return leading_tangent(ordered_eigen(avg.p_avg_col), ordered_eigen(avg.p_avg_row), r);
}

StabilityReport column_stability(const std::vector<Subspace>& col_spaces, double alpha) {
  check_alpha(alpha, "column_stability");
  const Matrix p = average_column_projector(col_spaces);
  const SymmetricEigen e = ordered_eigen(p);
  Index r = 0;
  while (r < e.values.size() && e.values(r) >= alpha) ++r;

  StabilityReport rep;
  rep.mode = StabilityMode::column;
  rep.alpha = alpha;
  rep.membership_level = alpha;
  double tr = 0.0;
  for (const Subspace& s : col_spaces) tr += static_cast<double>(s.rank());
  rep.trace_p_avg = tr / static_cast<double>(col_spaces.size());
  rep.eig_col = e.values;
  rep.bags_used = static_cast<Index>(col_spaces.size());
  rep.r_selected = r;
  rep.selected_col = Subspace(e.vectors.leftCols(r));
  rep.selected = TangentSpace::zero(p.rows(), 1);
  for (Index k = 0; k <= r; ++k) rep.sigma_min_curve.emplace_back(k, k == 0 ? 1.0 : e.values(k - 1));
  if (r < e.values.size()) rep.sigma_min_curve.emplace_back(r + 1, e.values(r));
  return rep;
}

PipelineResult run_pipeline(const ObservationSet& obs, const EstimatorConfig& est, const PipelineConfig& cfg) {
  est.validate();
  check_alpha(cfg.alpha, "run_pipeline");
  if (cfg.mode != StabilityMode::column && est.kind == EstimatorKind::pca_column)
    throw InvalidInput("run_pipeline: the pca estimator only supports column mode");
  BagPlan plan = complementary_bags(obs.size() - obs.size() % 2, cfg.bags, cfg.seed);
  if (obs.size() % 2 != 0) {
    // odd unit count: one uniformly chosen unit sits out of every bag
    Rng rng(derive_seed(cfg.seed, 0x0dd));
    const Index skip = std::uniform_int_distribution<Index>(0, obs.size() - 1)(rng);
    for (auto& bag : plan.bags)
      for (Index& u : bag)
        if (u >= skip) ++u;
  }
  EstimatorConfig bag_cfg = est;
  if (cfg.rescale_lambda) bag_cfg.lambda = est.lambda / 2.0;

  const std::size_t nb = plan.bags.size();
  std::vector<std::optional<TangentSpace>> tangents(nb);
  std::vector<std::optional<Subspace>> columns(nb);
  std::vector<std::string> failures(nb);
  parallel_for(
      nb,
      [&](std::size_t l) {
        try {
          const ObservationSet sub = obs.subset(plan.bags[l]);
          EstimatorConfig c = bag_cfg;
          c.seed = derive_seed(est.seed, l);
          if (cfg.mode == StabilityMode::column) {
            columns[l] = estimate_column_space(sub, c);
          } else {
            tangents[l] = estimate_tangent(sub, c);
            columns[l] = tangents[l]->col();
          }
        } catch (const std::exception& e) {
          failures[l] = e.what();
        }
      },
      cfg.threads);

  PipelineResult out;
  std::vector<Index> ids;
  for (std::size_t l = 0; l < nb; ++l) {
    if (!columns[l]) {
      warn("bag " + std::to_string(l) + " dropped: " + failures[l]);
      continue;
    }
    ids.push_back(static_cast<Index>(l));
    out.bag_columns.push_back(*columns[l]);
    if (tangents[l]) out.bag_tangents.push_back(*tangents[l]);
  }
  if (2 * ids.size() < nb)
    throw NumericError("run_pipeline: fewer than half of the bags produced an estimate");

  switch (cfg.mode) {
    case StabilityMode::tangent: out.report = algorithm1(average_projectors(out.bag_tangents), cfg.alpha, cfg.search); break;
    case StabilityMode::tangent_modified:
      out.report = algorithm1_modified(average_projectors(out.bag_tangents), cfg.alpha);
      break;
    case StabilityMode::column: out.report = column_stability(out.bag_columns, cfg.alpha); break;
  }
  out.report.bag_ids = std::move(ids);
  return out;
}

}  // namespace ss3
