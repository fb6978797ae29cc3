#include "ss3/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "ss3/errors.hpp"
#include "ss3/metrics.hpp"
#include "ss3/observations.hpp"
#include "ss3/parallel.hpp"
#include "ss3/random.hpp"

namespace ss3 {

namespace {

void check_alpha_open(double alpha, const char* who) {
  if (!(alpha > 0.5 && alpha < 1.0)) throw InvalidInput(std::string(who) + ": alpha must lie in (1/2, 1)");
}

double slack_factor(double alpha) { return 1.0 - alpha + std::sqrt(1.0 - alpha); }

// Squared norms of the columns of m.
Vector col_sq(const Matrix& m) { return m.colwise().squaredNorm().transpose(); }

// Column-wise dot products of a and b.
Vector col_dot(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b).colwise().sum().transpose(); }

Matrix perp_part(const Subspace& s, const Matrix& x) { return x - s.project(x); }

Vector min_eigvec(const Matrix& sym) {
  const SymmetricEigen e = eigen_descending(sym);
  return e.vectors.col(e.vectors.cols() - 1);
}

double min_eigval(const Matrix& sym) {
  if (sym.rows() == 0) return 1.0;
  return eigen_descending(sym).values.minCoeff();
}

// Pairs (2j, 2j+1) present among the ids, as positions in the id list.
std::vector<std::pair<std::size_t, std::size_t>> complete_pairs(const std::vector<Index>& ids) {
  std::map<Index, std::size_t> pos;
  for (std::size_t k = 0; k < ids.size(); ++k) pos[ids[k]] = k;
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& [id, k] : pos) {
    if (id % 2 != 0) continue;
    auto it = pos.find(id + 1);
    if (it != pos.end()) out.emplace_back(k, it->second);
  }
  return out;
}

}  // namespace

const char* to_string(BasisMode m) {
  return m == BasisMode::basis_dependent ? "basis_dependent" : "basis_independent";
}

const char* to_string(BoundMode m) { return m == BoundMode::column ? "column" : "tangent"; }

BasisMode parse_basis_mode(const std::string& s) {
  if (s == "basis_dependent" || s == "dependent") return BasisMode::basis_dependent;
  if (s == "basis_independent" || s == "independent") return BasisMode::basis_independent;
  throw InvalidInput("unknown basis mode: " + s);
}

ProductBasis default_basis(const SyntheticTruth& truth) {
  const Index r = truth.t_star.rank();
  return {truth.u_full.rightCols(truth.u_full.cols() - r), truth.v_full.rightCols(truth.v_full.cols() - r)};
}

HalfSampleStats half_sample_stats(const SyntheticTruth& truth, const EstimatorConfig& est, const DataModel& data,
                                  BoundMode mode, bool with_dependent, int mc_reps, std::uint64_t seed,
                                  unsigned threads, const std::optional<ProductBasis>& basis) {
  if (mc_reps < 2) throw InvalidInput("half_sample_stats: mc_reps must be at least 2");
  const Index half = data.n / 2;
  if (half < 1) throw InvalidInput("half_sample_stats: dataset too small to halve");
  const ProductBasis pb = basis ? *basis : default_basis(truth);
  const bool mean_shortcut = data.model == ObservationModel::replicate && est.kind == EstimatorKind::spectral;

  const auto reps = static_cast<std::size_t>(mc_reps);
  std::vector<double> fd(reps), dim(reps);
  std::vector<Vector> a_perp(reps), b_perp(reps);
  parallel_for(
      reps,
      [&](std::size_t i) {
        const std::uint64_t s = derive_seed(seed, 0x4a1f, i);
        EstimatorConfig cfg = est;
        cfg.seed = derive_seed(est.seed, i);
        const ObservationSet obs =
            mean_shortcut ? ObservationSet::replicates({gen_denoise_mean(truth, half, data.noise, data.gamma, s)})
                          : draw_dataset(truth, data, half, s);
        if (mode == BoundMode::tangent) {
          const TangentSpace t = estimate_tangent(obs, cfg);
          fd[i] = discovery_metrics(t, truth.t_star).fd;
          dim[i] = static_cast<double>(t.dim());
          if (with_dependent) {
            a_perp[i] = col_sq(perp_part(t.col(), pb.u));
            b_perp[i] = col_sq(perp_part(t.row(), pb.v));
          }
        } else {
          const Subspace c = estimate_column_space(obs, cfg);
          fd[i] = column_metrics(c, truth.t_star.col()).fd;
          dim[i] = static_cast<double>(c.rank());
          if (with_dependent) a_perp[i] = col_sq(perp_part(c, pb.u));
        }
      },
      threads);

  HalfSampleStats out;
  out.reps = mc_reps;
  double root = 0.0;
  for (std::size_t i = 0; i < reps; ++i) {
    root += std::sqrt(std::max(0.0, fd[i]));
    out.fd_mean += fd[i];
    out.q += dim[i];
  }
  out.fd_mean /= mc_reps;
  out.q /= mc_reps;
  out.f_independent = (root / mc_reps) * (root / mc_reps);
  if (with_dependent) {
    // ||P_That(u v')||^2 = 1 - ||P_Chat-perp u||^2 ||P_Rhat-perp v||^2 and
    // ||P_Chat(u)||^2 = 1 - ||P_Chat-perp u||^2.
    if (mode == BoundMode::tangent) {
      Matrix acc = Matrix::Zero(pb.u.cols(), pb.v.cols());
      for (std::size_t i = 0; i < reps; ++i)
        acc += (Matrix::Ones(pb.u.cols(), pb.v.cols()) - a_perp[i] * b_perp[i].transpose()).cwiseMax(0.0).cwiseSqrt();
      out.f_dependent = (acc / mc_reps).squaredNorm();
    } else {
      Vector acc = Vector::Zero(pb.u.cols());
      for (std::size_t i = 0; i < reps; ++i)
        acc += (Vector::Ones(pb.u.cols()) - a_perp[i]).cwiseMax(0.0).cwiseSqrt();
      out.f_dependent = (acc / mc_reps).squaredNorm();
    }
  }
  return out;
}

double kappa_term_independent(const TangentSpace& t, const TangentSpace& q, const TangentSpace& truth) {
  const MatrixOperator prod = tangent_operator(t) * tangent_operator(q) * tangent_complement_operator(truth) *
                              tangent_complement_operator(q);
  return 2.0 * op_trace(prod);
}

Matrix kappa_terms_dependent(const TangentSpace& t, const TangentSpace& q, const ProductBasis& basis) {
  // With c = P_Qc-perp u and d = P_Qr-perp v, the term is
  //   2 [<P_T(u v'), c d'> - ||P_T(c d')||^2]
  // and both pieces separate over u and v.
  const Matrix c = perp_part(q.col(), basis.u);
  const Matrix d = perp_part(q.row(), basis.v);
  const Matrix tc = t.col().basis().transpose() * c;
  const Matrix td = t.row().basis().transpose() * d;
  const Vector a1 = col_dot(t.col().basis().transpose() * basis.u, tc);
  const Vector a3 = col_sq(tc);
  const Vector a4 = col_sq(c);
  const Vector b2 = col_dot(t.row().basis().transpose() * basis.v, td);
  const Vector b4 = col_sq(td);
  const Vector b3 = col_sq(d);
  return 2.0 * (a1 * b3.transpose() + a4 * b2.transpose() - a1 * b2.transpose() - a3 * b3.transpose() -
                a4 * b4.transpose() + a3 * b4.transpose());
}

double kappa_term_independent(const Subspace& c, const Subspace& q, const Subspace& truth) {
  const Index p = c.ambient_dim();
  const Matrix pq = q.projector();
  const Matrix s = Matrix::Identity(p, p) - truth.projector();
  const Matrix qp = Matrix::Identity(p, p) - pq;
  return 2.0 * (c.projector() * pq * s * qp).trace();
}

Vector kappa_terms_dependent(const Subspace& c, const Subspace& q, const Matrix& basis) {
  const Matrix perp = perp_part(q, basis);
  const Matrix in = basis - perp;
  return 2.0 * col_dot(c.basis().transpose() * in, c.basis().transpose() * perp);
}

double kappa_bag(const TangentSpace& selected, const std::vector<TangentSpace>& bags, const std::vector<Index>& bag_ids,
                 const TangentSpace& truth, BasisMode basis, const std::optional<ProductBasis>& product_basis,
                 Index* pairs_used) {
  if (bags.size() != bag_ids.size()) throw InvalidInput("kappa_bag: bags and ids differ in length");
  const auto pairs = complete_pairs(bag_ids);
  if (pairs_used) *pairs_used = static_cast<Index>(pairs.size());
  if (pairs.empty()) return 0.0;
  double total = 0.0;
  if (basis == BasisMode::basis_independent) {
    for (const auto& [a, b] : pairs)
      total += std::max(kappa_term_independent(selected, bags[a], truth), kappa_term_independent(selected, bags[b], truth));
  } else {
    if (!product_basis) throw InvalidInput("kappa_bag: basis-dependent form needs a basis");
    for (const auto& [a, b] : pairs)
      total += kappa_terms_dependent(selected, bags[a], *product_basis)
                   .cwiseMax(kappa_terms_dependent(selected, bags[b], *product_basis))
                   .sum();
  }
  return total / static_cast<double>(pairs.size());
}

double kappa_bag(const Subspace& selected, const std::vector<Subspace>& bags, const std::vector<Index>& bag_ids,
                 const Subspace& truth, BasisMode basis, const std::optional<Matrix>& col_basis, Index* pairs_used) {
  if (bags.size() != bag_ids.size()) throw InvalidInput("kappa_bag: bags and ids differ in length");
  const auto pairs = complete_pairs(bag_ids);
  if (pairs_used) *pairs_used = static_cast<Index>(pairs.size());
  if (pairs.empty()) return 0.0;
  double total = 0.0;
  if (basis == BasisMode::basis_independent) {
    for (const auto& [a, b] : pairs)
      total += std::max(kappa_term_independent(selected, bags[a], truth), kappa_term_independent(selected, bags[b], truth));
  } else {
    if (!col_basis) throw InvalidInput("kappa_bag: basis-dependent form needs a basis");
    for (const auto& [a, b] : pairs)
      total += kappa_terms_dependent(selected, bags[a], *col_basis)
                   .cwiseMax(kappa_terms_dependent(selected, bags[b], *col_basis))
                   .sum();
  }
  return total / static_cast<double>(pairs.size());
}

BoundReport theorem4_terms(const SyntheticTruth& truth, const EstimatorConfig& est, const DataModel& data,
                           const TangentSpace& selected, const std::vector<TangentSpace>& bag_tangents,
                           const std::vector<Index>& bag_ids, const BoundOptions& opts) {
  check_alpha_open(opts.alpha, "theorem4_terms");
  if (opts.mc_reps < 2) throw InvalidInput("theorem4_terms: mc_reps must be at least 2");
  if (bag_tangents.empty()) throw InvalidInput("theorem4_terms: no bag tangents");
  const ProductBasis pb = opts.basis ? *opts.basis : default_basis(truth);
  const bool dependent = opts.f_basis == BasisMode::basis_dependent;
  const HalfSampleStats hs =
      opts.stats ? *opts.stats
                 : half_sample_stats(truth, est, data, BoundMode::tangent, dependent, opts.mc_reps, opts.seed,
                                     opts.threads, pb);

  BoundReport r;
  r.mode = BoundMode::tangent;
  r.f_basis = opts.f_basis;
  r.kappa_basis = opts.kappa_basis;
  r.alpha = opts.alpha;
  r.mc_reps = hs.reps;
  r.f = dependent ? hs.f_dependent : hs.f_independent;
  r.q = hs.q;
  r.dim_selected = selected.dim();
  r.kappa_bag_raw = kappa_bag(selected, bag_tangents, bag_ids, truth.t_star, opts.kappa_basis,
                              std::optional<ProductBasis>(pb), &r.pairs_used);
  r.kappa_bag = std::max(0.0, r.kappa_bag_raw);
  r.slack_term = 2.0 * (1.0 - opts.alpha) * static_cast<double>(r.dim_selected);
  r.theorem4_total = r.f + r.kappa_bag + r.slack_term;
  r.prop5_total = prop5_bound(r.f, r.q, opts.alpha);
  r.kappa_within_prop5 = r.kappa_bag <= 2.0 * std::sqrt(1.0 - opts.alpha) * r.dim_selected + 1e-9;
  const AveragedProjectors avg = average_projectors(bag_tangents);
  r.q_hat = avg.trace();
  r.kappa_indiv = kappa_indiv_estimate(avg).kappa;
  r.prop6_total = prop6_bound(r.q, truth.l_star.rows(), truth.l_star.cols(), r.kappa_indiv, opts.alpha);
  return r;
}

BoundReport theorem4_column_terms(const SyntheticTruth& truth, const EstimatorConfig& est, const DataModel& data,
                                  const Subspace& selected, const std::vector<Subspace>& bag_columns,
                                  const std::vector<Index>& bag_ids, const BoundOptions& opts) {
  check_alpha_open(opts.alpha, "theorem4_column_terms");
  if (opts.mc_reps < 2) throw InvalidInput("theorem4_column_terms: mc_reps must be at least 2");
  if (bag_columns.empty()) throw InvalidInput("theorem4_column_terms: no bag column spaces");
  const ProductBasis pb = opts.basis ? *opts.basis : default_basis(truth);
  const bool dependent = opts.f_basis == BasisMode::basis_dependent;
  const HalfSampleStats hs =
      opts.stats ? *opts.stats
                 : half_sample_stats(truth, est, data, BoundMode::column, dependent, opts.mc_reps, opts.seed,
                                     opts.threads, pb);

  BoundReport r;
  r.mode = BoundMode::column;
  r.f_basis = opts.f_basis;
  r.kappa_basis = opts.kappa_basis;
  r.alpha = opts.alpha;
  r.mc_reps = hs.reps;
  r.f = dependent ? hs.f_dependent : hs.f_independent;
  r.q = hs.q;
  r.dim_selected = selected.rank();
  r.kappa_bag_raw = kappa_bag(selected, bag_columns, bag_ids, truth.t_star.col(), opts.kappa_basis,
                              std::optional<Matrix>(pb.u), &r.pairs_used);
  r.kappa_bag = std::max(0.0, r.kappa_bag_raw);
  r.slack_term = 2.0 * (1.0 - opts.alpha) * static_cast<double>(r.dim_selected);
  r.theorem4_total = r.f + r.kappa_bag + r.slack_term;
  r.prop5_total = prop5_bound(r.f, r.q, opts.alpha);
  r.kappa_within_prop5 = r.kappa_bag <= 2.0 * std::sqrt(1.0 - opts.alpha) * r.dim_selected + 1e-9;

  const Matrix avg = average_column_projector(bag_columns);
  r.q_hat = avg.trace();
  const Vector u = min_eigvec(avg);
  double k = 0.0;
  for (const Subspace& c : bag_columns) {
    const double t = std::clamp(c.project(u).squaredNorm(), 0.0, 1.0);
    k += std::sqrt(2.0 * t * (1.0 - t));
  }
  r.kappa_indiv = k / static_cast<double>(bag_columns.size());
  r.prop6_total = prop6_column_bound(r.q, truth.l_star.rows(), r.kappa_indiv, opts.alpha);
  return r;
}

double prop5_bound(double f, double q, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput("prop5_bound: alpha must lie in (0, 1)");
  if (q < 0.0) throw InvalidInput("prop5_bound: q must be non-negative");
  return f + (2.0 * q / alpha) * slack_factor(alpha);
}

double dimT_bound(double q, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput("dimT_bound: alpha must lie in (0, 1)");
  if (q < 0.0) throw InvalidInput("dimT_bound: q must be non-negative");
  return q / alpha;
}

double prop6_bound(double q, Index p1, Index p2, double kappa_indiv, double alpha) {
  const double p = static_cast<double>(p1) * static_cast<double>(p2);
  return q * q / p + p * kappa_indiv * kappa_indiv + 2.0 * q * kappa_indiv + prop5_bound(0.0, q, alpha);
}

double prop6_column_bound(double q, Index p1, double kappa_indiv, double alpha) {
  const double p = static_cast<double>(p1);
  return q * q / p + p * kappa_indiv * kappa_indiv + 2.0 * q * kappa_indiv + prop5_bound(0.0, q, alpha);
}

KappaIndiv kappa_indiv_estimate(const AveragedProjectors& avg) {
  if (avg.tangents.empty()) throw InvalidInput("kappa_indiv_estimate: no bags");
  KappaIndiv out;
  out.u = min_eigvec(avg.p_avg_col);
  out.v = min_eigvec(avg.p_avg_row);
  double k = 0.0;
  for (const TangentSpace& t : avg.tangents) {
    // ||P_T(u v')||^2 = 1 - ||P_C-perp u||^2 ||P_R-perp v||^2; the commutator
    // with a rank-one projector has norm sqrt(2 t (1 - t)).
    const double cu = perp_part(t.col(), out.u).squaredNorm();
    const double rv = perp_part(t.row(), out.v).squaredNorm();
    const double tl = std::clamp(1.0 - cu * rv, 0.0, 1.0);
    k += std::sqrt(2.0 * tl * (1.0 - tl));
  }
  out.kappa = k / static_cast<double>(avg.tangents.size());
  return out;
}

AlignmentDiag heuristic_alignment_diag(const std::vector<Subspace>& col_estimates,
                                       const std::vector<Subspace>& row_estimates, const TangentSpace& truth) {
  if (col_estimates.empty() || col_estimates.size() != row_estimates.size())
    throw InvalidInput("heuristic_alignment_diag: need matching, non-empty column and row estimates");
  const Matrix& us = truth.col().basis();
  const Matrix& vs = truth.row().basis();
  AlignmentDiag d;
  for (std::size_t l = 0; l < col_estimates.size(); ++l) {
    const Matrix cu = col_estimates[l].basis().transpose() * us;
    const Matrix rv = row_estimates[l].basis().transpose() * vs;
    d.tau += std::min(min_eigval(cu.transpose() * cu), min_eigval(rv.transpose() * rv));
  }
  d.tau /= static_cast<double>(col_estimates.size());
  const double dc = min_eigval(average_column_projector(col_estimates));
  const double dr = min_eigval(average_column_projector(row_estimates));
  d.delta = std::max(0.0, std::max(dc, dr));
  d.lower_bound = 2.0 * d.tau - 1.0 - 2.0 * (d.delta + std::sqrt(d.delta));
  return d;
}

double variable_selection_bound(const std::vector<double>& null_selection_probs, double alpha) {
  if (!(alpha > 0.5 && alpha <= 1.0)) throw InvalidInput("variable_selection_bound: alpha must exceed 1/2");
  double s = 0.0;
  for (double p : null_selection_probs) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("variable_selection_bound: probabilities must lie in [0, 1]");
    s += p;
  }
  return s / (2.0 * alpha - 1.0);
}

}  // namespace ss3
