#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ss3/estimators.hpp"
#include "ss3/linalg.hpp"
#include "ss3/sampling.hpp"
#include "ss3/stability.hpp"

namespace ss3 {

enum class BasisMode { basis_independent, basis_dependent };
enum class BoundMode { tangent, column };

const char* to_string(BasisMode m);
const char* to_string(BoundMode m);
BasisMode parse_basis_mode(const std::string& s);

struct BoundReport {
  BoundMode mode = BoundMode::tangent;
  BasisMode f_basis = BasisMode::basis_independent;
  BasisMode kappa_basis = BasisMode::basis_independent;
  double alpha = 0.7;
  double f = 0.0;
  double kappa_bag = 0.0;      // clamped at 0
  double kappa_bag_raw = 0.0;  // single-realization value, can be negative
  double slack_term = 0.0;  // 2 (1 - alpha) dim(T_selected)
  double theorem4_total = 0.0;
  double prop5_total = 0.0;
  double q = 0.0;       // Monte-Carlo mean dimension of half-sample estimates
  double q_hat = 0.0;   // mean bag dimension = trace(P_avg)
  double kappa_indiv = 0.0;
  double prop6_total = 0.0;
  Index dim_selected = 0;
  Index pairs_used = 0;
  bool kappa_within_prop5 = true;  // kappa_bag <= 2 sqrt(1 - alpha) dim(T_selected)
  int mc_reps = 0;
};

/// Orthonormal bases of C*-perp (u) and R*-perp (v). The basis elements of
/// T*-perp are u_a v_b'. For column bounds only u is used.
struct ProductBasis {
  Matrix u;
  Matrix v;
};

/// Default basis: trailing singular vectors of the truth.
ProductBasis default_basis(const SyntheticTruth& truth);

/// Monte-Carlo summary of the estimator on independent half-size datasets.
struct HalfSampleStats {
  double f_independent = 0.0;  // (E sqrt(trace(P_That P_T*perp)))^2
  double f_dependent = 0.0;    // sum_i (E ||P_That(M_i)||_F)^2
  double q = 0.0;              // E dim(That)
  double fd_mean = 0.0;        // E trace(P_That P_T*perp)
  int reps = 0;
};

struct BoundOptions {
  double alpha = 0.7;
  BasisMode f_basis = BasisMode::basis_independent;
  BasisMode kappa_basis = BasisMode::basis_independent;
  int mc_reps = 100;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::optional<ProductBasis> basis;
  std::optional<HalfSampleStats> stats;  // reuse a Monte-Carlo run (must match f_basis)
};

HalfSampleStats half_sample_stats(const SyntheticTruth& truth, const EstimatorConfig& est, const DataModel& data,
                                  BoundMode mode, bool with_dependent, int mc_reps, std::uint64_t seed,
                                  unsigned threads = 0, const std::optional<ProductBasis>& basis = std::nullopt);

/// trace([P_T, P_Q-perp] [P_T*-perp, P_Q]) = 2 trace(P_T P_Q P_T*-perp P_Q-perp).
double kappa_term_independent(const TangentSpace& t, const TangentSpace& q, const TangentSpace& truth);
/// trace([P_T, P_Q-perp] [P_span(u_a v_b'), P_Q]) for every basis pair (a, b).
Matrix kappa_terms_dependent(const TangentSpace& t, const TangentSpace& q, const ProductBasis& basis);

double kappa_term_independent(const Subspace& c, const Subspace& q, const Subspace& truth);
Vector kappa_terms_dependent(const Subspace& c, const Subspace& q, const Matrix& basis);

/// kappa_bag from a single realization of the bags. Bags are paired as
/// (2j, 2j+1) by id; bags whose partner is missing are dropped.
double kappa_bag(const TangentSpace& selected, const std::vector<TangentSpace>& bags, const std::vector<Index>& bag_ids,
                 const TangentSpace& truth, BasisMode basis, const std::optional<ProductBasis>& product_basis,
                 Index* pairs_used = nullptr);
double kappa_bag(const Subspace& selected, const std::vector<Subspace>& bags, const std::vector<Index>& bag_ids,
                 const Subspace& truth, BasisMode basis, const std::optional<Matrix>& col_basis,
                 Index* pairs_used = nullptr);

BoundReport theorem4_terms(const SyntheticTruth& truth, const EstimatorConfig& est, const DataModel& data,
                           const TangentSpace& selected, const std::vector<TangentSpace>& bag_tangents,
                           const std::vector<Index>& bag_ids, const BoundOptions& opts);
BoundReport theorem4_column_terms(const SyntheticTruth& truth, const EstimatorConfig& est, const DataModel& data,
                                  const Subspace& selected, const std::vector<Subspace>& bag_columns,
                                  const std::vector<Index>& bag_ids, const BoundOptions& opts);

/// F + (2q / alpha)(1 - alpha + sqrt(1 - alpha))
double prop5_bound(double f, double q, double alpha);
/// q / alpha
double dimT_bound(double q, double alpha);
/// q^2 / (p1 p2) + p1 p2 k^2 + 2 q k + (2q / alpha)(1 - alpha + sqrt(1 - alpha))
double prop6_bound(double q, Index p1, Index p2, double kappa_indiv, double alpha);
/// Column-space variant with p1 in place of p1 p2.
double prop6_column_bound(double q, Index p1, double kappa_indiv, double alpha);

struct KappaIndiv {
  double kappa = 0.0;
  Vector u;
  Vector v;
};

/// M~ = u v' from the minimal eigenvectors of P_avg_col and P_avg_row;
/// kappa = mean over bags of ||[P_T_l, P_span(M~)]||_F.
KappaIndiv kappa_indiv_estimate(const AveragedProjectors& avg);

struct AlignmentDiag {
  double tau = 0.0;
  double delta = 0.0;
  double lower_bound = 0.0;  // 2 tau - 1 - 2 (delta + sqrt(delta))
};

AlignmentDiag heuristic_alignment_diag(const std::vector<Subspace>& col_estimates,
                                       const std::vector<Subspace>& row_estimates, const TangentSpace& truth);

/// sum_i P[i-th null selected] / (2 alpha - 1)
double variable_selection_bound(const std::vector<double>& null_selection_probs, double alpha);

}  // namespace ss3
