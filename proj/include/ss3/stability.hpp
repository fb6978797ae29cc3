#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ss3/estimators.hpp"
#include "ss3/linalg.hpp"
#include "ss3/observations.hpp"

namespace ss3 {

/// P_avg = (1/B) sum_l P_{T_l}, kept symbolically through the bag tangents,
/// together with the dense row and column averages.
struct AveragedProjectors {
  std::vector<TangentSpace> tangents;
  Matrix p_avg_col;
  Matrix p_avg_row;
  Index b = 0;

  Index p1() const { return p_avg_col.rows(); }
  Index p2() const { return p_avg_row.rows(); }
  /// trace(P_avg) = mean of dim T_l.
  double trace() const;
  /// P_avg applied to a p1 x p2 matrix.
  Matrix apply(const Matrix& m) const;
};

AveragedProjectors average_projectors(std::vector<TangentSpace> tangents);

/// Column-space-only average (1/B) sum_l P_{C_l}.
Matrix average_column_projector(const std::vector<Subspace>& spaces);

struct Membership {
  bool member = false;
  double sigma_min = 1.0;
};

/// sigma_min(P_T P_avg P_T) on T compared with alpha. The zero tangent space
/// is a member with sigma_min = 1.
Membership stable_membership(const TangentSpace& t, const AveragedProjectors& avg, double alpha);

/// Gram matrix of P_avg on the canonical orthonormal basis of T, ordered as
/// u_i g_j' (i < r, all j) followed by f_i v_j' (i >= r, j < r) where [U, C-perp]
/// and [V, R-perp] are the frames. Exposed for testing.
Matrix stable_gram(const TangentSpace& t, const AveragedProjectors& avg);

enum class StabilityMode { tangent, tangent_modified, column };
enum class RankSearch { scan, binary };

const char* to_string(StabilityMode m);
StabilityMode parse_stability_mode(const std::string& s);

struct StabilityReport {
  StabilityMode mode = StabilityMode::tangent;
  TangentSpace selected = TangentSpace::zero(1, 1);
  Subspace selected_col = Subspace::zero(1);  // column mode (and the column space of `selected` otherwise)
  double alpha = 0.7;
  Index r_selected = 0;
  std::vector<std::pair<Index, double>> sigma_min_curve;  // sorted by r
  double membership_level = 0.7;
  double trace_p_avg = 0.0;  // q-hat = mean bag dimension
  Vector eig_col;            // descending eigenvalues of P_avg_col
  Vector eig_row;
  Index bags_used = 0;
  std::vector<Index> bag_ids;  // surviving bag indices, ascending
};

struct SearchOptions {
  RankSearch search = RankSearch::scan;
  bool full_curve = false;  // evaluate sigma_min at every r
};

StabilityReport algorithm1(const AveragedProjectors& avg, double alpha, const SearchOptions& opts = {});
StabilityReport algorithm1_modified(const AveragedProjectors& avg, double alpha, bool with_sigma = true);
/// T(r) from the top-r eigenvectors of P_avg_col and P_avg_row (algorithm1
/// with the rank fixed in advance).
TangentSpace fixed_rank_tangent(const AveragedProjectors& avg, Index r);

StabilityReport column_stability(const std::vector<Subspace>& col_spaces, double alpha);

struct PipelineConfig {
  double alpha = 0.7;
  Index bags = 100;
  std::uint64_t seed = 0;
  StabilityMode mode = StabilityMode::tangent;
  SearchOptions search;
  bool rescale_lambda = false;  // halve lambda on the half-size bags
  unsigned threads = 0;         // 0 = hardware concurrency
};

struct PipelineResult {
  StabilityReport report;
  std::vector<TangentSpace> bag_tangents;  // aligned with report.bag_ids (empty in column mode)
  std::vector<Subspace> bag_columns;       // aligned with report.bag_ids
};

/// Complementary bags over the observation units, the base estimator per bag,
/// averaging in bag order and selection.
PipelineResult run_pipeline(const ObservationSet& obs, const EstimatorConfig& est, const PipelineConfig& cfg);

}  // namespace ss3
