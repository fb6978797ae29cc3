#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ss3/linalg.hpp"
#include "ss3/observations.hpp"

namespace ss3 {

enum class EstimatorKind { svt, als, spectral, pca_column };

const char* to_string(EstimatorKind k);
EstimatorKind parse_estimator_kind(const std::string& s);

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::svt;
  double lambda = 0.0;
  Index k = 0;  // rank cap for als / spectral / pca
  int max_iters = 500;
  double conv_tol = 1e-6;
  double rank_tol = kDefaultRankTol;
  std::uint64_t seed = 0;
  bool accelerate = true;  // svt: monotone FISTA steps instead of plain proximal gradient

  void validate() const;
};

struct SvtResult {
  Matrix estimate;
  int iterations = 0;
  bool converged = false;
  double objective = 0.0;
  std::vector<double> objective_trace;
};

/// argmin_L sum_S (L - Y)^2 + lambda ||L||_*.
SvtResult svt_complete(const ObservationSet& obs, const EstimatorConfig& cfg, const Matrix* warm_start = nullptr,
                       bool record_objective = false);

struct AlsResult {
  Matrix u;
  Matrix v;
  int sweeps = 0;
  bool converged = false;
  bool degenerate = false;
  double objective = 0.0;
  std::vector<double> objective_trace;  // one value per half-sweep

  Matrix estimate() const { return u * v.transpose(); }
};

/// argmin_{U,V} sum_S (Y - <A, UV'>)^2 + lambda (||U||_F^2 + ||V||_F^2).
AlsResult als_complete(const ObservationSet& obs, const EstimatorConfig& cfg, bool record_objective = false);

/// Rank-k truncated SVD of the replicate mean.
Matrix spectral_denoise(const ObservationSet& obs, Index k);

/// Top-k eigenvectors of the empirical second moment of p x 1 replicates.
Subspace pca_column(const ObservationSet& obs, Index k);

TangentSpace extract_tangent(const Matrix& l, double rank_tol = kDefaultRankTol);

/// Least-squares refit of L = U_C M U_R' within T for the observation model.
Matrix refit(const TangentSpace& t, const ObservationSet& obs);

/// Point estimate from the configured estimator (svt / als / spectral).
Matrix estimate_matrix(const ObservationSet& obs, const EstimatorConfig& cfg);
TangentSpace estimate_tangent(const ObservationSet& obs, const EstimatorConfig& cfg);
Subspace estimate_column_space(const ObservationSet& obs, const EstimatorConfig& cfg);

/// Mean squared prediction error of L on held-out observations.
double prediction_mse(const Matrix& l, const ObservationSet& held_out);

/// Smallest lambda for which the estimator returns zero on these observations.
double lambda_max(const ObservationSet& obs, EstimatorKind kind);

/// n log-spaced values from hi down to lo.
std::vector<double> log_grid(double hi, double lo, int n);

struct LambdaSelection {
  double lambda = 0.0;
  std::vector<double> grid;
  std::vector<double> mse;
};

/// K-fold cross-validation over a lambda grid (svt / als), warm-started along
/// the decreasing path. Ties resolve to the larger lambda.
LambdaSelection select_lambda_cv(const ObservationSet& obs, const EstimatorConfig& cfg, const std::vector<double>& grid,
                                 int folds, std::uint64_t seed);
LambdaSelection select_lambda_holdout(const ObservationSet& train, const ObservationSet& validation,
                                      const EstimatorConfig& cfg, const std::vector<double>& grid);

}  // namespace ss3
