#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ss3/estimators.hpp"
#include "ss3/report.hpp"
#include "ss3/sampling.hpp"
#include "ss3/stability.hpp"

namespace ss3 {

enum class Preset { table1, table2, fig_kappa, fig_top3, alpha_sweep, denoise_bounds, linear_vs_completion };

const char* to_string(Preset p);
Preset parse_preset(const std::string& s);

struct ExperimentConfig {
  Preset experiment = Preset::table1;
  Index p1 = 70;
  Index p2 = 70;
  Vector spectrum;              // singular values of L* (alpha_sweep / linear_vs_completion use ones(rank))
  std::vector<Index> ranks;     // table2: truncation ranks; alpha_sweep, linear_vs_completion: ranks of L*
  std::vector<double> snr;
  SnrDefinition snr_definition = SnrDefinition::frobenius;
  std::vector<double> alphas{0.7};
  Index bags = 100;
  EstimatorConfig estimator;
  int trials = 100;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "results";

  Index observations = 3186;    // entries, replicates or measurements in the full dataset
  Index train = 2231;           // table1/table2: training part for the non-subsampled fit
  Index validation = 0;         // holdout size (alpha_sweep, linear_vs_completion)
  int cv_folds = 5;
  int lambda_grid = 20;
  double lambda_grid_ratio = 1e-2;  // smallest / largest grid value
  std::vector<double> lambdas;  // explicit sweep (fig_kappa, fig_top3)
  std::vector<double> gammas;   // denoise_bounds
  std::vector<Index> ks;        // denoise_bounds: rank of the per-bag approximation
  double coherence = 0.0;       // > 0: truth with this incoherence (fig_top3)
  Index fixed_rank = 3;         // fig_top3
  int mc_reps = 100;            // Monte-Carlo reps for F (denoise_bounds)
  int snr_mc_reps = 200;
  Index linear_p = 60;          // linear_vs_completion: linear block dimension
  std::vector<double> linear_snr;
  unsigned threads = 0;

  void validate() const;
};

/// Defaults matching the corresponding study.
ExperimentConfig preset_config(Preset p);

Json to_json(const ExperimentConfig& c);
/// Overrides fields of `base` with those present in j; "experiment" selects
/// the preset defaults first when present.
ExperimentConfig config_from_json(const Json& j);
ExperimentConfig config_from_json(const Json& j, ExperimentConfig base);

struct ResultRow {
  int trial = 0;
  std::string setting;
  std::string method;
  double fd = 0.0;
  double pw = 0.0;
  double fdr = 0.0;
  double rank = 0.0;
  double mse = 0.0;  // NaN when the study has no held-out data
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  Json summary;
};

/// Trials not yet started are skipped once a stop is requested; the summary
/// then covers the completed prefix and is marked interrupted.
ExperimentResult run_experiment(const ExperimentConfig& cfg);
void request_experiment_stop();

/// results.csv (long format) and summary.json under cfg.output_dir.
void write_experiment(const ExperimentConfig& cfg, const ExperimentResult& res);

/// Rank selected at each alpha from a sigma_min curve (non-increasing in r)
/// that extends past the smallest alpha's selection.
std::vector<Index> ranks_for_alphas(const StabilityReport& curve_report, const std::vector<double>& alphas);

}  // namespace ss3
