#include "ss3/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <tuple>

#include "ss3/bounds.hpp"
#include "ss3/errors.hpp"
#include "ss3/metrics.hpp"
#include "ss3/parallel.hpp"
#include "ss3/random.hpp"
#include "ss3/text.hpp"

namespace ss3 {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::atomic<bool> g_stop{false};

const Vector& stylized_spectrum() {
  static const Vector s = (Vector(10) << 1, 1, 1, .5, .5, .5, .5, .5, .1, .1).finished();
  return s;
}

struct TrialOutput {
  std::vector<ResultRow> rows;
  std::vector<std::tuple<std::string, std::string, double>> extras;  // setting, key, value
};

std::string num(double x) { return format_double(x); }

void add_row(TrialOutput& out, int trial, const std::string& setting, const std::string& method,
             const DiscoveryMetrics& m, double rank, double mse) {
  out.rows.push_back({trial, setting, method, m.fd, m.pw, m.fdr, rank, mse});
}

void add_extra(TrialOutput& out, const std::string& setting, const std::string& key, double v) {
  out.extras.emplace_back(setting, key, v);
}

void add_curve(TrialOutput& out, const std::string& setting, const StabilityReport& rep) {
  for (const auto& [r, s] : rep.sigma_min_curve) add_extra(out, setting, "sigma_min_r" + std::to_string(r), s);
}

// Random split of [0, n) into sorted index sets of sizes k and n - k.
std::pair<std::vector<Index>, std::vector<Index>> split_units(Index n, Index k, std::uint64_t seed) {
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Index> a(perm.begin(), perm.begin() + k);
  std::vector<Index> b(perm.begin() + k, perm.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return {a, b};
}

std::vector<double> lambda_path(const ObservationSet& obs, const ExperimentConfig& c) {
  const double hi = lambda_max(obs, c.estimator.kind);
  return log_grid(hi, hi * c.lambda_grid_ratio, c.lambda_grid);
}

PipelineResult bags_for(const ObservationSet& obs, const EstimatorConfig& est, const ExperimentConfig& c, double alpha,
                        std::uint64_t seed) {
  PipelineConfig pc;
  pc.alpha = alpha;
  pc.bags = c.bags;
  pc.seed = seed;
  pc.threads = 1;
  return run_pipeline(obs, est, pc);
}

// Tangent of the rank-r truncated SVD of l.
TangentSpace truncated_tangent(const Matrix& l, Index r, double rank_tol) {
  const TangentSpace full = extract_tangent(l, rank_tol);
  const Index k = std::min(r, full.rank());
  return TangentSpace(full.col().leading(k), full.row().leading(k));
}

Matrix truncated_matrix(const Matrix& l, Index r) {
  const ThinSvd s = thin_svd(l);
  const Index k = std::min<Index>(r, s.s.size());
  return s.u.leftCols(k) * s.s.head(k).asDiagonal() * s.v.leftCols(k).transpose();
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

Json stat(const std::vector<double>& v) {
  Json j;
  j["mean"] = mean_of(v);
  j["sd"] = sd_of(v);
  return j;
}

// ---------------------------------------------------------------- table1 / table2

struct CvFit {
  ObservationSet train;
  ObservationSet test;
  double lambda = 0.0;
  double sigma = 0.0;
  Matrix none_estimate;
  PipelineResult s3;
};

CvFit cv_and_bags(const ExperimentConfig& c, const SyntheticTruth& truth, double snr, std::uint64_t seed) {
  SnrModel sm;
  sm.definition = c.snr_definition;
  sm.m = c.observations;
  CvFit f;
  f.sigma = calibrate_snr(truth, sm, snr, c.snr_mc_reps, derive_seed(seed, 1));
  const ObservationSet full = gen_completion(truth, c.observations, f.sigma, derive_seed(seed, 2));
  const auto [tr, te] = split_units(full.size(), c.train, derive_seed(seed, 3));
  f.train = full.subset(tr);
  f.test = full.subset(te);
  EstimatorConfig est = c.estimator;
  est.lambda = select_lambda_cv(f.train, est, lambda_path(f.train, c), c.cv_folds, derive_seed(seed, 4)).lambda;
  f.lambda = est.lambda;
  f.none_estimate = estimate_matrix(f.train, est);
  f.s3 = bags_for(full, est, c, c.alphas.front(), derive_seed(seed, 5));
  return f;
}

SyntheticTruth trial_truth(const ExperimentConfig& c, const Vector& spectrum, std::uint64_t seed) {
  if (c.coherence > 0.0) return gen_low_rank_coherent(c.p1, c.p2, spectrum, c.coherence, seed);
  return gen_low_rank(c.p1, c.p2, spectrum, seed);
}

TrialOutput trial_table1(const ExperimentConfig& c, int trial) {
  TrialOutput out;
  const SyntheticTruth truth = trial_truth(c, c.spectrum, derive_seed(c.seed, 1, trial));
  for (std::size_t s = 0; s < c.snr.size(); ++s) {
    const std::string setting = "snr=" + num(c.snr[s]);
    const CvFit f = cv_and_bags(c, truth, c.snr[s], derive_seed(c.seed, 2 + s, trial));
    const TangentSpace none = extract_tangent(f.none_estimate, c.estimator.rank_tol);
    add_row(out, trial, setting, "none", discovery_metrics(none, truth.t_star), static_cast<double>(none.rank()),
            prediction_mse(f.none_estimate, f.test));
    const TangentSpace& sel = f.s3.report.selected;
    add_row(out, trial, setting, "s3", discovery_metrics(sel, truth.t_star), static_cast<double>(sel.rank()),
            prediction_mse(refit(sel, f.train), f.test));
    add_extra(out, setting, "lambda", f.lambda);
    add_extra(out, setting, "sigma", f.sigma);
    add_extra(out, setting, "bags_used", static_cast<double>(f.s3.report.bags_used));
    add_curve(out, setting, f.s3.report);
  }
  return out;
}

TrialOutput trial_table2(const ExperimentConfig& c, int trial) {
  TrialOutput out;
  const SyntheticTruth truth = trial_truth(c, c.spectrum, derive_seed(c.seed, 1, trial));
  for (std::size_t s = 0; s < c.snr.size(); ++s) {
    const CvFit f = cv_and_bags(c, truth, c.snr[s], derive_seed(c.seed, 2 + s, trial));
    const AveragedProjectors avg = average_projectors(f.s3.bag_tangents);
    for (Index r : c.ranks) {
      const std::string setting = "snr=" + num(c.snr[s]) + ";rank=" + std::to_string(r);
      const Matrix trunc = truncated_matrix(f.none_estimate, r);
      const TangentSpace none = truncated_tangent(f.none_estimate, r, c.estimator.rank_tol);
      add_row(out, trial, setting, "none", discovery_metrics(none, truth.t_star), static_cast<double>(none.rank()),
              prediction_mse(trunc, f.test));
      const TangentSpace s3 = fixed_rank_tangent(avg, r);
      add_row(out, trial, setting, "s3", discovery_metrics(s3, truth.t_star), static_cast<double>(r),
              prediction_mse(refit(s3, f.train), f.test));
      add_extra(out, setting, "lambda", f.lambda);
    }
  }
  return out;
}

// ---------------------------------------------------------------- lambda sweeps

TrialOutput trial_lambda_sweep(const ExperimentConfig& c, int trial, bool top_rank) {
  TrialOutput out;
  const SyntheticTruth truth = trial_truth(c, c.spectrum, derive_seed(c.seed, 1, trial));
  for (std::size_t s = 0; s < c.snr.size(); ++s) {
    SnrModel sm;
    sm.definition = c.snr_definition;
    sm.m = c.observations;
    const std::uint64_t base = derive_seed(c.seed, 2 + s, trial);
    const double sigma = calibrate_snr(truth, sm, c.snr[s], c.snr_mc_reps, derive_seed(base, 1));
    const ObservationSet obs = gen_completion(truth, c.observations, sigma, derive_seed(base, 2));
    for (std::size_t li = 0; li < c.lambdas.size(); ++li) {
      const std::string setting = "snr=" + num(c.snr[s]) + ";lambda=" + num(c.lambdas[li]);
      EstimatorConfig est = c.estimator;
      est.lambda = c.lambdas[li];
      const Matrix full = estimate_matrix(obs, est);
      const PipelineResult pr = bags_for(obs, est, c, c.alphas.front(), derive_seed(base, 10 + li));
      if (top_rank) {
        const TangentSpace none = truncated_tangent(full, c.fixed_rank, est.rank_tol);
        add_row(out, trial, setting, "none", discovery_metrics(none, truth.t_star), static_cast<double>(none.rank()),
                kNaN);
        const TangentSpace s3 = fixed_rank_tangent(average_projectors(pr.bag_tangents), c.fixed_rank);
        add_row(out, trial, setting, "s3", discovery_metrics(s3, truth.t_star), static_cast<double>(s3.rank()), kNaN);
      } else {
        const TangentSpace none = extract_tangent(full, est.rank_tol);
        add_row(out, trial, setting, "none", discovery_metrics(none, truth.t_star), static_cast<double>(none.rank()),
                kNaN);
        // trace(P_avg P_T*perp) is the mean of the per-bag values
        DiscoveryMetrics avg{};
        double rank = 0.0;
        for (const TangentSpace& t : pr.bag_tangents) {
          const DiscoveryMetrics m = discovery_metrics(t, truth.t_star);
          avg.fd += m.fd;
          avg.pw += m.pw;
          avg.fdr += m.fdr;
          rank += static_cast<double>(t.rank());
        }
        const double nb = static_cast<double>(pr.bag_tangents.size());
        avg.fd /= nb;
        avg.pw /= nb;
        avg.fdr /= nb;
        add_row(out, trial, setting, "avg", avg, rank / nb, kNaN);
        const TangentSpace& sel = pr.report.selected;
        add_row(out, trial, setting, "s3", discovery_metrics(sel, truth.t_star), static_cast<double>(sel.rank()), kNaN);
      }
      add_extra(out, setting, "sigma", sigma);
      add_curve(out, setting, pr.report);
    }
  }
  return out;
}

// ---------------------------------------------------------------- holdout studies

struct HoldoutBlock {
  std::string prefix;  // setting prefix
  ObservationModel model;
  Index p;
  Index rank;
  double snr;
  Index n;
  Index n_validation;
  SnrDefinition snr_definition;
};

// Non-subsampled fit at the holdout lambda and one set of bags; s3 rows for
// every alpha in `alphas`.
void holdout_block(const ExperimentConfig& c, const HoldoutBlock& b, int trial, std::uint64_t seed,
                   const std::vector<double>& alphas, bool alpha_in_setting, TrialOutput& out) {
  const SyntheticTruth truth = gen_low_rank(b.p, b.p, Vector::Ones(b.rank), derive_seed(seed, 1));
  SnrModel sm;
  sm.definition = b.snr_definition;
  sm.m = b.n;
  const double sigma = calibrate_snr(truth, sm, b.snr, c.snr_mc_reps, derive_seed(seed, 2));
  DataModel dm;
  dm.model = b.model;
  dm.noise = sigma;
  const ObservationSet train = draw_dataset(truth, dm, b.n, derive_seed(seed, 3));
  const ObservationSet valid = draw_dataset(truth, dm, b.n_validation, derive_seed(seed, 4));
  EstimatorConfig est = c.estimator;
  est.seed = derive_seed(seed, 5);
  est.lambda = select_lambda_holdout(train, valid, est, lambda_path(train, c)).lambda;
  const Matrix none_est = estimate_matrix(train, est);
  const TangentSpace none = extract_tangent(none_est, est.rank_tol);
  const double none_mse = prediction_mse(none_est, valid);
  const DiscoveryMetrics none_m = discovery_metrics(none, truth.t_star);

  const double amin = *std::min_element(alphas.begin(), alphas.end());
  const PipelineResult pr = bags_for(train, est, c, amin, derive_seed(seed, 6));
  const AveragedProjectors avg = average_projectors(pr.bag_tangents);
  const std::vector<Index> ranks = ranks_for_alphas(pr.report, alphas);
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    const std::string setting = alpha_in_setting ? b.prefix + ";alpha=" + num(alphas[a]) : b.prefix;
    add_row(out, trial, setting, "none", none_m, static_cast<double>(none.rank()), none_mse);
    const TangentSpace s3 = fixed_rank_tangent(avg, ranks[a]);
    add_row(out, trial, setting, "s3", discovery_metrics(s3, truth.t_star), static_cast<double>(ranks[a]),
            prediction_mse(refit(s3, train), valid));
    add_extra(out, setting, "lambda", est.lambda);
    add_extra(out, setting, "sigma", sigma);
  }
}

TrialOutput trial_alpha_sweep(const ExperimentConfig& c, int trial) {
  TrialOutput out;
  std::uint64_t block = 0;
  for (Index r : c.ranks)
    for (double snr : c.snr) {
      HoldoutBlock b{"rank=" + std::to_string(r) + ";snr=" + num(snr), ObservationModel::entrywise, c.p1, r, snr,
                     c.observations, c.validation, c.snr_definition};
      holdout_block(c, b, trial, derive_seed(c.seed, 100 + block++, trial), c.alphas, true, out);
    }
  return out;
}

TrialOutput trial_linear_vs_completion(const ExperimentConfig& c, int trial) {
  TrialOutput out;
  std::uint64_t block = 0;
  const Index lp = c.linear_p;
  for (Index r : c.ranks)
    for (double snr : c.linear_snr) {
      HoldoutBlock b{"model=linear;rank=" + std::to_string(r) + ";snr=" + num(snr), ObservationModel::linear, lp, r,
                     snr, 6 * lp * lp / 10, 3 * lp * lp / 20, SnrDefinition::rms_scalar};
      holdout_block(c, b, trial, derive_seed(c.seed, 200 + block++, trial), {c.alphas.front()}, false, out);
    }
  for (Index r : c.ranks)
    for (double snr : c.snr) {
      HoldoutBlock b{"model=completion;rank=" + std::to_string(r) + ";snr=" + num(snr), ObservationModel::entrywise,
                     c.p1, r, snr, c.observations, c.validation, c.snr_definition};
      holdout_block(c, b, trial, derive_seed(c.seed, 300 + block++, trial), {c.alphas.front()}, false, out);
    }
  return out;
}

// ---------------------------------------------------------------- denoising bounds

TrialOutput trial_denoise_bounds(const ExperimentConfig& c, int trial) {
  TrialOutput out;
  const SyntheticTruth truth = gen_low_rank(c.p1, c.p2, c.spectrum, derive_seed(c.seed, 1, trial));
  const double amin = *std::min_element(c.alphas.begin(), c.alphas.end());
  for (std::size_t g = 0; g < c.gammas.size(); ++g) {
    const std::uint64_t base = derive_seed(c.seed, 2 + g, trial);
    SnrModel sm;
    sm.definition = SnrDefinition::spectral;
    sm.gamma = c.gammas[g];
    const double delta = calibrate_snr(truth, sm, c.snr.front(), c.snr_mc_reps, derive_seed(base, 1));
    const ObservationSet obs = gen_denoise(truth, c.observations, delta, c.gammas[g], derive_seed(base, 2));
    DataModel dm;
    dm.model = ObservationModel::replicate;
    dm.n = c.observations;
    dm.noise = delta;
    dm.gamma = c.gammas[g];
    for (std::size_t ki = 0; ki < c.ks.size(); ++ki) {
      EstimatorConfig est = c.estimator;
      est.kind = EstimatorKind::spectral;
      est.k = c.ks[ki];
      const TangentSpace none = estimate_tangent(obs, est);
      const DiscoveryMetrics none_m = discovery_metrics(none, truth.t_star);
      const PipelineResult pr = bags_for(obs, est, c, amin, derive_seed(base, 10 + ki));
      const AveragedProjectors avg = average_projectors(pr.bag_tangents);
      const std::vector<Index> ranks = ranks_for_alphas(pr.report, c.alphas);
      const HalfSampleStats hs =
          half_sample_stats(truth, est, dm, BoundMode::tangent, true, c.mc_reps, derive_seed(base, 20 + ki), 1);
      for (std::size_t a = 0; a < c.alphas.size(); ++a) {
        const std::string setting = "gamma=" + num(c.gammas[g]) + ";k=" + std::to_string(c.ks[ki]) +
                                    ";alpha=" + num(c.alphas[a]);
        const TangentSpace s3 = fixed_rank_tangent(avg, ranks[a]);
        add_row(out, trial, setting, "none", none_m, static_cast<double>(none.rank()), kNaN);
        add_row(out, trial, setting, "s3", discovery_metrics(s3, truth.t_star), static_cast<double>(ranks[a]), kNaN);
        BoundOptions bo;
        bo.alpha = c.alphas[a];
        bo.f_basis = BasisMode::basis_dependent;
        bo.kappa_basis = BasisMode::basis_independent;
        bo.mc_reps = c.mc_reps;
        bo.threads = 1;
        bo.stats = hs;
        const BoundReport br = theorem4_terms(truth, est, dm, s3, pr.bag_tangents, pr.report.bag_ids, bo);
        add_extra(out, setting, "delta", delta);
        add_extra(out, setting, "theorem4_total", br.theorem4_total);
        add_extra(out, setting, "theorem4_total_independent_f", hs.f_independent + br.kappa_bag + br.slack_term);
        add_extra(out, setting, "prop5_total", br.prop5_total);
        add_extra(out, setting, "prop6_total", br.prop6_total);
        add_extra(out, setting, "F_dependent", hs.f_dependent);
        add_extra(out, setting, "F_independent", hs.f_independent);
        add_extra(out, setting, "kappa_bag", br.kappa_bag);
        add_extra(out, setting, "kappa_bag_raw", br.kappa_bag_raw);
        add_extra(out, setting, "slack_term", br.slack_term);
        add_extra(out, setting, "q", br.q);
        add_extra(out, setting, "q_hat", br.q_hat);
        add_extra(out, setting, "kappa_indiv", br.kappa_indiv);
        add_extra(out, setting, "dim_s3", static_cast<double>(s3.dim()));
        add_extra(out, setting, "kappa_within_prop5", br.kappa_within_prop5 ? 1.0 : 0.0);
      }
    }
  }
  return out;
}

TrialOutput run_trial(const ExperimentConfig& c, int trial) {
  switch (c.experiment) {
    case Preset::table1: return trial_table1(c, trial);
    case Preset::table2: return trial_table2(c, trial);
    case Preset::fig_kappa: return trial_lambda_sweep(c, trial, false);
    case Preset::fig_top3: return trial_lambda_sweep(c, trial, true);
    case Preset::alpha_sweep: return trial_alpha_sweep(c, trial);
    case Preset::denoise_bounds: return trial_denoise_bounds(c, trial);
    case Preset::linear_vs_completion: return trial_linear_vs_completion(c, trial);
  }
  throw InvalidInput("unknown preset");
}

template <class T>
std::vector<T> vec_or(const Json& j, const char* key, std::vector<T> fallback) {
  return j.contains(key) ? j.at(key).get<std::vector<T>>() : fallback;
}

const char* snr_name(SnrDefinition d) {
  switch (d) {
    case SnrDefinition::frobenius: return "frobenius";
    case SnrDefinition::spectral: return "spectral";
    case SnrDefinition::rms_scalar: return "rms_scalar";
  }
  return "?";
}

SnrDefinition parse_snr(const std::string& s) {
  if (s == "frobenius") return SnrDefinition::frobenius;
  if (s == "spectral") return SnrDefinition::spectral;
  if (s == "rms_scalar") return SnrDefinition::rms_scalar;
  throw InvalidInput("unknown snr definition: " + s);
}

}  // namespace

void request_experiment_stop() { g_stop = true; }

const char* to_string(Preset p) {
  switch (p) {
    case Preset::table1: return "table1";
    case Preset::table2: return "table2";
    case Preset::fig_kappa: return "fig_kappa";
    case Preset::fig_top3: return "fig_top3";
    case Preset::alpha_sweep: return "alpha_sweep";
    case Preset::denoise_bounds: return "denoise_bounds";
    case Preset::linear_vs_completion: return "linear_vs_completion";
  }
  return "?";
}

Preset parse_preset(const std::string& s) {
  for (Preset p : {Preset::table1, Preset::table2, Preset::fig_kappa, Preset::fig_top3, Preset::alpha_sweep,
                   Preset::denoise_bounds, Preset::linear_vs_completion})
    if (s == to_string(p)) return p;
  throw InvalidInput("unknown preset: " + s);
}

std::vector<Index> ranks_for_alphas(const StabilityReport& rep, const std::vector<double>& alphas) {
  std::vector<Index> out;
  for (double a : alphas) {
    Index r = 0;
    bool bounded = false;
    for (const auto& [rank, s] : rep.sigma_min_curve) {
      if (rank == 0) continue;
      if (rank != r + 1) break;
      if (s >= a) {
        r = rank;
      } else {
        bounded = true;
        break;
      }
    }
    const Index rmax = std::min(rep.eig_col.size(), rep.eig_row.size());
    if (!bounded && r < rmax) throw InvalidInput("ranks_for_alphas: curve does not cover alpha " + format_double(a));
    out.push_back(r);
  }
  return out;
}

ExperimentConfig preset_config(Preset p) {
  ExperimentConfig c;
  c.experiment = p;
  c.spectrum = stylized_spectrum();
  c.estimator.kind = EstimatorKind::svt;
  switch (p) {
    case Preset::table1:
      c.snr = {1.5, 2.0, 2.5, 3.0};
      break;
    case Preset::table2:
      c.snr = {0.8};
      c.ranks = {1, 2, 3, 4, 5};
      break;
    case Preset::fig_kappa:
    case Preset::fig_top3:
      c.snr = {0.8, 1.6};
      c.lambdas = {0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5};
      c.trials = 20;
      if (p == Preset::fig_top3) c.coherence = 0.8;
      break;
    case Preset::alpha_sweep:
      c.p1 = c.p2 = 100;
      c.ranks = {1, 3, 5};
      c.snr = {0.5, 0.8, 2.0};
      c.alphas = {0.6, 0.625, 0.65, 0.675, 0.7, 0.725, 0.75, 0.775, 0.8};
      c.estimator.kind = EstimatorKind::als;
      c.estimator.k = 10;
      c.observations = 7000;
      c.validation = 3500;
      c.lambda_grid = 10;
      c.lambda_grid_ratio = 1e-3;
      c.trials = 20;
      break;
    case Preset::denoise_bounds:
      c.p1 = c.p2 = 200;
      c.spectrum = (Vector(6) << 120, 100, 80, 30, 20, 10).finished();
      c.snr = {0.15};
      c.snr_definition = SnrDefinition::spectral;
      c.gammas = {10.0, 30.0};
      c.ks = {6, 10};
      c.alphas = {0.75, 0.8, 0.85, 0.9, 0.95, 0.97};
      c.estimator.kind = EstimatorKind::spectral;
      c.observations = 400;
      c.trials = 20;
      break;
    case Preset::linear_vs_completion:
      c.p1 = c.p2 = 100;
      c.ranks = {1, 2, 3, 4};
      c.snr = {0.5, 0.875, 1.25, 1.625, 2.0};
      c.linear_snr = {1, 2, 3, 4, 5};
      c.estimator.kind = EstimatorKind::als;
      c.estimator.k = 10;
      c.observations = 7000;
      c.validation = 3500;
      c.lambda_grid = 10;
      c.lambda_grid_ratio = 1e-3;
      c.trials = 5;
      break;
  }
  return c;
}

void ExperimentConfig::validate() const {
  if (trials < 1) throw InvalidInput("experiment: trials must be at least 1");
  if (alphas.empty()) throw InvalidInput("experiment: alpha grid is empty");
  for (double a : alphas)
    if (!(a > 0.0 && a < 1.0)) throw InvalidInput("experiment: alpha must lie in (0, 1)");
  if (bags < 2 || bags % 2 != 0) throw InvalidInput("experiment: bags must be even and at least 2");
  if (snr.empty()) throw InvalidInput("experiment: snr list is empty");
  for (double s : snr)
    if (!(s > 0.0)) throw InvalidInput("experiment: snr values must be positive");
  if (p1 < 2 || p2 < 2) throw InvalidInput("experiment: dimensions must be at least 2");
  if (lambda_grid < 1 || !(lambda_grid_ratio > 0.0 && lambda_grid_ratio <= 1.0))
    throw InvalidInput("experiment: bad lambda grid");
  switch (experiment) {
    case Preset::table1:
    case Preset::table2:
      if (spectrum.size() == 0) throw InvalidInput("experiment: spectrum is empty");
      if (train < 2 || train >= observations) throw InvalidInput("experiment: need 2 <= train < observations");
      if (experiment == Preset::table2 && ranks.empty()) throw InvalidInput("experiment: rank list is empty");
      break;
    case Preset::fig_kappa:
    case Preset::fig_top3:
      if (lambdas.empty()) throw InvalidInput("experiment: lambda list is empty");
      for (double l : lambdas)
        if (!(l > 0.0)) throw InvalidInput("experiment: lambdas must be positive");
      break;
    case Preset::alpha_sweep:
    case Preset::linear_vs_completion:
      if (ranks.empty()) throw InvalidInput("experiment: rank list is empty");
      if (validation < 1) throw InvalidInput("experiment: validation size must be positive");
      if (experiment == Preset::linear_vs_completion && linear_snr.empty())
        throw InvalidInput("experiment: linear snr list is empty");
      break;
    case Preset::denoise_bounds:
      if (gammas.empty() || ks.empty()) throw InvalidInput("experiment: gamma and k lists must be non-empty");
      if (mc_reps < 2) throw InvalidInput("experiment: mc_reps must be at least 2");
      for (double a : alphas)
        if (!(a > 0.5)) throw InvalidInput("experiment: bounds need alpha > 1/2");
      break;
  }
}

Json to_json(const ExperimentConfig& c) {
  Json j;
  j["experiment"] = to_string(c.experiment);
  j["p1"] = c.p1;
  j["p2"] = c.p2;
  j["spectrum"] = std::vector<double>(c.spectrum.data(), c.spectrum.data() + c.spectrum.size());
  j["ranks"] = c.ranks;
  j["snr"] = c.snr;
  j["snr_definition"] = snr_name(c.snr_definition);
  j["alphas"] = c.alphas;
  j["bags"] = c.bags;
  j["estimator"] = to_json(c.estimator);
  j["trials"] = c.trials;
  j["seed"] = c.seed;
  j["observations"] = c.observations;
  j["train"] = c.train;
  j["validation"] = c.validation;
  j["cv_folds"] = c.cv_folds;
  j["lambda_grid"] = c.lambda_grid;
  j["lambda_grid_ratio"] = c.lambda_grid_ratio;
  j["lambdas"] = c.lambdas;
  j["gammas"] = c.gammas;
  j["ks"] = c.ks;
  j["coherence"] = c.coherence;
  j["fixed_rank"] = c.fixed_rank;
  j["mc_reps"] = c.mc_reps;
  j["snr_mc_reps"] = c.snr_mc_reps;
  j["linear_p"] = c.linear_p;
  j["linear_snr"] = c.linear_snr;
  return j;
}

ExperimentConfig config_from_json(const Json& j) {
  const Preset p = parse_preset(j.value("experiment", std::string("table1")));
  return config_from_json(j, preset_config(p));
}

ExperimentConfig config_from_json(const Json& j, ExperimentConfig c) {
  if (!j.is_object()) throw InvalidInput("experiment config must be a JSON object");
  try {
    if (j.contains("experiment")) {
      const Preset p = parse_preset(j.at("experiment").get<std::string>());
      if (p != c.experiment) c = preset_config(p);
    }
    c.p1 = j.value("p1", c.p1);
    c.p2 = j.value("p2", c.p2);
    if (j.contains("spectrum")) {
      const auto s = j.at("spectrum").get<std::vector<double>>();
      c.spectrum = Eigen::Map<const Vector>(s.data(), static_cast<Index>(s.size()));
    }
    c.ranks = vec_or<Index>(j, "ranks", c.ranks);
    c.snr = vec_or<double>(j, "snr", c.snr);
    if (j.contains("snr_definition")) c.snr_definition = parse_snr(j.at("snr_definition").get<std::string>());
    c.alphas = vec_or<double>(j, "alphas", c.alphas);
    c.bags = j.value("bags", c.bags);
    if (j.contains("estimator")) c.estimator = estimator_from_json(j.at("estimator"), c.estimator);
    c.trials = j.value("trials", c.trials);
    c.seed = j.value("seed", c.seed);
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    c.observations = j.value("observations", c.observations);
    c.train = j.value("train", c.train);
    c.validation = j.value("validation", c.validation);
    c.cv_folds = j.value("cv_folds", c.cv_folds);
    c.lambda_grid = j.value("lambda_grid", c.lambda_grid);
    c.lambda_grid_ratio = j.value("lambda_grid_ratio", c.lambda_grid_ratio);
    c.lambdas = vec_or<double>(j, "lambdas", c.lambdas);
    c.gammas = vec_or<double>(j, "gammas", c.gammas);
    c.ks = vec_or<Index>(j, "ks", c.ks);
    c.coherence = j.value("coherence", c.coherence);
    c.fixed_rank = j.value("fixed_rank", c.fixed_rank);
    c.mc_reps = j.value("mc_reps", c.mc_reps);
    c.snr_mc_reps = j.value("snr_mc_reps", c.snr_mc_reps);
    c.linear_p = j.value("linear_p", c.linear_p);
    c.linear_snr = vec_or<double>(j, "linear_snr", c.linear_snr);
    c.threads = j.value("threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("experiment config: ") + e.what());
  }
  return c;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(cfg.trials);
  std::vector<TrialOutput> outputs(n);
  std::vector<char> done(n, 0);
  parallel_for(
      n,
      [&](std::size_t t) {
        if (g_stop) return;
        outputs[t] = run_trial(cfg, static_cast<int>(t));
        done[t] = 1;
      },
      cfg.threads);

  ExperimentResult res;
  std::vector<std::string> settings;
  std::map<std::string, std::vector<std::string>> methods;
  std::map<std::pair<std::string, std::string>, std::map<std::string, std::vector<double>>> metric;
  std::map<std::string, std::vector<std::string>> extra_keys;
  std::map<std::pair<std::string, std::string>, std::vector<double>> extra;
  int completed = 0;
  for (std::size_t t = 0; t < n; ++t) {
    if (!done[t]) break;  // keep the completed prefix only
    ++completed;
    for (const ResultRow& r : outputs[t].rows) {
      res.rows.push_back(r);
      if (std::find(settings.begin(), settings.end(), r.setting) == settings.end()) settings.push_back(r.setting);
      auto& ms = methods[r.setting];
      if (std::find(ms.begin(), ms.end(), r.method) == ms.end()) ms.push_back(r.method);
      auto& m = metric[{r.setting, r.method}];
      m["fd"].push_back(r.fd);
      m["pw"].push_back(r.pw);
      m["fdr"].push_back(r.fdr);
      m["rank"].push_back(r.rank);
      m["mse"].push_back(r.mse);
    }
    for (const auto& [setting, key, v] : outputs[t].extras) {
      auto& ks = extra_keys[setting];
      if (std::find(ks.begin(), ks.end(), key) == ks.end()) ks.push_back(key);
      extra[{setting, key}].push_back(v);
    }
  }

  Json s = report_envelope("experiment");
  s["experiment"] = to_string(cfg.experiment);
  s["config"] = to_json(cfg);
  s["trials_completed"] = completed;
  s["interrupted"] = completed < cfg.trials;
  s["rows"] = res.rows.size();
  Json arr = Json::array();
  for (const std::string& setting : settings) {
    Json e;
    e["setting"] = setting;
    Json ms;
    for (const std::string& m : methods[setting]) {
      const auto& vals = metric[{setting, m}];
      Json mj;
      mj["n"] = vals.at("fd").size();
      for (const char* k : {"fd", "pw", "fdr", "rank", "mse"}) mj[k] = stat(vals.at(k));
      ms[m] = mj;
    }
    e["methods"] = ms;
    Json ex = Json::object();
    for (const std::string& k : extra_keys[setting]) {
      const auto& v = extra[{setting, k}];
      ex[k] = stat(v);
      if (k == "lambda") ex[k]["values"] = v;
    }
    e["extras"] = ex;
    arr.push_back(e);
  }
  s["settings"] = arr;
  res.summary = std::move(s);
  return res;
}

void write_experiment(const ExperimentConfig& cfg, const ExperimentResult& res) {
  fs::create_directories(cfg.output_dir);
  std::ofstream out(cfg.output_dir / "results.csv");
  if (!out) throw InvalidInput("cannot write " + (cfg.output_dir / "results.csv").string());
  out << "trial,setting,method,fd,pw,fdr,rank,mse\n";
  for (const ResultRow& r : res.rows)
    out << r.trial << ',' << r.setting << ',' << r.method << ',' << num(r.fd) << ',' << num(r.pw) << ','
        << num(r.fdr) << ',' << num(r.rank) << ',' << num(r.mse) << '\n';
  if (!out) throw InvalidInput("write failed: results.csv");
  write_json(cfg.output_dir / "summary.json", res.summary);
}

}  // namespace ss3
