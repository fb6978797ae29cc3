#include <csignal>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ss3/bounds.hpp"
#include "ss3/errors.hpp"
#include "ss3/estimators.hpp"
#include "ss3/experiment.hpp"
#include "ss3/log.hpp"
#include "ss3/matrix_io.hpp"
#include "ss3/metrics.hpp"
#include "ss3/observations.hpp"
#include "ss3/random.hpp"
#include "ss3/report.hpp"
#include "ss3/sampling.hpp"
#include "ss3/stability.hpp"
#include "ss3/text.hpp"

namespace fs = std::filesystem;
using namespace ss3;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitInterrupted = 130;

volatile std::sig_atomic_t g_interrupted = 0;

void on_sigint(int) {
  g_interrupted = 1;
  request_experiment_stop();
}

// Flags shared by the commands that run an estimator.
struct EstimatorFlags {
  std::string kind = "svt";
  double lambda = -1.0;
  Index k = 0;
  int max_iters = 500;
  double conv_tol = 1e-6;
  int cv_folds = 5;
  int lambda_grid = 20;

  void add(CLI::App* app) {
    app->add_option("--estimator", kind, "Base estimator")
        ->check(CLI::IsMember({"svt", "als", "spectral", "pca"}))
        ->capture_default_str();
    app->add_option("--lambda", lambda, "Regularization; negative selects it by cross-validation (svt, als)")
        ->capture_default_str();
    app->add_option("--k", k, "Rank cap (als, spectral, pca)")->capture_default_str();
    app->add_option("--max-iters", max_iters, "Solver iteration limit")->capture_default_str();
    app->add_option("--tol", conv_tol, "Solver convergence tolerance")->capture_default_str();
    app->add_option("--cv-folds", cv_folds, "Folds when lambda is cross-validated")->capture_default_str();
    app->add_option("--lambda-grid", lambda_grid, "Grid size when lambda is cross-validated")->capture_default_str();
  }

  EstimatorConfig config(const ObservationSet& obs, std::uint64_t seed) const {
    EstimatorConfig c;
    c.kind = parse_estimator_kind(kind);
    c.k = k;
    c.max_iters = max_iters;
    c.conv_tol = conv_tol;
    c.seed = seed;
    c.lambda = lambda;
    const bool penalized = c.kind == EstimatorKind::svt || c.kind == EstimatorKind::als;
    if (penalized && lambda < 0.0) {
      const double hi = lambda_max(obs, c.kind);
      c.lambda = 0.0;
      c.lambda = select_lambda_cv(obs, c, log_grid(hi, hi * 1e-2, lambda_grid), cv_folds, derive_seed(seed, 0xcf))
                     .lambda;
    } else if (lambda < 0.0) {
      c.lambda = 0.0;
    }
    c.validate();
    return c;
  }
};

void emit(const Json& j, const std::string& out) {
  if (out.empty() || out == "-")
    std::cout << j.dump(2) << '\n';
  else
    write_json(out, j);
}

fs::path sibling(const fs::path& report, const std::string& suffix) {
  fs::path p = report;
  p.replace_filename(report.stem().string() + suffix);
  return p;
}

fs::path obs_path(const fs::path& dir, ObservationModel m) {
  return m == ObservationModel::entrywise ? dir / "obs.csv" : dir / "obs";
}

Vector parse_spectrum(const std::vector<double>& s) {
  if (s.empty()) throw InvalidInput("--spectrum must list at least one singular value");
  return Eigen::Map<const Vector>(s.data(), static_cast<Index>(s.size()));
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  std::string model = "entrywise";
  Index p1 = 70;
  Index p2 = 70;
  std::vector<double> spectrum{1, 1, 1, .5, .5, .5, .5, .5, .1, .1};
  Index units = 3186;
  double noise = -1.0;
  double snr = 2.0;
  std::string snr_definition;
  double gamma = 0.0;
  double coherence = 0.0;
  std::uint64_t seed = 0;
  int snr_mc_reps = 200;
  std::string out = "data";
};

int cmd_generate(const GenerateArgs& a) {
  const ObservationModel model = parse_observation_model(a.model);
  const Vector spec = parse_spectrum(a.spectrum);
  const SyntheticTruth truth = a.coherence > 0.0 ? gen_low_rank_coherent(a.p1, a.p2, spec, a.coherence, a.seed)
                                                 : gen_low_rank(a.p1, a.p2, spec, a.seed);
  DataModel dm;
  dm.model = model;
  dm.n = a.units;
  dm.gamma = a.gamma;
  dm.noise = a.noise;
  if (a.noise < 0.0) {
    SnrModel sm;
    sm.m = a.units;
    sm.gamma = a.gamma;
    if (!a.snr_definition.empty())
      sm.definition = a.snr_definition == "spectral"    ? SnrDefinition::spectral
                      : a.snr_definition == "rms_scalar" ? SnrDefinition::rms_scalar
                                                         : SnrDefinition::frobenius;
    else
      sm.definition = model == ObservationModel::replicate ? SnrDefinition::spectral
                      : model == ObservationModel::linear  ? SnrDefinition::rms_scalar
                                                           : SnrDefinition::frobenius;
    dm.noise = calibrate_snr(truth, sm, a.snr, a.snr_mc_reps, derive_seed(a.seed, 0x51));
  }
  const ObservationSet obs = draw_dataset(truth, dm, a.units, derive_seed(a.seed, 0x52));
  const fs::path dir = a.out;
  fs::create_directories(dir);
  save_observations(obs_path(dir, model), obs);
  write_truth_sidecar(dir, truth, dm);
  Json j = report_envelope("generate");
  j["observations"] = obs_path(dir, model).string();
  j["truth"] = (dir / "truth.json").string();
  j["data_model"] = to_json(dm);
  j["rank"] = truth.t_star.rank();
  std::cout << j.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------- estimate

struct EstimateArgs {
  std::string obs;
  EstimatorFlags est;
  std::uint64_t seed = 0;
  std::string out = "estimate.csv";
};

int cmd_estimate(const EstimateArgs& a) {
  const ObservationSet obs = load_observations(a.obs);
  const EstimatorConfig cfg = a.est.config(obs, a.seed);
  Json j = report_envelope("estimate");
  j["estimator"] = to_json(cfg);
  if (cfg.kind == EstimatorKind::pca_column) {
    const Subspace c = estimate_column_space(obs, cfg);
    write_matrix_csv(a.out, c.basis());
    j["column_basis"] = a.out;
    j["rank"] = c.rank();
  } else {
    const Matrix l = estimate_matrix(obs, cfg);
    write_matrix_csv(a.out, l);
    const TangentSpace t = extract_tangent(l, cfg.rank_tol);
    j["estimate"] = a.out;
    j["rank"] = t.rank();
    j["dim_tangent"] = t.dim();
  }
  std::cout << j.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------- stabilize

struct StabilizeArgs {
  std::string obs;
  EstimatorFlags est;
  double alpha = 0.7;
  Index bags = 100;
  std::string mode = "tangent";
  std::string search = "scan";
  bool full_curve = false;
  bool rescale_lambda = false;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string truth;
  std::string out = "report.json";
};

int cmd_stabilize(const StabilizeArgs& a) {
  if (a.alpha <= 0.5)
    warn("alpha <= 0.5: the selection is defined but the false-discovery bounds need alpha in (1/2, 1)");
  const ObservationSet obs = load_observations(a.obs);
  PipelineConfig pc;
  pc.alpha = a.alpha;
  pc.bags = a.bags;
  pc.seed = a.seed;
  pc.mode = parse_stability_mode(a.mode);
  pc.search.search = a.search == "binary" ? RankSearch::binary : RankSearch::scan;
  pc.search.full_curve = a.full_curve;
  pc.rescale_lambda = a.rescale_lambda;
  pc.threads = a.threads;
  const EstimatorConfig est = a.est.config(obs, derive_seed(a.seed, 0xe5));
  const PipelineResult pr = run_pipeline(obs, est, pc);

  const fs::path out = a.out;
  if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
  const fs::path col = sibling(out, "_col.csv");
  const fs::path row = sibling(out, "_row.csv");
  Json j = report_envelope("stability");
  j["estimator"] = to_json(est);
  j["bags"] = a.bags;
  j["seed"] = a.seed;
  j["rescale_lambda"] = a.rescale_lambda;
  j["report"] = to_json(pr.report);
  Json bases;
  if (pc.mode == StabilityMode::column) {
    write_matrix_csv(col, pr.report.selected_col.basis());
    bases["col"] = col.filename().string();
  } else {
    write_matrix_csv(col, pr.report.selected.col().basis());
    write_matrix_csv(row, pr.report.selected.row().basis());
    bases["col"] = col.filename().string();
    bases["row"] = row.filename().string();
  }
  j["bases"] = bases;
  if (!a.truth.empty()) {
    const TruthSidecar ts = read_truth_sidecar(a.truth);
    j["metrics"] = pc.mode == StabilityMode::column
                       ? to_json(column_metrics(pr.report.selected_col, ts.truth.t_star.col()))
                       : to_json(discovery_metrics(pr.report.selected, ts.truth.t_star));
  }
  write_json(out, j);
  std::cout << out.string() << ": r=" << pr.report.r_selected << " bags_used=" << pr.report.bags_used << '\n';
  return 0;
}

// ---------------------------------------------------------------- metrics

struct MetricsArgs {
  std::string estimate;
  std::string truth;
  bool column = false;
  std::string out;
};

// A stabilize report (its basis CSVs) or an estimate matrix.
std::pair<std::optional<TangentSpace>, Subspace> load_estimate(const fs::path& path) {
  if (path.extension() == ".json") {
    const Json j = read_json(path);
    if (!j.contains("bases")) throw InvalidInput(path.string() + ": not a stabilize report");
    const fs::path dir = path.parent_path();
    Subspace col(read_matrix(dir / j["bases"]["col"].get<std::string>()));
    if (!j["bases"].contains("row")) return {std::nullopt, col};
    Subspace row(read_matrix(dir / j["bases"]["row"].get<std::string>()));
    return {TangentSpace(col, row), col};
  }
  const TangentSpace t = extract_tangent(read_matrix(path));
  return {t, t.col()};
}

int cmd_metrics(const MetricsArgs& a) {
  const TruthSidecar ts = read_truth_sidecar(a.truth);
  const auto [t, col] = load_estimate(a.estimate);
  Json j = report_envelope("metrics");
  if (a.column || !t) {
    j["mode"] = "column";
    const DiscoveryMetrics m = column_metrics(col, ts.truth.t_star.col());
    j["fd"] = m.fd;
    j["pw"] = m.pw;
    j["fdr"] = m.fdr;
    j["dim_estimate"] = col.rank();
    j["dim_truth_complement"] = ts.truth.t_star.p1() - ts.truth.t_star.rank();
  } else {
    j["mode"] = "tangent";
    const DiscoveryMetrics m = discovery_metrics(*t, ts.truth.t_star);
    j["fd"] = m.fd;
    j["pw"] = m.pw;
    j["fdr"] = m.fdr;
    j["dim_estimate"] = t->dim();
    j["dim_truth_complement"] = ts.truth.t_star.complement_dim();
    j["rank_estimate"] = t->rank();
  }
  emit(j, a.out);
  return 0;
}

// ---------------------------------------------------------------- bounds

struct BoundsArgs {
  std::string obs;
  EstimatorFlags est;
  double alpha = 0.9;
  Index bags = 100;
  std::string mode = "tangent";
  std::string f_basis = "independent";
  std::string kappa_basis = "independent";
  int mc_reps = 100;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string truth;
  std::string out;
};

int cmd_bounds(const BoundsArgs& a) {
  if (!(a.alpha > 0.5 && a.alpha < 1.0)) throw InvalidInput("bounds: --alpha must lie in (1/2, 1)");
  const ObservationSet obs = load_observations(a.obs);
  const bool column = a.mode == "column";
  PipelineConfig pc;
  pc.alpha = a.alpha;
  pc.bags = a.bags;
  pc.seed = a.seed;
  pc.mode = column ? StabilityMode::column : StabilityMode::tangent;
  pc.threads = a.threads;
  const EstimatorConfig est = a.est.config(obs, derive_seed(a.seed, 0xe5));
  const PipelineResult pr = run_pipeline(obs, est, pc);

  Json j = report_envelope("bounds");
  j["estimator"] = to_json(est);
  j["stability"] = to_json(pr.report);
  if (!a.truth.empty()) {
    const TruthSidecar ts = read_truth_sidecar(a.truth);
    if (!ts.data) throw InvalidInput("bounds: the truth sidecar carries no data model (write it with generate)");
    DataModel dm = *ts.data;
    dm.n = obs.size();
    BoundOptions bo;
    bo.alpha = a.alpha;
    bo.f_basis = parse_basis_mode(a.f_basis);
    bo.kappa_basis = parse_basis_mode(a.kappa_basis);
    bo.mc_reps = a.mc_reps;
    bo.seed = derive_seed(a.seed, 0xb0);
    bo.threads = a.threads;
    const BoundReport br =
        column ? theorem4_column_terms(ts.truth, est, dm, pr.report.selected_col, pr.bag_columns, pr.report.bag_ids, bo)
               : theorem4_terms(ts.truth, est, dm, pr.report.selected, pr.bag_tangents, pr.report.bag_ids, bo);
    j["oracle"] = true;
    j["bound"] = to_json(br);
    j["metrics"] = column ? to_json(column_metrics(pr.report.selected_col, ts.truth.t_star.col()))
                          : to_json(discovery_metrics(pr.report.selected, ts.truth.t_star));
  } else {
    j["oracle"] = false;
    const double q_hat = pr.report.trace_p_avg;
    Json b;
    b["q_hat"] = q_hat;
    b["dimT_bound"] = dimT_bound(q_hat, a.alpha);
    if (!column) {
      const KappaIndiv ki = kappa_indiv_estimate(average_projectors(pr.bag_tangents));
      b["kappa_indiv"] = ki.kappa;
      b["prop6_total"] = prop6_bound(q_hat, obs.p1(), obs.p2(), ki.kappa, a.alpha);
    } else {
      b["note"] = "column mode: kappa_indiv needs tangent bags";
    }
    j["bound"] = b;
  }
  emit(j, a.out);
  return 0;
}

// ---------------------------------------------------------------- experiment

struct ExperimentArgs {
  std::string preset = "table1";
  std::string config;
  std::optional<int> trials;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<Index> bags;
  std::string out;
};

int cmd_experiment(const ExperimentArgs& a, bool preset_given) {
  ExperimentConfig cfg = preset_config(parse_preset(a.preset));
  if (!a.config.empty()) {
    Json j = read_json(a.config);
    if (preset_given && j.is_object()) j["experiment"] = a.preset;
    cfg = config_from_json(j);
  }
  if (a.trials) cfg.trials = *a.trials;
  if (a.seed) cfg.seed = *a.seed;
  if (a.threads) cfg.threads = *a.threads;
  if (a.bags) cfg.bags = *a.bags;
  if (!a.out.empty()) cfg.output_dir = a.out;
  cfg.validate();
  std::signal(SIGINT, on_sigint);
  const ExperimentResult res = run_experiment(cfg);
  write_experiment(cfg, res);
  std::cout << (cfg.output_dir / "summary.json").string() << ": " << res.summary["trials_completed"] << "/"
            << cfg.trials << " trials, " << res.rows.size() << " rows\n";
  return g_interrupted ? kExitInterrupted : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ss3: subspace stability selection for low-rank estimation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "ss3 1.0 (report schema " + std::string(kReportSchema) + ")");
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Silence warnings");

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Draw a synthetic dataset and write it with a truth sidecar");
  gen->add_option("--model", ga.model, "Observation model")
      ->check(CLI::IsMember({"entrywise", "completion", "replicate", "denoise", "linear"}))
      ->capture_default_str();
  gen->add_option("--p1", ga.p1, "Rows")->capture_default_str();
  gen->add_option("--p2", ga.p2, "Columns")->capture_default_str();
  gen->add_option("--spectrum", ga.spectrum, "Singular values of the truth")->delimiter(',')->capture_default_str();
  gen->add_option("--units,-n", ga.units, "Entries, replicates or measurements")->capture_default_str();
  gen->add_option("--noise", ga.noise, "Noise scale (sigma, or delta for replicates); negative calibrates --snr")
      ->capture_default_str();
  gen->add_option("--snr", ga.snr, "Target SNR when --noise is not given")->capture_default_str();
  gen->add_option("--snr-definition", ga.snr_definition, "frobenius, spectral or rms_scalar (default by model)")
      ->check(CLI::IsMember({"frobenius", "spectral", "rms_scalar"}));
  gen->add_option("--gamma", ga.gamma, "Replicate perturbation weight")->capture_default_str();
  gen->add_option("--coherence", ga.coherence, "Truth incoherence (0 = Haar)")->capture_default_str();
  gen->add_option("--snr-mc-reps", ga.snr_mc_reps, "Monte-Carlo draws for SNR calibration")->capture_default_str();
  gen->add_option("--seed", ga.seed, "Seed")->capture_default_str();
  gen->add_option("--out", ga.out, "Output directory")->capture_default_str();

  EstimateArgs ea;
  auto* est = app.add_subcommand("estimate", "Fit the base estimator on all observations");
  est->add_option("--obs", ea.obs, "Observations (CSV file or directory)")->required();
  ea.est.add(est);
  est->add_option("--seed", ea.seed, "Seed")->capture_default_str();
  est->add_option("--out", ea.out, "Estimate matrix CSV")->capture_default_str();

  StabilizeArgs sa;
  auto* stab = app.add_subcommand("stabilize", "Run subspace stability selection");
  stab->add_option("--obs", sa.obs, "Observations (CSV file or directory)")->required();
  sa.est.add(stab);
  stab->add_option("--alpha", sa.alpha, "Stability threshold")->capture_default_str();
  stab->add_option("--bags", sa.bags, "Number of bags (even)")->capture_default_str();
  stab->add_option("--mode", sa.mode, "Selection mode")
      ->check(CLI::IsMember({"tangent", "tangent-modified", "column"}))
      ->capture_default_str();
  stab->add_option("--search", sa.search, "Rank search")->check(CLI::IsMember({"scan", "binary"}))->capture_default_str();
  stab->add_flag("--full-curve", sa.full_curve, "Evaluate sigma_min at every rank");
  stab->add_flag("--rescale-lambda", sa.rescale_lambda, "Halve lambda on the half-size bags");
  stab->add_option("--threads", sa.threads, "Worker threads (0 = all cores)")->capture_default_str();
  stab->add_option("--truth", sa.truth, "Truth sidecar; adds discovery metrics to the report");
  stab->add_option("--seed", sa.seed, "Seed")->capture_default_str();
  stab->add_option("--out", sa.out, "Report JSON; bases go next to it as <stem>_col.csv, <stem>_row.csv")
      ->capture_default_str();

  MetricsArgs ma;
  auto* met = app.add_subcommand("metrics", "False discovery and power of an estimate against the truth");
  met->add_option("--estimate", ma.estimate, "Estimate matrix CSV or stabilize report JSON")->required();
  met->add_option("--truth", ma.truth, "Truth matrix CSV or sidecar")->required();
  met->add_flag("--column", ma.column, "Column-space metrics");
  met->add_option("--out", ma.out, "Output JSON (default stdout)");

  BoundsArgs ba;
  auto* bnd = app.add_subcommand("bounds", "False-discovery bounds for the selection");
  bnd->add_option("--obs", ba.obs, "Observations (CSV file or directory)")->required();
  ba.est.add(bnd);
  bnd->add_option("--alpha", ba.alpha, "Stability threshold in (1/2, 1)")->capture_default_str();
  bnd->add_option("--bags", ba.bags, "Number of bags (even)")->capture_default_str();
  bnd->add_option("--mode", ba.mode, "Bound form")->check(CLI::IsMember({"tangent", "column"}))->capture_default_str();
  bnd->add_option("--f-basis", ba.f_basis, "F term basis form")
      ->check(CLI::IsMember({"independent", "dependent", "basis_independent", "basis_dependent"}))
      ->capture_default_str();
  bnd->add_option("--kappa-basis", ba.kappa_basis, "kappa_bag basis form")
      ->check(CLI::IsMember({"independent", "dependent", "basis_independent", "basis_dependent"}))
      ->capture_default_str();
  bnd->add_option("--mc-reps", ba.mc_reps, "Monte-Carlo half-sample draws for F")->capture_default_str();
  bnd->add_option("--truth", ba.truth, "Truth sidecar: enables oracle terms (F, kappa_bag)");
  bnd->add_option("--threads", ba.threads, "Worker threads (0 = all cores)")->capture_default_str();
  bnd->add_option("--seed", ba.seed, "Seed")->capture_default_str();
  bnd->add_option("--out", ba.out, "Output JSON (default stdout)");

  ExperimentArgs xa;
  auto* exp = app.add_subcommand("experiment", "Run a simulation study; writes results.csv and summary.json");
  auto* preset_opt = exp->add_option("--preset", xa.preset, "Study")
                         ->check(CLI::IsMember({"table1", "table2", "fig_kappa", "fig_top3", "alpha_sweep",
                                                "denoise_bounds", "linear_vs_completion"}))
                         ->capture_default_str();
  exp->add_option("--config", xa.config, "JSON config; keys as in summary.json's \"config\", flags override it");
  exp->add_option("--trials", xa.trials, "Trials");
  exp->add_option("--seed", xa.seed, "Seed");
  exp->add_option("--bags", xa.bags, "Bags per pipeline");
  exp->add_option("--threads", xa.threads, "Worker threads (0 = all cores)");
  exp->add_option("--out", xa.out, "Output directory (default: results)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  if (quiet) set_warnings_enabled(false);

  try {
    if (*gen) return cmd_generate(ga);
    if (*est) return cmd_estimate(ea);
    if (*stab) return cmd_stabilize(sa);
    if (*met) return cmd_metrics(ma);
    if (*bnd) return cmd_bounds(ba);
    if (*exp) return cmd_experiment(xa, preset_opt->count() > 0);
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitConfig;
}
