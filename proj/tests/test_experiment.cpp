#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ss3/errors.hpp"
#include "ss3/experiment.hpp"
#include "ss3/log.hpp"

using namespace ss3;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny(Preset p) {
  ExperimentConfig c = preset_config(p);
  c.p1 = c.p2 = 12;
  c.spectrum = (Vector(2) << 1.0, 0.5).finished();
  c.snr = {2.0};
  c.bags = 10;
  c.trials = 3;
  c.seed = 11;
  c.observations = 100;
  c.train = 70;
  c.validation = 50;
  c.lambda_grid = 4;
  c.snr_mc_reps = 20;
  c.cv_folds = 3;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("table1: row count, method set and determinism") {
  set_warnings_enabled(false);
  ExperimentConfig c = tiny(Preset::table1);
  c.snr = {1.5, 3.0};
  const ExperimentResult a = run_experiment(c);
  CHECK(a.rows.size() == 3u * 2u * 2u);
  const Json& s = a.summary;
  CHECK(s["schema"] == kReportSchema);
  CHECK(s["settings"].size() == 2);
  CHECK(s["settings"][0]["methods"].contains("none"));
  CHECK(s["settings"][0]["methods"].contains("s3"));
  CHECK(s["settings"][0]["extras"]["lambda"]["values"].size() == 3);
  CHECK(s["trials_completed"] == 3);
  CHECK(s["interrupted"] == false);
  for (const ResultRow& r : a.rows) {
    CHECK(r.fd >= -1e-9);
    CHECK(r.fd + r.pw == doctest::Approx(r.rank * (24.0 - r.rank)).epsilon(1e-9));
    CHECK(std::isfinite(r.mse));
  }

  c.threads = 1;
  const ExperimentResult b = run_experiment(c);
  CHECK(a.summary.dump() == b.summary.dump());

  const fs::path d1 = fs::temp_directory_path() / "ss3_exp_a";
  const fs::path d2 = fs::temp_directory_path() / "ss3_exp_b";
  fs::remove_all(d1);
  fs::remove_all(d2);
  c.output_dir = d1;
  write_experiment(c, a);
  c.output_dir = d2;
  write_experiment(c, b);
  CHECK(slurp(d1 / "summary.json") == slurp(d2 / "summary.json"));
  const std::string csv = slurp(d1 / "results.csv");
  CHECK(count_lines(csv) == 1 + a.rows.size());
  CHECK(csv.rfind("trial,setting,method,fd,pw,fdr,rank,mse\n", 0) == 0);
}

TEST_CASE("different seeds change the summary") {
  set_warnings_enabled(false);
  ExperimentConfig c = tiny(Preset::table1);
  c.trials = 1;
  const std::string a = run_experiment(c).summary.dump();
  c.seed = 12;
  CHECK(run_experiment(c).summary.dump() != a);
}

TEST_CASE("table2 and lambda sweeps: rows = trials x settings x methods") {
  set_warnings_enabled(false);
  ExperimentConfig t2 = tiny(Preset::table2);
  t2.ranks = {1, 2, 3};
  t2.trials = 2;
  CHECK(run_experiment(t2).rows.size() == 2u * 3u * 2u);

  ExperimentConfig fk = tiny(Preset::fig_kappa);
  fk.lambdas = {0.1, 0.5};
  fk.trials = 2;
  const ExperimentResult r = run_experiment(fk);
  CHECK(r.rows.size() == 2u * 2u * 3u);
  CHECK(r.summary["settings"][0]["methods"].contains("avg"));

  ExperimentConfig ft = tiny(Preset::fig_top3);
  ft.lambdas = {0.2};
  ft.trials = 2;
  ft.fixed_rank = 2;
  ft.coherence = 0.0;
  const ExperimentResult q = run_experiment(ft);
  CHECK(q.rows.size() == 2u * 1u * 2u);
  for (const ResultRow& row : q.rows) CHECK(row.rank <= 2.0);
}

TEST_CASE("alpha sweep: ranks are non-increasing in alpha") {
  set_warnings_enabled(false);
  ExperimentConfig c = tiny(Preset::alpha_sweep);
  c.ranks = {2};
  c.alphas = {0.6, 0.7, 0.8};
  c.estimator.k = 4;
  c.trials = 2;
  const ExperimentResult r = run_experiment(c);
  CHECK(r.rows.size() == 2u * 3u * 2u);
  for (int t = 0; t < 2; ++t) {
    double prev = 1e9;
    for (const ResultRow& row : r.rows)
      if (row.trial == t && row.method == "s3") {
        CHECK(row.rank <= prev);
        prev = row.rank;
      }
  }
}

TEST_CASE("denoise bounds: bound extras are present and the bound holds on average") {
  set_warnings_enabled(false);
  ExperimentConfig c = tiny(Preset::denoise_bounds);
  c.p1 = c.p2 = 10;
  c.spectrum = (Vector(2) << 6.0, 3.0).finished();
  c.snr = {0.5};
  c.gammas = {5.0};
  c.ks = {2};
  c.alphas = {0.8, 0.9};
  c.observations = 20;
  c.mc_reps = 8;
  c.trials = 2;
  const ExperimentResult r = run_experiment(c);
  CHECK(r.rows.size() == 2u * 2u * 2u);
  for (const Json& s : r.summary["settings"]) {
    const Json& ex = s["extras"];
    for (const char* k : {"theorem4_total", "prop5_total", "F_dependent", "F_independent", "kappa_bag", "slack_term"})
      CHECK(ex.contains(k));
    CHECK(ex["kappa_bag"]["mean"].get<double>() >= 0.0);
    CHECK(s["methods"]["s3"]["fd"]["mean"].get<double>() >= 0.0);
  }
}

TEST_CASE("ranks_for_alphas reads the selection off one curve") {
  StabilityReport rep;
  rep.sigma_min_curve = {{1, 0.95}, {2, 0.85}, {3, 0.72}, {4, 0.4}};
  rep.eig_col = Vector::Ones(6);
  rep.eig_row = Vector::Ones(6);
  const auto r = ranks_for_alphas(rep, {0.7, 0.8, 0.9, 0.99});
  CHECK(r == std::vector<Index>{3, 2, 1, 0});
  CHECK_THROWS_AS(ranks_for_alphas(rep, {0.3}), InvalidInput);
  rep.sigma_min_curve = {{1, 0.95}, {2, 0.9}};
  rep.eig_col = Vector::Ones(2);
  CHECK(ranks_for_alphas(rep, {0.5}) == std::vector<Index>{2});
}

TEST_CASE("config JSON: round trip, overrides and validation") {
  for (Preset p : {Preset::table1, Preset::table2, Preset::fig_kappa, Preset::fig_top3, Preset::alpha_sweep,
                   Preset::denoise_bounds, Preset::linear_vs_completion}) {
    const ExperimentConfig c = preset_config(p);
    CHECK_NOTHROW(c.validate());
    CHECK(parse_preset(to_string(p)) == p);
    const ExperimentConfig back = config_from_json(to_json(c));
    CHECK(to_json(back).dump() == to_json(c).dump());
  }
  const ExperimentConfig a = config_from_json(Json::parse(R"({"experiment": "alpha_sweep", "trials": 4})"));
  CHECK(a.experiment == Preset::alpha_sweep);
  CHECK(a.trials == 4);
  CHECK(a.alphas.size() == 9);
  CHECK(a.alphas.front() == doctest::Approx(0.6));
  CHECK(a.alphas.back() == doctest::Approx(0.8));

  ExperimentConfig bad = preset_config(Preset::table1);
  bad.trials = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
  bad = preset_config(Preset::fig_kappa);
  bad.lambdas.clear();
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
  bad = preset_config(Preset::table1);
  bad.alphas.clear();
  CHECK_THROWS_AS(run_experiment(bad), InvalidInput);
  CHECK_THROWS_AS(parse_preset("table9"), InvalidInput);
  CHECK_THROWS_AS(config_from_json(Json::parse(R"({"trials": "x"})")), InvalidInput);
  CHECK_THROWS_AS(config_from_json(Json::parse("[1]"), preset_config(Preset::table1)), InvalidInput);
}
