#include "ss3/report.hpp"

#include <cmath>
#include <fstream>

#include "ss3/errors.hpp"
#include "ss3/matrix_io.hpp"

namespace ss3 {

namespace fs = std::filesystem;

namespace {

Json vector_json(const Vector& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

}  // namespace

Json report_envelope(const std::string& kind) {
  Json j;
  j["schema"] = kReportSchema;
  j["kind"] = kind;
  return j;
}

Json to_json(const DiscoveryMetrics& m) {
  Json j;
  j["fd"] = m.fd;
  j["pw"] = m.pw;
  j["fdr"] = m.fdr;
  j["dim_estimate"] = m.dim_estimate;
  j["dim_truth"] = m.dim_truth;
  j["dim_truth_complement"] = m.dim_truth_complement;
  return j;
}

Json to_json(const EstimatorConfig& c) {
  Json j;
  j["kind"] = to_string(c.kind);
  j["lambda"] = c.lambda;
  j["k"] = c.k;
  j["max_iters"] = c.max_iters;
  j["conv_tol"] = c.conv_tol;
  j["rank_tol"] = c.rank_tol;
  j["seed"] = c.seed;
  j["accelerate"] = c.accelerate;
  return j;
}

EstimatorConfig estimator_from_json(const Json& j, EstimatorConfig c) {
  if (!j.is_object()) throw InvalidInput("estimator config must be a JSON object");
  if (j.contains("kind")) c.kind = parse_estimator_kind(j.at("kind").get<std::string>());
  if (j.contains("lambda")) c.lambda = j.at("lambda").get<double>();
  if (j.contains("k")) c.k = j.at("k").get<Index>();
  if (j.contains("max_iters")) c.max_iters = j.at("max_iters").get<int>();
  if (j.contains("conv_tol")) c.conv_tol = j.at("conv_tol").get<double>();
  if (j.contains("rank_tol")) c.rank_tol = j.at("rank_tol").get<double>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("accelerate")) c.accelerate = j.at("accelerate").get<bool>();
  return c;
}

Json to_json(const DataModel& d) {
  Json j;
  j["model"] = to_string(d.model);
  j["n"] = d.n;
  j["noise"] = d.noise;
  j["gamma"] = d.gamma;
  return j;
}

DataModel data_model_from_json(const Json& j) {
  DataModel d;
  d.model = parse_observation_model(j.at("model").get<std::string>());
  d.n = j.at("n").get<Index>();
  d.noise = j.value("noise", 0.0);
  d.gamma = j.value("gamma", 0.0);
  return d;
}

Json to_json(const StabilityReport& r) {
  Json j;
  j["mode"] = to_string(r.mode);
  j["alpha"] = r.alpha;
  j["membership_level"] = r.membership_level;
  j["r_selected"] = r.r_selected;
  if (r.mode == StabilityMode::column)
    j["dim_selected"] = r.selected_col.rank();
  else
    j["dim_selected"] = r.selected.dim();
  j["trace_p_avg"] = r.trace_p_avg;
  j["bags_used"] = r.bags_used;
  Json curve = Json::array();
  for (const auto& [rank, s] : r.sigma_min_curve) curve.push_back({{"r", rank}, {"sigma_min", s}});
  j["sigma_min_curve"] = curve;
  j["eig_col"] = vector_json(r.eig_col);
  j["eig_row"] = vector_json(r.eig_row);
  j["bag_ids"] = r.bag_ids;
  return j;
}

Json to_json(const BoundReport& r) {
  Json j;
  j["mode"] = to_string(r.mode);
  j["f_basis"] = to_string(r.f_basis);
  j["kappa_basis"] = to_string(r.kappa_basis);
  j["alpha"] = r.alpha;
  j["F"] = r.f;
  j["kappa_bag"] = r.kappa_bag;
  j["kappa_bag_raw"] = r.kappa_bag_raw;
  j["slack_term"] = r.slack_term;
  j["theorem4_total"] = r.theorem4_total;
  j["prop5_total"] = r.prop5_total;
  j["q"] = r.q;
  j["q_hat"] = r.q_hat;
  j["kappa_indiv"] = r.kappa_indiv;
  j["prop6_total"] = r.prop6_total;
  j["dim_selected"] = r.dim_selected;
  j["pairs_used"] = r.pairs_used;
  j["kappa_within_prop5"] = r.kappa_within_prop5;
  j["mc_reps"] = r.mc_reps;
  return j;
}

void write_json(const fs::path& path, const Json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw InvalidInput("write failed: " + path.string());
}

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot read " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
}

void write_truth_sidecar(const fs::path& dir, const SyntheticTruth& truth, const std::optional<DataModel>& data) {
  fs::create_directories(dir);
  write_matrix_csv(dir / "truth.csv", truth.l_star);
  Json j = report_envelope("truth");
  j["matrix"] = "truth.csv";
  j["p1"] = truth.l_star.rows();
  j["p2"] = truth.l_star.cols();
  j["rank"] = truth.t_star.rank();
  j["spectrum"] = vector_json(truth.spectrum);
  j["seed"] = truth.seed;
  if (data) j["data_model"] = to_json(*data);
  write_json(dir / "truth.json", j);
}

TruthSidecar read_truth_sidecar(const fs::path& path) {
  fs::path meta;
  if (fs::is_directory(path))
    meta = path / "truth.json";
  else if (path.extension() == ".json")
    meta = path;
  if (meta.empty()) return {truth_from_matrix(read_matrix(path)), std::nullopt};

  const Json j = read_json(meta);
  if (j.value("schema", "") != std::string(kReportSchema) || j.value("kind", "") != "truth")
    throw InvalidInput(meta.string() + ": not a truth sidecar");
  const fs::path mat = meta.parent_path() / j.at("matrix").get<std::string>();
  TruthSidecar out{truth_from_matrix(read_matrix(mat), j.value("seed", std::uint64_t{0})), std::nullopt};
  if (j.contains("data_model")) out.data = data_model_from_json(j.at("data_model"));
  return out;
}

}  // namespace ss3
