#include "ss3/observations.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <regex>
#include <string>

#include "json.hpp"
#include "ss3/errors.hpp"
#include "ss3/matrix_io.hpp"
#include "ss3/text.hpp"

namespace ss3 {

namespace fs = std::filesystem;

const char* to_string(ObservationModel m) {
  switch (m) {
    case ObservationModel::entrywise: return "entrywise";
    case ObservationModel::replicate: return "replicate";
    case ObservationModel::linear: return "linear";
  }
  return "?";
}

ObservationModel parse_observation_model(const std::string& s) {
  if (s == "entrywise" || s == "completion") return ObservationModel::entrywise;
  if (s == "replicate" || s == "denoise") return ObservationModel::replicate;
  if (s == "linear") return ObservationModel::linear;
  throw InvalidInput("unknown observation model: " + s);
}

ObservationSet ObservationSet::entrywise(Index p1, Index p2, std::vector<Entry> entries) {
  if (p1 < 1 || p2 < 1) throw InvalidInput("entrywise observations: dimensions must be positive");
  if (entries.empty()) throw InvalidInput("entrywise observations: empty observation set");
  std::vector<Index> keys;
  keys.reserve(entries.size());
  for (const Entry& e : entries) {
    if (e.i < 0 || e.i >= p1 || e.j < 0 || e.j >= p2)
      throw InvalidInput("entrywise observations: index out of range");
    if (!std::isfinite(e.y)) throw InvalidInput("entrywise observations: non-finite value");
    keys.push_back(e.i + p1 * e.j);
  }
  std::sort(keys.begin(), keys.end());
  if (std::adjacent_find(keys.begin(), keys.end()) != keys.end())
    throw InvalidInput("entrywise observations: duplicate index");
  ObservationSet o;
  o.model_ = ObservationModel::entrywise;
  o.p1_ = p1;
  o.p2_ = p2;
  o.entries_ = std::move(entries);
  return o;
}

ObservationSet ObservationSet::replicates(std::vector<Matrix> replicates) {
  if (replicates.empty()) throw InvalidInput("replicate observations: need at least one replicate");
  const Index p1 = replicates.front().rows();
  const Index p2 = replicates.front().cols();
  if (p1 < 1 || p2 < 1) throw InvalidInput("replicate observations: empty replicate");
  for (const Matrix& r : replicates) {
    if (r.rows() != p1 || r.cols() != p2) throw DimensionMismatch("replicate observations: inconsistent shapes");
    if (!r.allFinite()) throw InvalidInput("replicate observations: non-finite value");
  }
  ObservationSet o;
  o.model_ = ObservationModel::replicate;
  o.p1_ = p1;
  o.p2_ = p2;
  o.replicates_ = std::move(replicates);
  return o;
}

ObservationSet ObservationSet::linear(Index p1, Index p2, Matrix sensing, Vector y) {
  if (p1 < 1 || p2 < 1) throw InvalidInput("linear observations: dimensions must be positive");
  if (sensing.rows() < 1) throw InvalidInput("linear observations: empty observation set");
  if (sensing.cols() != p1 * p2) throw DimensionMismatch("linear observations: sensing rows must have p1*p2 entries");
  if (y.size() != sensing.rows()) throw DimensionMismatch("linear observations: value count mismatch");
  if (!sensing.allFinite() || !y.allFinite()) throw InvalidInput("linear observations: non-finite value");
  ObservationSet o;
  o.model_ = ObservationModel::linear;
  o.p1_ = p1;
  o.p2_ = p2;
  o.sensing_ = std::move(sensing);
  o.y_ = std::move(y);
  return o;
}

Index ObservationSet::size() const {
  switch (model_) {
    case ObservationModel::entrywise: return static_cast<Index>(entries_.size());
    case ObservationModel::replicate: return static_cast<Index>(replicates_.size());
    case ObservationModel::linear: return y_.size();
  }
  return 0;
}

ObservationSet ObservationSet::subset(const std::vector<Index>& units) const {
  if (units.empty()) throw InvalidInput("ObservationSet::subset: empty selection");
  for (Index u : units)
    if (u < 0 || u >= size()) throw InvalidInput("ObservationSet::subset: unit index out of range");
  ObservationSet o;
  o.model_ = model_;
  o.p1_ = p1_;
  o.p2_ = p2_;
  switch (model_) {
    case ObservationModel::entrywise:
      o.entries_.reserve(units.size());
      for (Index u : units) o.entries_.push_back(entries_[static_cast<std::size_t>(u)]);
      break;
    case ObservationModel::replicate:
      o.replicates_.reserve(units.size());
      for (Index u : units) o.replicates_.push_back(replicates_[static_cast<std::size_t>(u)]);
      break;
    case ObservationModel::linear: {
      const Index n = static_cast<Index>(units.size());
      o.sensing_.resize(n, sensing_.cols());
      o.y_.resize(n);
      for (Index k = 0; k < n; ++k) {
        o.sensing_.row(k) = sensing_.row(units[static_cast<std::size_t>(k)]);
        o.y_(k) = y_(units[static_cast<std::size_t>(k)]);
      }
      break;
    }
  }
  return o;
}

Matrix ObservationSet::replicate_mean() const {
  if (model_ != ObservationModel::replicate) throw InvalidInput("replicate_mean: not a replicate observation set");
  Matrix mean = Matrix::Zero(p1_, p2_);
  for (const Matrix& r : replicates_) mean += r;
  return mean / static_cast<double>(replicates_.size());
}

Matrix ObservationSet::functional(Index k) const {
  if (model_ != ObservationModel::linear) throw InvalidInput("functional: not a linear observation set");
  const Vector row = sensing_.row(k).transpose();
  return Eigen::Map<const Matrix>(row.data(), p1_, p2_);
}

// -------------------------------------------------------------------- I/O

ObservationSet read_entrywise_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open observation file: " + path.string());
  const std::regex header(R"(#\s*ss3-entrywise\s+p1=(\d+)\s+p2=(\d+).*)");
  Index p1 = 0;
  Index p2 = 0;
  std::vector<Entry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view body = trim(line);
    if (body.empty()) continue;
    if (body.front() == '#') {
      std::smatch m;
      const std::string s(body);
      if (std::regex_match(s, m, header)) {
        p1 = std::stol(m[1]);
        p2 = std::stol(m[2]);
      }
      continue;
    }
    const auto fields = split(body, ',');
    if (fields.size() != 3) throw InvalidInput(path.string() + ":" + std::to_string(lineno) + ": expected i,j,value");
    if (lineno == 1 && !fields[0].empty() && !std::isdigit(static_cast<unsigned char>(fields[0].front()))) continue;
    entries.push_back({static_cast<Index>(parse_int(fields[0], path.string(), lineno)),
                       static_cast<Index>(parse_int(fields[1], path.string(), lineno)),
                       parse_double(fields[2], path.string(), lineno)});
  }
  if (entries.empty()) throw InvalidInput("no observations in " + path.string());
  if (p1 == 0 || p2 == 0) {
    for (const Entry& e : entries) {
      p1 = std::max(p1, e.i + 1);
      p2 = std::max(p2, e.j + 1);
    }
  }
  return ObservationSet::entrywise(p1, p2, std::move(entries));
}

void write_entrywise_csv(const fs::path& path, const ObservationSet& obs) {
  if (obs.model() != ObservationModel::entrywise) throw InvalidInput("write_entrywise_csv: not entrywise");
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write observation file: " + path.string());
  out << "# ss3-entrywise p1=" << obs.p1() << " p2=" << obs.p2() << "\n";
  for (const Entry& e : obs.entries()) out << e.i << ',' << e.j << ',' << format_double(e.y) << '\n';
}

ObservationSet read_replicate_dir(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file()) {
      const auto ext = entry.path().extension();
      if (ext == ".csv" || ext == ".sssm") files.push_back(entry.path());
    }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw InvalidInput("no replicate matrices in " + dir.string());
  std::vector<Matrix> reps;
  reps.reserve(files.size());
  for (const auto& f : files) reps.push_back(read_matrix(f));
  return ObservationSet::replicates(std::move(reps));
}

void write_replicate_dir(const fs::path& dir, const ObservationSet& obs) {
  if (obs.model() != ObservationModel::replicate) throw InvalidInput("write_replicate_dir: not replicate");
  fs::create_directories(dir);
  const auto& reps = obs.replicate_list();
  for (std::size_t k = 0; k < reps.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "rep_%06zu.csv", k);
    write_matrix_csv(dir / name, reps[k]);
  }
}

ObservationSet read_linear_dir(const fs::path& dir) {
  std::ifstream meta(dir / "linear.json");
  if (!meta) throw InvalidInput("missing linear.json in " + dir.string());
  nlohmann::json j;
  try {
    meta >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("linear.json: ") + e.what());
  }
  const Index p1 = j.at("p1").get<Index>();
  const Index p2 = j.at("p2").get<Index>();
  const Matrix sensing = read_matrix(dir / "sensing.sssm");
  const Matrix values = read_matrix_csv(dir / "values.csv");
  if (values.cols() != 1) throw InvalidInput("values.csv must have one value per line");
  return ObservationSet::linear(p1, p2, sensing, values.col(0));
}

void write_linear_dir(const fs::path& dir, const ObservationSet& obs) {
  if (obs.model() != ObservationModel::linear) throw InvalidInput("write_linear_dir: not linear");
  fs::create_directories(dir);
  std::ofstream meta(dir / "linear.json");
  meta << nlohmann::json{{"p1", obs.p1()}, {"p2", obs.p2()}, {"n", obs.size()}}.dump(2) << "\n";
  write_matrix_binary(dir / "sensing.sssm", obs.sensing());
  write_matrix_csv(dir / "values.csv", obs.values());
}

ObservationSet load_observations(const fs::path& path) {
  if (!fs::exists(path)) throw InvalidInput("observation path does not exist: " + path.string());
  if (fs::is_directory(path)) {
    if (fs::exists(path / "linear.json")) return read_linear_dir(path);
    return read_replicate_dir(path);
  }
  return read_entrywise_csv(path);
}

void save_observations(const fs::path& path, const ObservationSet& obs) {
  switch (obs.model()) {
    case ObservationModel::entrywise: write_entrywise_csv(path, obs); break;
    case ObservationModel::replicate: write_replicate_dir(path, obs); break;
    case ObservationModel::linear: write_linear_dir(path, obs); break;
  }
}

}  // namespace ss3
