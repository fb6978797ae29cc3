#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ss3/linalg.hpp"

namespace ss3 {

enum class ObservationModel { entrywise, replicate, linear };

const char* to_string(ObservationModel m);
ObservationModel parse_observation_model(const std::string& s);

struct Entry {
  Index i;
  Index j;
  double y;
};

/// Observations of a p1 x p2 low-rank matrix. The "units" that bags are drawn
/// from are entries, replicates or linear functionals depending on the model.
class ObservationSet {
 public:
  static ObservationSet entrywise(Index p1, Index p2, std::vector<Entry> entries);
  static ObservationSet replicates(std::vector<Matrix> replicates);
  /// Row k of `sensing` is vec(A_k) in column-major order; y_k = <A_k, L>.
  static ObservationSet linear(Index p1, Index p2, Matrix sensing, Vector y);

  ObservationModel model() const { return model_; }
  Index p1() const { return p1_; }
  Index p2() const { return p2_; }
  Index size() const;

  const std::vector<Entry>& entries() const { return entries_; }
  const std::vector<Matrix>& replicate_list() const { return replicates_; }
  const Matrix& sensing() const { return sensing_; }
  const Vector& values() const { return y_; }

  /// Observations restricted to the given unit indices (in the given order).
  ObservationSet subset(const std::vector<Index>& units) const;
  /// Mean of the replicates (replicate model only).
  Matrix replicate_mean() const;
  /// Sensing matrix A_k as p1 x p2 (linear model only).
  Matrix functional(Index k) const;

 private:
  ObservationModel model_ = ObservationModel::entrywise;
  Index p1_ = 0;
  Index p2_ = 0;
  std::vector<Entry> entries_;
  std::vector<Matrix> replicates_;
  Matrix sensing_;
  Vector y_;
};

// Entrywise CSV: "i,j,value" lines (0-based). An optional leading comment
// "# ss3-entrywise p1=<p1> p2=<p2>" fixes the shape; otherwise it is inferred.
ObservationSet read_entrywise_csv(const std::filesystem::path& path);
void write_entrywise_csv(const std::filesystem::path& path, const ObservationSet& obs);

// Replicates: a directory of matrix files, read in lexicographic filename order.
ObservationSet read_replicate_dir(const std::filesystem::path& dir);
void write_replicate_dir(const std::filesystem::path& dir, const ObservationSet& obs);

// Linear: a directory with linear.json ({"p1":..,"p2":..}), sensing.sssm
// (n x p1*p2, row k = column-major vec of A_k) and values.csv (one per line).
ObservationSet read_linear_dir(const std::filesystem::path& dir);
void write_linear_dir(const std::filesystem::path& dir, const ObservationSet& obs);

/// Dispatch on path: directory with linear.json -> linear, other directory ->
/// replicates, file -> entrywise CSV.
ObservationSet load_observations(const std::filesystem::path& path);
void save_observations(const std::filesystem::path& path, const ObservationSet& obs);

}  // namespace ss3
