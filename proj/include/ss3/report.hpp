#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "ss3/bounds.hpp"
#include "ss3/estimators.hpp"
#include "ss3/metrics.hpp"
#include "ss3/sampling.hpp"
#include "ss3/stability.hpp"

namespace ss3 {

using Json = nlohmann::ordered_json;

inline constexpr const char* kReportSchema = "ss3-report-1";

/// {"schema": "ss3-report-1", "kind": kind}
Json report_envelope(const std::string& kind);

Json to_json(const DiscoveryMetrics& m);
Json to_json(const EstimatorConfig& c);
Json to_json(const DataModel& d);
/// Selection summary; basis matrices are written separately.
Json to_json(const StabilityReport& r);
Json to_json(const BoundReport& r);

EstimatorConfig estimator_from_json(const Json& j, EstimatorConfig base = {});
DataModel data_model_from_json(const Json& j);

/// Pretty-printed with a trailing newline.
void write_json(const std::filesystem::path& path, const Json& j);
Json read_json(const std::filesystem::path& path);

/// Truth sidecar: <dir>/truth.csv (L*) and <dir>/truth.json (spectrum, seed,
/// and the data model that produced the observations, when known).
void write_truth_sidecar(const std::filesystem::path& dir, const SyntheticTruth& truth,
                         const std::optional<DataModel>& data);

struct TruthSidecar {
  SyntheticTruth truth;
  std::optional<DataModel> data;
};

/// Accepts the sidecar directory, its truth.json, or a bare matrix CSV/binary.
TruthSidecar read_truth_sidecar(const std::filesystem::path& path);

}  // namespace ss3
