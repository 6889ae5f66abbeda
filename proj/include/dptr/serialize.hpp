#pragma once

#include "dptr/bootstrap.hpp"
#include "dptr/dgp.hpp"
#include "dptr/gmm.hpp"
#include "dptr/monte_carlo.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dptr {

using json = nlohmann::ordered_json;

inline constexpr const char* kLibraryVersion = "1.0.0";

/// Doubles are written in the shortest form that reads back to the same bits
/// (at most 17 significant digits); NaN is written as null.
json params_to_json(const ThresholdParams& theta);
ThresholdParams params_from_json(const json& j);

json matrix_to_json(const MatrixXd& m);
MatrixXd matrix_from_json(const json& j);

/// Everything in a fit except the per-unit residuals and the profile (exported as CSV).
json fit_to_json(const GmmFit& fit);
GmmFit fit_from_json(const json& j);

json stat_to_json(const TestStat& s);
json run_to_json(const BootstrapRun& run);
json grid_ci_to_json(const GridBootstrapResult& r);
json coefficient_ci_to_json(const CoefficientBootstrapResult& r, const std::vector<std::string>& names);
json test_to_json(const TestResult& r);

json to_json(const DgpConfig& c);
DgpConfig dgp_from_json(const json& j, DgpConfig base = {});
json to_json(const BootstrapConfig& c);
BootstrapConfig bootstrap_from_json(const json& j, BootstrapConfig base = {});
json to_json(const McConfig& c);
McConfig mc_from_json(const json& j, McConfig base = {});
json to_json(const InstrumentSpec& s);
InstrumentSpec instruments_from_json(const json& j);

/// Parameter names in stacked order: beta_<x>, delta_const, delta_<x>, gamma.
std::vector<std::string> parameter_names(const std::vector<std::string>& x_names);

struct RunManifest {
  std::string command;
  json config;
  std::uint64_t seed = 0;
  std::string version = kLibraryVersion;
  double wall_seconds = 0.0;
  std::vector<std::string> outputs;
  std::vector<std::string> warnings;
};

json to_json(const RunManifest& m);
void write_json(const std::filesystem::path& path, const json& j);
json read_json(const std::filesystem::path& path);

}  // namespace dptr
