#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "aniso/common.hpp"

namespace aniso::verify {

// One experiment run. epsilon_ladder entries are multiples of the coarsest
// grid spacing; radii are absolute (empty = geometric default ladder).
// inequality_axes are the two grid resolutions of the norm-stability study.
struct ExperimentConfig {
  std::string experiment = "all";
  std::string kernel = "CZ2";
  std::string weight = "power(1)";
  std::vector<double> exponents = {1, 1};
  std::vector<int> grid_axes = {129, 129};
  double half_width = 1.0;
  double p = 2.0;
  std::vector<double> epsilon_ladder = {4, 8, 16};
  int expansion_degree = 8;
  std::vector<double> radii;
  std::vector<int> inequality_axes = {25, 33};
  std::uint64_t seed = 2026;
  std::string output_json;
  std::string output_csv;
};

struct CheckRecord {
  std::string id;
  std::string anchor;    // stable name of the property being checked
  Vec constants;         // empirical constants, check-specific order
  Vec ratios;            // comparison ratios, check-specific order
  bool pass = false;
  std::string detail;    // human-readable failure context, empty when clean
  double runtime_seconds = 0;
};

struct VerificationReport {
  std::string experiment;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> metadata;
  std::vector<CheckRecord> checks;

  bool all_pass() const;
};

// Execution order of "all"; every name is also a valid config.experiment.
const std::vector<std::string>& experiment_names();

// Runs the named experiment (or every one for "all") and assembles the
// report. "all" appends the report round-trip and operation-coverage checks.
// Writes output_json / output_csv when set. Unresolvable names and bad
// configs throw; I/O failures throw EvaluationError.
VerificationReport run(const ExperimentConfig& config);

ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig config_from_json_file(const std::string& path);

std::string report_to_json(const VerificationReport& report);
void write_report_json(const VerificationReport& report, const std::string& path);

// Flat CSV of the check records, one row per check; round-trips through
// report_from_csv (experiment-level metadata lives in the JSON form only).
void report_to_csv(const VerificationReport& report, const std::string& path);
VerificationReport report_from_csv(const std::string& path);

// Module operations not yet exercised by any experiment in this process.
std::vector<std::string> coverage_gaps();

}  // namespace aniso::verify
