#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ldpinf/dataset.hpp"
#include "ldpinf/ihvp.hpp"
#include "ldpinf/influence.hpp"
#include "ldpinf/model.hpp"
#include "ldpinf/oracle.hpp"

namespace ldpinf {

struct DatasetConfig {
  std::optional<std::filesystem::path> csv;
  /// Optional held-out CSV; without it the training CSV is split.
  std::optional<std::filesystem::path> test_csv;
  std::optional<std::filesystem::path> schema;
  std::optional<SyntheticSpec> synthetic;
  double test_fraction = 0.2;
};

struct EpsilonGrid {
  std::size_t count = 30;
  double min = 0.001;
  double max = 10.0;
  bool log_spacing = false;
  /// Explicit values override count/min/max.
  std::vector<double> explicit_values;

  std::vector<double> values() const;
};

struct GroupConfig {
  std::string attribute;
  std::string value;
  std::vector<double> k = {0.1};
};

enum class ReportFormat { Json, Csv, Both };
ReportFormat parse_report_format(const std::string& name);
const char* to_string(ReportFormat f);

struct SweepConfig {
  DatasetConfig dataset;
  EpsilonGrid epsilons;
  GroupConfig group;
  PerturbMode mode = PerturbMode::Labels;
  std::vector<std::string> feature_attributes;
  Correction correction = Correction::None;
  ScalingMode scaling = ScalingMode::ExpectationExact;
  IhvpConfig ihvp;
  TrainConfig train;
  OracleMode oracle;
  int repeats = 10;
  std::uint64_t seed = 0;
  /// Replace S_te = Z_te by a random sample of this many test rows.
  std::optional<std::size_t> test_subsample;
  int threads = 1;
  std::filesystem::path output_dir = "out";
  ReportFormat format = ReportFormat::Both;

  /// Relative paths inside the document resolve against `base_dir`.
  static SweepConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static SweepConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void validate() const;
};

/// load -> encode -> split -> train -> one IHVP -> estimator grid -> oracle.
SweepReport run(const SweepConfig& config);

inline constexpr int kCsvSchemaVersion = 1;
/// Column header of report.csv; the column count never depends on the oracle mode.
const std::vector<std::string>& report_csv_columns();

/// Deterministic JSON document: config echo, version, baseline, rows and
/// per-group aggregates. Timings are written separately.
nlohmann::json report_to_json(const SweepConfig& config, const SweepReport& report);
SweepReport report_from_json(const nlohmann::json& j);
std::string report_csv(const SweepReport& report);
/// Per-group MAE, rho and fit; only meaningful with the oracle on.
std::string summary_csv(const SweepReport& report);
nlohmann::json timing_json(const SweepReport& report);

/// Throws NumericalError if the aggregates differ from those recomputed from the rows.
void check_report_consistency(const SweepReport& report, OracleMode oracle);

/// Writes report.json / report.csv (+ summary.csv with the oracle on) and
/// timing.json into `dir`; returns the written paths.
std::vector<std::filesystem::path> emit_report(const SweepConfig& config, const SweepReport& report,
                                               const std::filesystem::path& dir, ReportFormat format);

}  // namespace ldpinf
