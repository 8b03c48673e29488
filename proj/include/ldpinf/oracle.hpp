#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ldpinf/common.hpp"
#include "ldpinf/dataset.hpp"
#include "ldpinf/ihvp.hpp"
#include "ldpinf/influence.hpp"
#include "ldpinf/model.hpp"
#include "ldpinf/randomize.hpp"

namespace ldpinf {

enum class Correction { None, Flc };
enum class PerturbMode { Features, Labels, Both };

const char* to_string(Correction c);
const char* to_string(PerturbMode m);
Correction parse_correction(const std::string& name);
PerturbMode parse_perturb_mode(const std::string& name);

struct OracleResult {
  /// Mean test loss over S_te after retraining minus before.
  double signed_delta = 0.0;
  double absolute_delta = 0.0;
  ModelParams retrained;
  double seconds = 0.0;
  bool converged = true;
};

/// Perturbs exactly the rows of `group` according to `plan` (per-record seeds
/// derived from `seed`), retrains from zero initialization with `cfg`, and
/// measures the change of mean test loss over the group's test rows. With
/// Correction::Flc the plan must cover only the label, and the retrain uses
/// the adjusted forward-corrected objective.
OracleResult retrain_actual(const Dataset& records, const EncodedDataset& train, const EncodedDataset& test,
                            const ModelParams& baseline, const GroupSpec& group, const PerturbationPlan& plan,
                            Correction correction, const TrainConfig& cfg, std::uint64_t seed);

/// Spearman rank correlation with average ranks for ties. A constant input
/// yields 0 and a warning.
double spearman_rho(std::span<const double> a, std::span<const double> b);
double mae(std::span<const double> a, std::span<const double> b);

struct OracleMode {
  enum class Kind { Off, On, Subsample };
  Kind kind = Kind::Off;
  /// Number of epsilon values retrained per group in subsample mode.
  std::size_t count = 0;

  static OracleMode parse(const std::string& text);
  std::string to_string() const;
};

struct SweepOptions {
  std::vector<double> epsilons;
  PerturbMode mode = PerturbMode::Labels;
  /// Feature attributes randomized in features/both modes.
  std::vector<std::string> feature_attributes;
  Correction correction = Correction::None;
  ScalingMode scaling = ScalingMode::ExpectationExact;
  IhvpConfig ihvp;
  TrainConfig train;
  OracleMode oracle;
  int repeats = 10;
  std::uint64_t seed = 0;
  int threads = 1;
  std::size_t outcome_cap = 1'000'000;

  void validate() const;
};

struct SweepRow {
  std::size_t group = 0;
  double k = 0.0;
  std::size_t group_size = 0;
  double epsilon = 0.0;
  double estimated = 0.0;
  std::optional<double> actual;         // mean |delta| over repeats
  std::optional<double> actual_signed;  // mean delta over repeats
  std::optional<double> calibrated;     // subsample mode: fitted line at `estimated`
};

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
};

struct GroupSummary {
  std::size_t group = 0;
  double k = 0.0;
  std::size_t group_size = 0;
  std::optional<double> mae;
  std::optional<double> rho;
  std::optional<LinearFit> fit;
};

struct TimingLedger {
  double load_seconds = 0.0;
  double train_seconds = 0.0;
  double ihvp_seconds = 0.0;
  int ihvp_solves = 0;
  double estimate_seconds = 0.0;  // all estimator calls
  int estimate_calls = 0;
  double oracle_seconds = 0.0;  // wall time of the oracle phase
  int retrain_count = 0;
  double retrain_seconds = 0.0;  // summed over retrains

  /// Initial IHVP plus every estimator call.
  double estimator_phase() const { return ihvp_seconds + estimate_seconds; }
};

struct BaselineInfo {
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  Index width = 0;
  Index parameters = 0;
  double test_loss = 0.0;
  double test_accuracy = 0.0;
  int epochs = 0;
  double grad_norm = 0.0;
  bool converged = false;
};

struct SweepReport {
  BaselineInfo baseline;
  std::vector<SweepRow> rows;
  std::vector<GroupSummary> groups;
  TimingLedger timing;
};

struct SweepData {
  const Dataset& train_records;
  const EncodedDataset& train;
  const EncodedDataset& test;
  const ModelParams& baseline;
};

/// Estimator value for every (group, epsilon), optionally paired with the
/// retraining oracle averaged over `repeats` randomized-response seeds, plus
/// per-group MAE and rank correlation over the epsilon grid.
SweepReport run_sweep_comparison(const SweepData& data, const std::vector<GroupSpec>& groups,
                                 const SweepOptions& options);

/// Recomputes per-group MAE, rho and fits from the rows.
std::vector<GroupSummary> summarize_rows(const std::vector<SweepRow>& rows, OracleMode oracle);

}  // namespace ldpinf
