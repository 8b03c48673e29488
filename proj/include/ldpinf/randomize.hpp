#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ldpinf/common.hpp"
#include "ldpinf/dataset.hpp"

namespace ldpinf {

/// Randomized-response distortion matrix: entry (u, v) is the probability of
/// reporting v when the true value is u. Stored implicitly by its two values.
class DistortionMatrix {
 public:
  DistortionMatrix(int size, double epsilon);

  int size() const { return size_; }
  double epsilon() const { return epsilon_; }
  /// e^eps / (C - 1 + e^eps)
  double keep_probability() const { return keep_; }
  /// 1 / (C - 1 + e^eps), the probability of each specific alternative.
  double switch_probability() const { return switch_; }
  double operator()(int u, int v) const { return u == v ? keep_ : switch_; }
  Matrix dense() const;

 private:
  int size_;
  double epsilon_;
  double keep_;
  double switch_;
};

DistortionMatrix build_distortion(int size, double epsilon);

/// Maps a uniform draw to the reported value. The true value occupies the
/// first keep_probability of the unit interval and the alternatives follow in
/// index order, so with a shared draw the set of changed records shrinks
/// monotonically as epsilon grows.
int randomize_value(int value, const DistortionMatrix& P, double uniform);

enum class PlanMode { Sample, Expectation };

struct PlanEntry {
  std::size_t attribute;
  double epsilon;
  int cardinality;
};

struct PerturbationPlan {
  std::vector<PlanEntry> entries;  // the set F
  PlanMode mode = PlanMode::Expectation;

  /// Builds entries for named attributes with one epsilon each.
  static PerturbationPlan make(const Dataset& ds,
                               const std::vector<std::pair<std::string, double>>& attributes,
                               PlanMode mode = PlanMode::Expectation);
  void validate() const;
  bool contains(std::size_t attribute) const;
  /// Same attributes, every epsilon replaced by `epsilon`.
  PerturbationPlan with_epsilon(double epsilon) const;
};

/// Seed of record `index` under `root`, independent of evaluation order.
std::uint64_t record_seed(std::uint64_t root, std::size_t index);

/// Resamples each planned attribute independently from its distortion row.
Record perturb_record(const Record& record, const PerturbationPlan& plan, std::uint64_t seed);

/// prod_f P^f[alpha_f -> outcome_f]
double outcome_probability(std::span<const int> alpha, std::span<const int> outcome,
                           const PerturbationPlan& plan);
/// 1 - prod_f e^eps_f / (d_f - 1 + e^eps_f)
double change_probability(const PerturbationPlan& plan);

struct PopulationDistribution {
  Vector proportions;
  void validate() const;
};

/// lambda = P^T pi (P is symmetric for randomized response, so this is also P pi).
PopulationDistribution observed_distribution(const PopulationDistribution& pi, const DistortionMatrix& P);

struct RecoveredDistribution {
  PopulationDistribution distribution;
  /// Total negative mass removed by clipping before renormalizing.
  double clipped_mass = 0.0;
};

/// Solves P^T pi = lambda, clips negatives to zero and renormalizes.
RecoveredDistribution recover_distribution(const Vector& lambda, const DistortionMatrix& P);

}  // namespace ldpinf
