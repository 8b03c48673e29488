#include "ldpinf/randomize.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace ldpinf {

DistortionMatrix::DistortionMatrix(int size, double epsilon) : size_(size), epsilon_(epsilon) {
  if (size < 2) throw ConfigError("randomize: distortion matrix needs size >= 2");
  if (!(epsilon >= 0.0)) throw ConfigError("randomize: epsilon must be nonnegative");
  // Written in terms of e^-eps so that large epsilon saturates instead of
  // producing inf / inf.
  const double decay = std::exp(-epsilon);
  const double others = static_cast<double>(size - 1);
  keep_ = 1.0 / (1.0 + others * decay);
  switch_ = decay / (1.0 + others * decay);
}

Matrix DistortionMatrix::dense() const {
  Matrix P = Matrix::Constant(size_, size_, switch_);
  P.diagonal().setConstant(keep_);
  return P;
}

DistortionMatrix build_distortion(int size, double epsilon) { return {size, epsilon}; }

int randomize_value(int value, const DistortionMatrix& P, double uniform) {
  if (uniform < P.keep_probability() || P.switch_probability() <= 0.0) return value;
  const double rest = uniform - P.keep_probability();
  auto slot = static_cast<int>(rest / P.switch_probability());
  slot = std::min(slot, P.size() - 2);
  return slot < value ? slot : slot + 1;
}

PerturbationPlan PerturbationPlan::make(const Dataset& ds,
                                        const std::vector<std::pair<std::string, double>>& attributes,
                                        PlanMode mode) {
  PerturbationPlan plan;
  plan.mode = mode;
  for (const auto& [name, eps] : attributes) {
    const auto t = ds.attribute_index(name);
    plan.entries.push_back({t, eps, static_cast<int>(ds.attributes[t].cardinality())});
  }
  plan.validate();
  return plan;
}

void PerturbationPlan::validate() const {
  if (entries.empty()) throw ConfigError("randomize: plan must perturb at least one attribute");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!(entries[i].epsilon >= 0.0)) throw ConfigError("randomize: plan epsilons must be nonnegative");
    if (entries[i].cardinality < 2) throw ConfigError("randomize: planned attribute has < 2 categories");
    for (std::size_t j = 0; j < i; ++j) {
      if (entries[j].attribute == entries[i].attribute) {
        throw ConfigError("randomize: attribute listed twice in plan");
      }
    }
  }
}

bool PerturbationPlan::contains(std::size_t attribute) const {
  return std::any_of(entries.begin(), entries.end(),
                     [&](const PlanEntry& e) { return e.attribute == attribute; });
}

PerturbationPlan PerturbationPlan::with_epsilon(double epsilon) const {
  PerturbationPlan out = *this;
  for (auto& e : out.entries) e.epsilon = epsilon;
  return out;
}

std::uint64_t record_seed(std::uint64_t root, std::size_t index) {
  return mix_seed(root, static_cast<std::uint64_t>(index));
}

Record perturb_record(const Record& record, const PerturbationPlan& plan, std::uint64_t seed) {
  Record out = record;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (const auto& e : plan.entries) {
    const DistortionMatrix P(e.cardinality, e.epsilon);
    out[e.attribute] = randomize_value(record[e.attribute], P, unit(rng));
  }
  return out;
}

double outcome_probability(std::span<const int> alpha, std::span<const int> outcome,
                           const PerturbationPlan& plan) {
  if (alpha.size() != plan.entries.size() || outcome.size() != plan.entries.size()) {
    throw DataError("randomize: outcome arity does not match plan");
  }
  double prob = 1.0;
  for (std::size_t f = 0; f < plan.entries.size(); ++f) {
    const auto& e = plan.entries[f];
    prob *= DistortionMatrix(e.cardinality, e.epsilon)(alpha[f], outcome[f]);
  }
  return prob;
}

double change_probability(const PerturbationPlan& plan) {
  double keep = 1.0;
  for (const auto& e : plan.entries) keep *= DistortionMatrix(e.cardinality, e.epsilon).keep_probability();
  return 1.0 - keep;
}

void PopulationDistribution::validate() const {
  if (proportions.size() < 1 || (proportions.array() < 0.0).any() ||
      std::abs(proportions.sum() - 1.0) > 1e-12) {
    throw DataError("randomize: proportions must lie on the probability simplex");
  }
}

PopulationDistribution observed_distribution(const PopulationDistribution& pi, const DistortionMatrix& P) {
  if (pi.proportions.size() != P.size()) throw DataError("randomize: distribution size mismatch");
  // (P^T pi)_v = switch * sum(pi) + (keep - switch) * pi_v
  const double total = pi.proportions.sum();
  Vector lambda = (P.keep_probability() - P.switch_probability()) * pi.proportions;
  lambda.array() += P.switch_probability() * total;
  return {lambda};
}

RecoveredDistribution recover_distribution(const Vector& lambda, const DistortionMatrix& P) {
  if (lambda.size() != P.size()) throw DataError("randomize: distribution size mismatch");
  const double gap = P.keep_probability() - P.switch_probability();
  if (!(P.epsilon() > 0.0) || gap <= 0.0) {
    throw NumericalError("randomize: distortion matrix is singular at epsilon = 0");
  }
  // P = gap * I + switch * J, whose inverse is (I - switch / (gap + C switch) J) / gap.
  const double sw = P.switch_probability();
  const double total = lambda.sum();
  const double coupling = sw / (gap + static_cast<double>(P.size()) * sw);
  Vector pi = (lambda.array() - coupling * total) / gap;

  RecoveredDistribution out;
  for (Index i = 0; i < pi.size(); ++i) {
    if (pi[i] < 0.0) {
      out.clipped_mass += -pi[i];
      pi[i] = 0.0;
    }
  }
  const double sum = pi.sum();
  if (sum <= 0.0) throw NumericalError("randomize: recovered distribution has no mass");
  if (out.clipped_mass > 0.0) pi /= sum;
  out.distribution.proportions = std::move(pi);
  return out;
}

}  // namespace ldpinf
