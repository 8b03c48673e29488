#include "ldpinf/influence.hpp"

#include <chrono>

namespace ldpinf {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

LabeledPoint row_point(const EncodedDataset& data, std::size_t i) {
  return {data.design.row(static_cast<Index>(i)).transpose(), data.labels.at(i)};
}

void check_group(const EncodedDataset& train, std::span<const std::size_t> group) {
  for (auto i : group) {
    if (i >= static_cast<std::size_t>(train.size())) {
      throw DataError("influence: group row " + std::to_string(i) + " is out of range");
    }
  }
}

InfluenceResult finish(double raw, const EncodedDataset& train, const TestGradientCache& cache,
                       std::string method, std::vector<double> epsilons, std::size_t group_size,
                       Clock::time_point start) {
  InfluenceResult r;
  r.raw_influence = raw;
  r.n = train.size();
  r.estimated_loss_delta = raw / static_cast<double>(r.n);
  r.method = std::move(method);
  r.epsilons = std::move(epsilons);
  r.group_size = group_size;
  r.test_size = cache.test_rows().size();
  r.ihvp = cache.config().method;
  r.seconds = seconds_since(start);
  return r;
}

}  // namespace

const char* to_string(ScalingMode mode) {
  return mode == ScalingMode::SharedFactor ? "paper" : "exact";
}

ScalingMode parse_scaling_mode(const std::string& name) {
  if (name == "paper") return ScalingMode::SharedFactor;
  if (name == "exact") return ScalingMode::ExpectationExact;
  throw ConfigError("influence: unknown scaling mode '" + name + "'");
}

TestGradientCache::TestGradientCache(const EncodedDataset& train, const ModelParams& theta,
                                     const EncodedDataset& test, std::vector<std::size_t> test_rows,
                                     const IhvpConfig& cfg)
    : weights_(theta.weights), link_(theta.link), l2_(theta.l2_strength), test_rows_(std::move(test_rows)), cfg_(cfg) {
  if (test_rows_.empty()) throw DataError("influence: the test group is empty");
  for (auto i : test_rows_) {
    if (i >= static_cast<std::size_t>(test.size())) throw DataError("influence: test row out of range");
  }
  const auto start = Clock::now();
  eta_ = -average_loss_gradient(test, theta, test_rows_);
  const auto op = Objective(train, theta.l2_strength).hessian_operator(theta, cfg.damping);
  solve_ = solve_ihvp(op, eta_, cfg);
  direction_ = solve_.solution;
  seconds_ = seconds_since(start);
}

bool TestGradientCache::valid_for(const ModelParams& theta, std::span<const std::size_t> test_rows,
                                  const IhvpConfig& cfg) const {
  return theta.link == link_ && theta.l2_strength == l2_ && theta.weights.rows() == weights_.rows() &&
         theta.weights.cols() == weights_.cols() && theta.weights == weights_ &&
         std::equal(test_rows.begin(), test_rows.end(), test_rows_.begin(), test_rows_.end()) && cfg == cfg_;
}

void TestGradientCache::require(const ModelParams& theta) const {
  if (theta.link != link_ || theta.l2_strength != l2_ || theta.weights.rows() != weights_.rows() ||
      theta.weights.cols() != weights_.cols() || theta.weights != weights_) {
    throw ConfigError("influence: test-gradient cache was built for different parameters");
  }
}

double TestGradientCache::response(const ModelParams& theta, Eigen::Ref<const Vector> x, int y,
                                   const Matrix* distortion) const {
  // direction . vec(g x^T) = g . (D x) with D the direction reshaped like the weights.
  const Eigen::Map<const Matrix> D(direction_.data(), weights_.rows(), weights_.cols());
  const auto d = logit_derivatives(theta.link, theta.weights * x, y, distortion, false);
  return d.grad.dot(D * x);
}

Vector influence_up_params(const EncodedDataset& train, const ModelParams& theta, const LabeledPoint& z,
                           const IhvpConfig& cfg) {
  return -solve_ihvp(train, theta, grad_point(theta, z.x, z.y), cfg).solution;
}

double influence_up_loss(const EncodedDataset& train, const ModelParams& theta, const LabeledPoint& z,
                         const LabeledPoint& z_te, const IhvpConfig& cfg) {
  const Vector s = solve_ihvp(train, theta, grad_point(theta, z.x, z.y), cfg).solution;
  return -grad_point(theta, z_te.x, z_te.y).dot(s);
}

InfluenceResult influence_pert_loss_g2g(const EncodedDataset& train, const ModelParams& theta,
                                        std::span<const PointPair> pairs, const TestGradientCache& cache) {
  cache.require(theta);
  const auto start = Clock::now();
  double raw = 0.0;
  for (const auto& pair : pairs) {
    raw += cache.response(theta, pair.perturbed.x, pair.perturbed.y) -
           cache.response(theta, pair.original.x, pair.original.y);
  }
  return finish(raw, train, cache, "g2g", {}, pairs.size(), start);
}

InfluenceResult influence_rr(const Dataset& records, const EncodedDataset& train, const ModelParams& theta,
                             std::span<const std::size_t> group, const PerturbationPlan& plan,
                             ScalingMode scaling, const TestGradientCache& cache, std::size_t outcome_cap) {
  cache.require(theta);
  plan.validate();
  check_group(train, group);
  if (records.size() != static_cast<std::size_t>(train.size())) {
    throw DataError("influence: categorical records are not aligned with the encoded data");
  }
  std::size_t outcomes = 1;
  for (const auto& e : plan.entries) {
    if (e.attribute >= records.attributes.size()) throw ConfigError("influence: plan attribute out of range");
    outcomes *= static_cast<std::size_t>(e.cardinality);
    if (outcomes > outcome_cap) {
      throw ConfigError("influence: joint outcome space exceeds " + std::to_string(outcome_cap) +
                        " per point; analyze labels or attributes separately");
    }
  }

  const auto start = Clock::now();
  const auto& encoder = train.encoder;
  const std::size_t label = records.label_attribute;
  const double shared = change_probability(plan);
  const std::size_t F = plan.entries.size();

  std::vector<int> alpha(F);
  std::vector<int> outcome(F);
  Vector x_alt(train.width());
  double raw = 0.0;
  for (auto i : group) {
    const Record& rec = records.records[i];
    for (std::size_t f = 0; f < F; ++f) alpha[f] = rec[plan.entries[f].attribute];
    const double base = cache.response(theta, train.design.row(static_cast<Index>(i)).transpose(), train.labels[i]);

    std::fill(outcome.begin(), outcome.end(), 0);
    Record alt = rec;
    double point = 0.0;
    for (std::size_t k = 0; k < outcomes; ++k) {
      if (outcome != alpha) {
        const double weight =
            scaling == ScalingMode::ExpectationExact ? outcome_probability(alpha, outcome, plan) : shared;
        for (std::size_t f = 0; f < F; ++f) alt[plan.entries[f].attribute] = outcome[f];
        encoder.encode_into(alt, x_alt);
        point += weight * (cache.response(theta, x_alt, alt[label]) - base);
      }
      // mixed-radix increment
      for (std::size_t f = 0; f < F; ++f) {
        if (++outcome[f] < plan.entries[f].cardinality) break;
        outcome[f] = 0;
      }
    }
    raw += point;
  }

  std::vector<double> eps;
  for (const auto& e : plan.entries) eps.push_back(e.epsilon);
  return finish(raw, train, cache, std::string("rr-") + to_string(scaling), std::move(eps), group.size(), start);
}

InfluenceResult influence_rr_label(const EncodedDataset& train, const ModelParams& theta,
                                   std::span<const std::size_t> group, double epsilon,
                                   const TestGradientCache& cache) {
  cache.require(theta);
  check_group(train, group);
  const auto start = Clock::now();
  const DistortionMatrix P(train.num_classes, epsilon);
  double bracket = 0.0;
  for (auto i : group) {
    const auto z = row_point(train, i);
    const double base = cache.response(theta, z.x, z.y);
    for (int c = 0; c < train.num_classes; ++c) {
      if (c != z.y) bracket += cache.response(theta, z.x, c) - base;
    }
  }
  return finish(P.switch_probability() * bracket, train, cache, "rr-label", {epsilon}, group.size(), start);
}

InfluenceResult influence_rr_flc(const EncodedDataset& train, const ModelParams& theta,
                                 std::span<const std::size_t> group, double epsilon,
                                 const TestGradientCache& cache) {
  cache.require(theta);
  check_group(train, group);
  const auto start = Clock::now();
  const DistortionMatrix P(train.num_classes, epsilon);
  const Matrix dense = P.dense();
  double bracket = 0.0;
  for (auto i : group) {
    const auto z = row_point(train, i);
    const double base = cache.response(theta, z.x, z.y);
    for (int c = 0; c < train.num_classes; ++c) {
      if (c != z.y) bracket += cache.response(theta, z.x, c, &dense) - base;
    }
  }
  return finish(P.switch_probability() * bracket, train, cache, "rr-flc", {epsilon}, group.size(), start);
}

ModelParams approx_params_after_perturbation(const EncodedDataset& train, const ModelParams& theta,
                                             std::span<const PointPair> pairs, const IhvpConfig& cfg) {
  Vector delta_grad = Vector::Zero(theta.dim());
  for (const auto& pair : pairs) {
    delta_grad += grad_point(theta, pair.perturbed.x, pair.perturbed.y) -
                  grad_point(theta, pair.original.x, pair.original.y);
  }
  ModelParams out = theta;
  if (delta_grad.isZero(0.0)) return out;
  const Vector shift = solve_ihvp(train, theta, delta_grad, cfg).solution;
  out.set_flat(theta.flat() - shift / static_cast<double>(train.size()));
  return out;
}

}  // namespace ldpinf
