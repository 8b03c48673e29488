#pragma once

#include <span>
#include <string>
#include <vector>

#include "ldpinf/common.hpp"
#include "ldpinf/dataset.hpp"
#include "ldpinf/ihvp.hpp"
#include "ldpinf/model.hpp"
#include "ldpinf/randomize.hpp"

namespace ldpinf {

/// How the probability of each alternative outcome enters the general
/// randomized-response estimator.
enum class ScalingMode {
  /// One shared factor, 1 - prod_f keep_f, multiplying the sum over all
  /// alternatives.
  SharedFactor,
  /// Each alternative weighted by its own outcome probability: the exact
  /// expected loss difference under randomized response.
  ExpectationExact,
};

const char* to_string(ScalingMode mode);
ScalingMode parse_scaling_mode(const std::string& name);

struct LabeledPoint {
  Vector x;
  int y = 0;
};

struct PointPair {
  LabeledPoint original;
  LabeledPoint perturbed;
};

struct InfluenceResult {
  /// ETA^T H^-1 gamma, where ETA is minus the gradient of the mean test loss.
  double raw_influence = 0.0;
  /// raw_influence / n: the estimated change in mean test loss.
  double estimated_loss_delta = 0.0;
  Index n = 0;
  std::string method;
  std::vector<double> epsilons;
  std::size_t group_size = 0;
  std::size_t test_size = 0;
  IhvpMethod ihvp = IhvpMethod::Explicit;
  double seconds = 0.0;
};

/// -grad of the mean test loss over S_te at theta-hat, and its inverse-Hessian
/// product. Built once per (theta-hat, S_te, IHVP config) and shared by every
/// estimator call over epsilons and groups.
class TestGradientCache {
 public:
  TestGradientCache(const EncodedDataset& train, const ModelParams& theta, const EncodedDataset& test,
                    std::vector<std::size_t> test_rows, const IhvpConfig& cfg);

  const Vector& eta() const { return eta_; }
  /// H^-1 eta
  const Vector& direction() const { return direction_; }
  const IhvpResult& solve_info() const { return solve_; }
  const IhvpConfig& config() const { return cfg_; }
  const std::vector<std::size_t>& test_rows() const { return test_rows_; }
  double seconds() const { return seconds_; }

  bool valid_for(const ModelParams& theta, std::span<const std::size_t> test_rows,
                 const IhvpConfig& cfg) const;
  /// Throws if theta differs from the parameters the cache was built at.
  void require(const ModelParams& theta) const;

  /// direction . grad_theta loss((x, y)); with a distortion matrix the
  /// forward-corrected loss is differentiated instead.
  double response(const ModelParams& theta, Eigen::Ref<const Vector> x, int y,
                  const Matrix* distortion = nullptr) const;

 private:
  Matrix weights_;
  Link link_;
  double l2_;
  std::vector<std::size_t> test_rows_;
  IhvpConfig cfg_;
  Vector eta_;
  Vector direction_;
  IhvpResult solve_;
  double seconds_ = 0.0;
};

/// -H^-1 grad loss(z)
Vector influence_up_params(const EncodedDataset& train, const ModelParams& theta, const LabeledPoint& z,
                           const IhvpConfig& cfg = {});
/// -grad loss(z_te)^T H^-1 grad loss(z)
double influence_up_loss(const EncodedDataset& train, const ModelParams& theta, const LabeledPoint& z,
                         const LabeledPoint& z_te, const IhvpConfig& cfg = {});

/// Group-to-group perturbation influence for explicit (z, z_beta) pairs.
InfluenceResult influence_pert_loss_g2g(const EncodedDataset& train, const ModelParams& theta,
                                        std::span<const PointPair> pairs, const TestGradientCache& cache);

/// General randomized-response influence over the attributes in `plan` for
/// the training rows `group`. `records` are the categorical rows aligned with
/// `train`. Throws when a point has more than `outcome_cap` joint outcomes.
InfluenceResult influence_rr(const Dataset& records, const EncodedDataset& train, const ModelParams& theta,
                             std::span<const std::size_t> group, const PerturbationPlan& plan,
                             ScalingMode scaling, const TestGradientCache& cache,
                             std::size_t outcome_cap = 1'000'000);

/// Label-only randomized response at privacy level epsilon.
InfluenceResult influence_rr_label(const EncodedDataset& train, const ModelParams& theta,
                                   std::span<const std::size_t> group, double epsilon,
                                   const TestGradientCache& cache);

/// Label-only randomized response followed by forward loss correction.
InfluenceResult influence_rr_flc(const EncodedDataset& train, const ModelParams& theta,
                                 std::span<const std::size_t> group, double epsilon,
                                 const TestGradientCache& cache);

/// theta-hat + (1/n) sum over pairs of -H^-1 (grad loss(z_beta) - grad loss(z)).
ModelParams approx_params_after_perturbation(const EncodedDataset& train, const ModelParams& theta,
                                             std::span<const PointPair> pairs, const IhvpConfig& cfg = {});

}  // namespace ldpinf
