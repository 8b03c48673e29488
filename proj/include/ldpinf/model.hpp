#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "ldpinf/common.hpp"
#include "ldpinf/dataset.hpp"

namespace ldpinf {

/// Inverse link. Sigmoid stores one weight row and treats it as the logit of
/// class 1 against class 0; softmax stores one row per class.
enum class Link { Sigmoid, Softmax };
enum class Optimizer { Newton, GradientDescent };

struct TrainInfo {
  int epochs = 0;
  double grad_norm = 0.0;
  bool converged = false;
};

struct ModelParams {
  Matrix weights;  // rows x p, rows = 1 (sigmoid) or C (softmax)
  Link link = Link::Sigmoid;
  double l2_strength = 1e-3;
  TrainInfo info;

  static ModelParams zeros(int num_classes, Index width, Link link, double l2_strength);

  int num_classes() const { return link == Link::Sigmoid ? 2 : static_cast<int>(weights.rows()); }
  Index width() const { return weights.cols(); }
  /// Number of parameters, rows * p. Parameter (r, j) lives at r * p + j.
  Index dim() const { return weights.size(); }
  Vector flat() const;
  void set_flat(const Vector& theta);

  nlohmann::json to_json() const;
  static ModelParams from_json(const nlohmann::json& j);
};

struct TrainConfig {
  Optimizer optimizer = Optimizer::Newton;
  double learning_rate = 0.5;
  int max_epochs = 100;
  double tolerance = 1e-8;
  std::uint64_t seed = 0;
  double l2_strength = 1e-3;
  /// Defaults to sigmoid for two classes, softmax otherwise.
  std::optional<Link> link;

  void validate() const;
  Link resolved_link(int num_classes) const;
};

/// Loss of one point and its derivatives with respect to the weight rows'
/// logits (a scalar logit for sigmoid, C logits for softmax).
struct LogitDerivatives {
  double value = 0.0;
  Vector grad;
  Matrix hess;
};

/// Cross-entropy of the predicted distribution against `label`. With a
/// distortion matrix P the prediction is first mapped to P^T h, giving the
/// forward-corrected loss -log((P^T h)_label).
LogitDerivatives logit_derivatives(Link link, const Vector& logits, int label,
                                   const Matrix* distortion, bool with_hessian);

Vector logits(const ModelParams& theta, Eigen::Ref<const Vector> x);
Vector predict_proba(const ModelParams& theta, Eigen::Ref<const Vector> x);
double loss_point(const ModelParams& theta, Eigen::Ref<const Vector> x, int y);
Vector grad_point(const ModelParams& theta, Eigen::Ref<const Vector> x, int y);
/// Gradient of -log((P^T h(x))_y) with respect to the parameters.
Vector grad_point_corrected(const ModelParams& theta, Eigen::Ref<const Vector> x, int y,
                            const Matrix& distortion);

/// Mean per-point loss over `rows` (all rows when empty), without the regularizer.
double average_loss(const EncodedDataset& data, const ModelParams& theta,
                    std::span<const std::size_t> rows = {});
/// Gradient of average_loss.
Vector average_loss_gradient(const EncodedDataset& data, const ModelParams& theta,
                             std::span<const std::size_t> rows = {});
double accuracy(const EncodedDataset& data, const ModelParams& theta);

/// Matrix-free Hessian of an objective at a fixed theta:
/// H = (1/n) sum_i kron(K_i, x_i x_i^T) + shift * I, where K_i is the
/// per-point logit curvature.
class HessianOperator {
 public:
  HessianOperator(const Matrix& design, Matrix curvature, Index rows, double shift);

  Index dim() const { return rows_ * design_->cols(); }
  Index samples() const { return design_->rows(); }
  double shift() const { return shift_; }

  Vector apply(const Vector& v) const;
  /// Same operator restricted to a minibatch: mean over `batch` plus shift.
  Vector apply_batch(std::span<const Index> batch, const Vector& v) const;
  Matrix dense() const;
  /// Largest spectral norm of any single-point term, shift included.
  double max_sample_norm() const;

 private:
  const Matrix* design_;
  Matrix curvature_;  // n x rows*rows, row-major per point
  Index rows_;
  double shift_;
};

/// Regularized empirical risk (1/n) sum_i loss_i + (l2/2) |theta|^2. Points
/// flagged in `corrected` use the forward-corrected loss under `distortion`.
class Objective {
 public:
  Objective(const EncodedDataset& data, double l2_strength);
  Objective(const EncodedDataset& data, double l2_strength, Matrix distortion,
            std::vector<bool> corrected);

  const EncodedDataset& data() const { return *data_; }
  double l2_strength() const { return l2_; }

  double data_value(const ModelParams& theta) const;
  double value(const ModelParams& theta) const;
  Vector gradient(const ModelParams& theta) const;
  HessianOperator hessian_operator(const ModelParams& theta, double damping) const;
  Matrix hessian(const ModelParams& theta, double damping) const;

 private:
  const Matrix* distortion_for(std::size_t i) const;

  const EncodedDataset* data_;
  double l2_;
  std::optional<Matrix> distortion_;
  std::vector<bool> corrected_;
};

/// H of the plain cross-entropy objective plus (l2 + damping) I.
Matrix hessian(const EncodedDataset& data, const ModelParams& theta, double damping);
Vector hvp(const EncodedDataset& data, const ModelParams& theta, const Vector& v, double damping);

/// Minimizes `objective` starting from `init` (no warm starts elsewhere: every
/// caller passes zeros).
ModelParams minimize(const Objective& objective, ModelParams init, const TrainConfig& cfg);
ModelParams train(const EncodedDataset& data, const TrainConfig& cfg);

}  // namespace ldpinf
