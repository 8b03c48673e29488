#pragma once

#include <span>
#include <vector>

#include "ldpinf/common.hpp"
#include "ldpinf/dataset.hpp"
#include "ldpinf/model.hpp"
#include "ldpinf/randomize.hpp"

namespace ldpinf {

/// Forward loss correction over a partially perturbed training set: rows in
/// `perturbed` (S) carry noisy labels and use the corrected loss, all other
/// rows (R) use plain cross-entropy.
struct FlcObjective {
  DistortionMatrix distortion;
  std::vector<std::size_t> perturbed;
  std::size_t n = 0;

  FlcObjective(DistortionMatrix P, std::vector<std::size_t> perturbed_rows, std::size_t total);
  std::vector<std::size_t> clean() const;
  std::vector<bool> mask() const;
};

/// (1/n) sum_i -log((P^T h(x_i))_{y_i}) over every row.
double flc_loss(const EncodedDataset& noisy, const ModelParams& theta, const DistortionMatrix& P);
/// Corrected loss on S, plain loss on R, averaged over all n rows. No regularizer.
double flc_adjusted_loss(const EncodedDataset& mixed, const ModelParams& theta, const FlcObjective& obj);
/// Gradient of flc_adjusted_loss.
Vector flc_adjusted_gradient(const EncodedDataset& mixed, const ModelParams& theta, const FlcObjective& obj);
/// Minimizes flc_adjusted_loss + (l2/2)|theta|^2 from zero initialization.
ModelParams train_with_flc(const EncodedDataset& mixed, const FlcObjective& obj, const TrainConfig& cfg);

/// One group's label composition (unnormalized mass per class) and its
/// row-stochastic distortion matrix.
struct GroupDistortion {
  Vector mass;
  Matrix distortion;
};

/// Pools K groups into one population: pi_c = sum_k pi^k_c and
/// p_uv = sum_k (pi^k_u / pi_u) p^k_uv, so that P^T pi = sum_k P^k^T pi^k.
GroupDistortion compose_group_distortions(std::span<const GroupDistortion> groups);

}  // namespace ldpinf
