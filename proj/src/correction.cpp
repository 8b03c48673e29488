#include "ldpinf/correction.hpp"

#include <algorithm>
#include <cmath>

namespace ldpinf {

FlcObjective::FlcObjective(DistortionMatrix P, std::vector<std::size_t> perturbed_rows, std::size_t total)
    : distortion(P), perturbed(std::move(perturbed_rows)), n(total) {
  if (!(distortion.epsilon() > 0.0)) {
    throw ConfigError("correction: forward correction needs a nonsingular distortion (epsilon > 0)");
  }
  std::vector<std::size_t> sorted = perturbed;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw DataError("correction: perturbed rows contain duplicates");
  }
  if (!sorted.empty() && sorted.back() >= n) throw DataError("correction: perturbed row out of range");
}

std::vector<bool> FlcObjective::mask() const {
  std::vector<bool> m(n, false);
  for (auto i : perturbed) m[i] = true;
  return m;
}

std::vector<std::size_t> FlcObjective::clean() const {
  const auto m = mask();
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!m[i]) out.push_back(i);
  }
  return out;
}

namespace {

void check_size(const EncodedDataset& data, const FlcObjective& obj) {
  if (static_cast<std::size_t>(data.size()) != obj.n) {
    throw DataError("correction: objective covers " + std::to_string(obj.n) + " rows, data has " +
                    std::to_string(data.size()));
  }
  if (data.num_classes != obj.distortion.size()) {
    throw DataError("correction: distortion size does not match the class count");
  }
}

}  // namespace

double flc_loss(const EncodedDataset& noisy, const ModelParams& theta, const DistortionMatrix& P) {
  if (!(P.epsilon() > 0.0)) {
    warn("correction: evaluating forward correction with a singular (epsilon = 0) distortion");
  }
  std::vector<bool> all(static_cast<std::size_t>(noisy.size()), true);
  return Objective(noisy, 0.0, P.dense(), std::move(all)).data_value(theta);
}

double flc_adjusted_loss(const EncodedDataset& mixed, const ModelParams& theta, const FlcObjective& obj) {
  check_size(mixed, obj);
  return Objective(mixed, 0.0, obj.distortion.dense(), obj.mask()).data_value(theta);
}

Vector flc_adjusted_gradient(const EncodedDataset& mixed, const ModelParams& theta, const FlcObjective& obj) {
  check_size(mixed, obj);
  return Objective(mixed, 0.0, obj.distortion.dense(), obj.mask()).gradient(theta);
}

ModelParams train_with_flc(const EncodedDataset& mixed, const FlcObjective& obj, const TrainConfig& cfg) {
  check_size(mixed, obj);
  if (mixed.size() == 0) throw DataError("correction: cannot train on an empty dataset");
  const auto init = ModelParams::zeros(mixed.num_classes, mixed.width(), cfg.resolved_link(mixed.num_classes),
                                       cfg.l2_strength);
  if (obj.perturbed.empty()) return minimize(Objective(mixed, cfg.l2_strength), init, cfg);
  return minimize(Objective(mixed, cfg.l2_strength, obj.distortion.dense(), obj.mask()), init, cfg);
}

GroupDistortion compose_group_distortions(std::span<const GroupDistortion> groups) {
  if (groups.empty()) throw DataError("correction: no groups to compose");
  const Index C = groups.front().mass.size();
  GroupDistortion out{Vector::Zero(C), Matrix::Zero(C, C)};
  for (const auto& g : groups) {
    if (g.mass.size() != C || g.distortion.rows() != C || g.distortion.cols() != C) {
      throw DataError("correction: group sizes disagree");
    }
    if ((g.mass.array() < 0.0).any()) throw DataError("correction: negative group mass");
    for (Index u = 0; u < C; ++u) {
      if (std::abs(g.distortion.row(u).sum() - 1.0) > 1e-12 || (g.distortion.row(u).array() < 0.0).any()) {
        throw DataError("correction: group distortion is not row-stochastic");
      }
    }
    out.mass += g.mass;
  }
  for (Index u = 0; u < C; ++u) {
    if (out.mass[u] <= 0.0) {
      throw DataError("correction: class " + std::to_string(u) + " has no mass, its row is undefined");
    }
    for (const auto& g : groups) {
      out.distortion.row(u) += (g.mass[u] / out.mass[u]) * g.distortion.row(u);
    }
  }
  return out;
}

}  // namespace ldpinf
