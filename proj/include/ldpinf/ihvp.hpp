#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "ldpinf/common.hpp"
#include "ldpinf/dataset.hpp"
#include "ldpinf/model.hpp"

namespace ldpinf {

enum class IhvpMethod { Explicit, ConjugateGradient, Stochastic };

const char* to_string(IhvpMethod method);
IhvpMethod parse_ihvp_method(const std::string& name);

struct IhvpConfig {
  IhvpMethod method = IhvpMethod::Explicit;
  /// Added to the model's l2 strength inside every solve.
  double damping = 1e-2;
  Index explicit_cap = 4096;
  double cg_tolerance = 1e-10;
  int cg_max_iters = 1000;
  int se_depth = 500;    // r
  int se_repeats = 10;   // t
  Index se_batch_size = 1;
  /// Step of the stochastic recursion; chosen by power iteration when unset.
  std::optional<double> se_scale;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const IhvpConfig&) const = default;

  nlohmann::json to_json() const;
  static IhvpConfig from_json(const nlohmann::json& j);
  static IhvpConfig from_json(const nlohmann::json& j, IhvpConfig defaults);
};

struct IhvpResult {
  Vector solution;
  int iterations = 0;
  /// |H s - v| / |v| against the exact operator (0 when v = 0).
  double relative_residual = 0.0;
  bool converged = true;
  /// Residual norms per iteration (CG only).
  std::vector<double> residual_history;
  double scale = 0.0;  // stochastic only
};

/// Largest eigenvalue of a symmetric PSD operator by power iteration.
double estimate_spectral_norm(const HessianOperator& op, int iterations = 100, std::uint64_t seed = 0);

IhvpResult ihvp_explicit(const HessianOperator& op, const Vector& v, const IhvpConfig& cfg);
/// Conjugate-residual iteration: a Krylov solver of the conjugate-gradient
/// family whose residual norm is monotone nonincreasing on SPD operators.
IhvpResult ihvp_cg(const HessianOperator& op, const Vector& v, const IhvpConfig& cfg);
/// Averages se_repeats recursions s <- v + (I - scale * H_batch) s of depth
/// se_depth and returns scale * mean(s).
IhvpResult ihvp_stochastic(const HessianOperator& op, const Vector& v, const IhvpConfig& cfg);
IhvpResult solve_ihvp(const HessianOperator& op, const Vector& v, const IhvpConfig& cfg);

IhvpResult ihvp_explicit(const EncodedDataset& data, const ModelParams& theta, const Vector& v,
                         const IhvpConfig& cfg = {});
IhvpResult ihvp_cg(const EncodedDataset& data, const ModelParams& theta, const Vector& v,
                   const IhvpConfig& cfg = {});
IhvpResult ihvp_stochastic(const EncodedDataset& data, const ModelParams& theta, const Vector& v,
                           const IhvpConfig& cfg = {});
IhvpResult solve_ihvp(const EncodedDataset& data, const ModelParams& theta, const Vector& v,
                      const IhvpConfig& cfg = {});

}  // namespace ldpinf
