#include "ldpinf/ihvp.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace ldpinf {

const char* to_string(IhvpMethod method) {
  switch (method) {
    case IhvpMethod::Explicit:
      return "explicit";
    case IhvpMethod::ConjugateGradient:
      return "cg";
    case IhvpMethod::Stochastic:
      return "stochastic";
  }
  return "?";
}

IhvpMethod parse_ihvp_method(const std::string& name) {
  if (name == "explicit") return IhvpMethod::Explicit;
  if (name == "cg") return IhvpMethod::ConjugateGradient;
  if (name == "stochastic") return IhvpMethod::Stochastic;
  throw ConfigError("ihvp: unknown method '" + name + "'");
}

void IhvpConfig::validate() const {
  if (damping < 0.0) throw ConfigError("ihvp: damping must be nonnegative");
  if (!(cg_tolerance > 0.0)) throw ConfigError("ihvp: cg_tolerance must be positive");
  if (cg_max_iters < 1) throw ConfigError("ihvp: cg_max_iters must be >= 1");
  if (se_depth < 1 || se_repeats < 1) throw ConfigError("ihvp: se depth and repeats must be >= 1");
  if (se_batch_size < 1) throw ConfigError("ihvp: se_batch_size must be >= 1");
  if (se_scale && !(*se_scale > 0.0)) throw ConfigError("ihvp: se_scale must be positive");
  if (explicit_cap < 1) throw ConfigError("ihvp: explicit_cap must be >= 1");
}

nlohmann::json IhvpConfig::to_json() const {
  nlohmann::json j = {{"method", ldpinf::to_string(method)},
                      {"damping", damping},
                      {"explicit_cap", explicit_cap},
                      {"cg_tolerance", cg_tolerance},
                      {"cg_max_iters", cg_max_iters},
                      {"se_depth", se_depth},
                      {"se_repeats", se_repeats},
                      {"se_batch_size", se_batch_size},
                      {"seed", seed}};
  j["se_scale"] = se_scale ? nlohmann::json(*se_scale) : nlohmann::json(nullptr);
  return j;
}

IhvpConfig IhvpConfig::from_json(const nlohmann::json& j, IhvpConfig c) {
  try {
    if (j.contains("method")) c.method = parse_ihvp_method(j.at("method").get<std::string>());
    c.damping = j.value("damping", c.damping);
    c.explicit_cap = j.value("explicit_cap", c.explicit_cap);
    c.cg_tolerance = j.value("cg_tolerance", c.cg_tolerance);
    c.cg_max_iters = j.value("cg_max_iters", c.cg_max_iters);
    c.se_depth = j.value("se_depth", c.se_depth);
    c.se_repeats = j.value("se_repeats", c.se_repeats);
    c.se_batch_size = j.value("se_batch_size", c.se_batch_size);
    c.seed = j.value("seed", c.seed);
    if (j.contains("se_scale") && !j.at("se_scale").is_null()) c.se_scale = j.at("se_scale").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("ihvp: invalid config: ") + e.what());
  }
  c.validate();
  return c;
}

IhvpConfig IhvpConfig::from_json(const nlohmann::json& j) { return from_json(j, IhvpConfig{}); }

namespace {

double relative_residual(const HessianOperator& op, const Vector& s, const Vector& v) {
  const double vn = v.norm();
  if (vn == 0.0) return s.norm() == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return (op.apply(s) - v).norm() / vn;
}

}  // namespace

double estimate_spectral_norm(const HessianOperator& op, int iterations, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  Vector b(op.dim());
  for (Index i = 0; i < b.size(); ++i) b[i] = gauss(rng);
  b.normalize();
  double lambda = 0.0;
  for (int k = 0; k < iterations; ++k) {
    Vector next = op.apply(b);
    const double norm = next.norm();
    if (norm == 0.0) return 0.0;
    const double previous = lambda;
    lambda = b.dot(next);
    b = next / norm;
    if (k > 5 && std::abs(lambda - previous) <= 1e-10 * std::abs(lambda)) break;
  }
  return lambda;
}

IhvpResult ihvp_explicit(const HessianOperator& op, const Vector& v, const IhvpConfig& cfg) {
  cfg.validate();
  if (op.dim() > cfg.explicit_cap) {
    throw ConfigError("ihvp: " + std::to_string(op.dim()) + " parameters exceed the explicit cap of " +
                      std::to_string(cfg.explicit_cap) + "; use cg or stochastic");
  }
  if (v.size() != op.dim()) throw DataError("ihvp: vector has wrong dimension");
  IhvpResult out;
  if (v.isZero(0.0)) {
    out.solution = Vector::Zero(v.size());
    return out;
  }
  const Eigen::LLT<Matrix> llt(op.dense());
  if (llt.info() != Eigen::Success) {
    throw NumericalError("ihvp: Hessian is not positive definite; increase damping");
  }
  out.solution = llt.solve(v);
  out.iterations = 1;
  out.relative_residual = relative_residual(op, out.solution, v);
  return out;
}

IhvpResult ihvp_cg(const HessianOperator& op, const Vector& v, const IhvpConfig& cfg) {
  cfg.validate();
  if (v.size() != op.dim()) throw DataError("ihvp: vector has wrong dimension");
  IhvpResult out;
  out.solution = Vector::Zero(v.size());
  const double target = cfg.cg_tolerance * v.norm();
  Vector r = v;
  out.residual_history.push_back(r.norm());
  if (r.norm() <= target) return out;

  Vector p = r;
  Vector Ar = op.apply(r);
  Vector Ap = Ar;
  double rAr = r.dot(Ar);
  out.converged = false;
  for (int k = 0; k < cfg.cg_max_iters; ++k) {
    const double ApAp = Ap.squaredNorm();
    if (ApAp == 0.0 || rAr <= 0.0) break;
    const double alpha = rAr / ApAp;
    out.solution += alpha * p;
    r -= alpha * Ap;
    out.iterations = k + 1;
    out.residual_history.push_back(r.norm());
    if (r.norm() <= target) {
      out.converged = true;
      break;
    }
    Ar = op.apply(r);
    const double rAr_next = r.dot(Ar);
    const double beta = rAr_next / rAr;
    rAr = rAr_next;
    p = r + beta * p;
    Ap = Ar + beta * Ap;
  }
  out.relative_residual = relative_residual(op, out.solution, v);
  if (!out.converged) {
    warn("ihvp: cg stopped after " + std::to_string(out.iterations) +
         " iterations with relative residual " + std::to_string(out.relative_residual));
  }
  return out;
}

IhvpResult ihvp_stochastic(const HessianOperator& op, const Vector& v, const IhvpConfig& cfg) {
  cfg.validate();
  if (v.size() != op.dim()) throw DataError("ihvp: vector has wrong dimension");
  IhvpResult out;
  const double lambda_max = estimate_spectral_norm(op, 200, mix_seed(cfg.seed, 0xC0FFEE));
  // Sized against the largest single-point term so every minibatch step of
  // the recursion is a contraction, not only the full-data one.
  const double scale = cfg.se_scale ? *cfg.se_scale : 1.0 / (1.1 * op.max_sample_norm());
  if (!(scale * lambda_max < 1.0)) {
    throw NumericalError("ihvp: se_scale " + std::to_string(scale) + " times spectral norm " +
                         std::to_string(lambda_max) + " is not below 1; use a smaller se_scale");
  }
  out.scale = scale;
  out.solution = Vector::Zero(v.size());
  if (v.isZero(0.0)) return out;

  // The fixed point is H^-1 v / scale, bounded by |v| / (scale * shift).
  const double bound = op.shift() > 0.0 ? 10.0 * v.norm() / (scale * op.shift())
                                        : std::numeric_limits<double>::infinity();
  const Index n = op.samples();
  std::vector<Index> batch(static_cast<std::size_t>(std::min(cfg.se_batch_size, n)));
  for (int t = 0; t < cfg.se_repeats; ++t) {
    std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(t)));
    std::uniform_int_distribution<Index> pick(0, n - 1);
    Vector s = v;
    for (int j = 0; j < cfg.se_depth; ++j) {
      for (auto& b : batch) b = pick(rng);
      s = v + s - scale * op.apply_batch(batch, s);
      const double norm = s.norm();
      if (!std::isfinite(norm) || norm > bound) {
        throw NumericalError("ihvp: stochastic recursion diverged at depth " + std::to_string(j) +
                             "; use a smaller se_scale or larger damping");
      }
    }
    out.solution += s;
  }
  out.solution *= scale / static_cast<double>(cfg.se_repeats);
  out.iterations = cfg.se_depth * cfg.se_repeats;
  out.relative_residual = relative_residual(op, out.solution, v);
  return out;
}

IhvpResult solve_ihvp(const HessianOperator& op, const Vector& v, const IhvpConfig& cfg) {
  switch (cfg.method) {
    case IhvpMethod::Explicit:
      return ihvp_explicit(op, v, cfg);
    case IhvpMethod::ConjugateGradient:
      return ihvp_cg(op, v, cfg);
    case IhvpMethod::Stochastic:
      return ihvp_stochastic(op, v, cfg);
  }
  throw ConfigError("ihvp: unknown method");
}

namespace {

HessianOperator model_operator(const EncodedDataset& data, const ModelParams& theta, double damping) {
  return Objective(data, theta.l2_strength).hessian_operator(theta, damping);
}

}  // namespace

IhvpResult ihvp_explicit(const EncodedDataset& data, const ModelParams& theta, const Vector& v,
                         const IhvpConfig& cfg) {
  return ihvp_explicit(model_operator(data, theta, cfg.damping), v, cfg);
}

IhvpResult ihvp_cg(const EncodedDataset& data, const ModelParams& theta, const Vector& v,
                   const IhvpConfig& cfg) {
  return ihvp_cg(model_operator(data, theta, cfg.damping), v, cfg);
}

IhvpResult ihvp_stochastic(const EncodedDataset& data, const ModelParams& theta, const Vector& v,
                           const IhvpConfig& cfg) {
  return ihvp_stochastic(model_operator(data, theta, cfg.damping), v, cfg);
}

IhvpResult solve_ihvp(const EncodedDataset& data, const ModelParams& theta, const Vector& v,
                      const IhvpConfig& cfg) {
  return solve_ihvp(model_operator(data, theta, cfg.damping), v, cfg);
}

}  // namespace ldpinf
