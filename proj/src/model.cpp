#include "ldpinf/model.hpp"

#include <cmath>
#include <numeric>

namespace ldpinf {

namespace {

const char* link_name(Link link) { return link == Link::Sigmoid ? "sigmoid" : "softmax"; }

Link parse_link(const std::string& name) {
  if (name == "sigmoid") return Link::Sigmoid;
  if (name == "softmax") return Link::Softmax;
  throw ConfigError("model: unknown link '" + name + "'");
}

Vector full_logits(Link link, const Vector& z) {
  if (link == Link::Softmax) return z;
  Vector full(2);
  full << 0.0, z[0];
  return full;
}

Vector softmax(const Vector& z) {
  const double top = z.maxCoeff();
  Vector e = (z.array() - top).exp();
  return e / e.sum();
}

std::vector<std::size_t> all_rows(const EncodedDataset& data, std::span<const std::size_t> rows) {
  if (!rows.empty()) return {rows.begin(), rows.end()};
  std::vector<std::size_t> out(static_cast<std::size_t>(data.size()));
  std::iota(out.begin(), out.end(), 0);
  return out;
}

void check_width(const ModelParams& theta, Index width) {
  if (theta.width() != width) {
    throw DataError("model: feature width " + std::to_string(width) + " does not match model width " +
                    std::to_string(theta.width()));
  }
}

}  // namespace

ModelParams ModelParams::zeros(int num_classes, Index width, Link link, double l2_strength) {
  if (num_classes < 2) throw ConfigError("model: need at least two classes");
  if (link == Link::Sigmoid && num_classes != 2) {
    throw ConfigError("model: sigmoid link requires exactly two classes");
  }
  ModelParams p;
  p.link = link;
  p.l2_strength = l2_strength;
  p.weights = Matrix::Zero(link == Link::Sigmoid ? 1 : num_classes, width);
  return p;
}

Vector ModelParams::flat() const {
  return Eigen::Map<const Vector>(weights.data(), weights.size());
}

void ModelParams::set_flat(const Vector& theta) {
  if (theta.size() != weights.size()) throw DataError("model: parameter vector has wrong size");
  Eigen::Map<Vector>(weights.data(), weights.size()) = theta;
}

nlohmann::json ModelParams::to_json() const {
  std::vector<double> flat_weights(weights.data(), weights.data() + weights.size());
  return {{"link", link_name(link)},
          {"rows", weights.rows()},
          {"cols", weights.cols()},
          {"weights", flat_weights},
          {"l2_strength", l2_strength},
          {"training",
           {{"epochs", info.epochs}, {"grad_norm", info.grad_norm}, {"converged", info.converged}}}};
}

ModelParams ModelParams::from_json(const nlohmann::json& j) {
  try {
    ModelParams p;
    p.link = parse_link(j.at("link").get<std::string>());
    const auto rows = j.at("rows").get<Index>();
    const auto cols = j.at("cols").get<Index>();
    const auto w = j.at("weights").get<std::vector<double>>();
    if (static_cast<Index>(w.size()) != rows * cols) {
      throw ConfigError("model: checkpoint weight count mismatch");
    }
    p.weights = Eigen::Map<const Matrix>(w.data(), rows, cols);
    p.l2_strength = j.at("l2_strength").get<double>();
    if (j.contains("training")) {
      const auto& t = j.at("training");
      p.info.epochs = t.value("epochs", 0);
      p.info.grad_norm = t.value("grad_norm", 0.0);
      p.info.converged = t.value("converged", false);
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model: invalid checkpoint: ") + e.what());
  }
}

void TrainConfig::validate() const {
  if (!(tolerance > 0.0)) throw ConfigError("model: tolerance must be positive");
  if (max_epochs < 1) throw ConfigError("model: max_epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("model: learning rate must be positive");
  if (l2_strength < 0.0) throw ConfigError("model: l2_strength must be nonnegative");
  if (optimizer == Optimizer::Newton && !(l2_strength > 0.0)) {
    throw ConfigError("model: newton training requires l2_strength > 0");
  }
}

Link TrainConfig::resolved_link(int num_classes) const {
  if (link) return *link;
  return num_classes == 2 ? Link::Sigmoid : Link::Softmax;
}

LogitDerivatives logit_derivatives(Link link, const Vector& z, int label, const Matrix* distortion,
                                   bool with_hessian) {
  const Vector full = full_logits(link, z);
  const Index C = full.size();
  if (label < 0 || label >= C) throw DataError("model: label out of range");
  const Vector s = softmax(full);

  LogitDerivatives out;
  Vector g_full;
  Matrix h_full;
  if (distortion == nullptr) {
    const double top = full.maxCoeff();
    out.value = top + std::log((full.array() - top).exp().sum()) - full[label];
    g_full = s;
    g_full[label] -= 1.0;
    if (with_hessian) {
      h_full = Matrix(s.asDiagonal());
      h_full.noalias() -= s * s.transpose();
    }
  } else {
    if (distortion->rows() != C || distortion->cols() != C) {
      throw DataError("model: distortion matrix size does not match class count");
    }
    const Vector a = distortion->col(label);
    const double q = a.dot(s);
    out.value = -std::log(q);
    const Vector dq = s.array() * (a.array() - q);
    g_full = -dq / q;
    if (with_hessian) {
      Matrix d2q(C, C);
      for (Index k = 0; k < C; ++k) {
        for (Index l = 0; l < C; ++l) {
          d2q(k, l) = -s[k] * s[l] * ((a[k] - q) + (a[l] - q));
        }
        d2q(k, k) += s[k] * (a[k] - q);
      }
      h_full = -d2q / q + dq * dq.transpose() / (q * q);
    }
  }

  if (link == Link::Sigmoid) {
    out.grad = g_full.tail(1);
    if (with_hessian) out.hess = h_full.bottomRightCorner(1, 1);
  } else {
    out.grad = std::move(g_full);
    if (with_hessian) out.hess = std::move(h_full);
  }
  return out;
}

Vector logits(const ModelParams& theta, Eigen::Ref<const Vector> x) {
  check_width(theta, x.size());
  return theta.weights * x;
}

Vector predict_proba(const ModelParams& theta, Eigen::Ref<const Vector> x) {
  return softmax(full_logits(theta.link, logits(theta, x)));
}

double loss_point(const ModelParams& theta, Eigen::Ref<const Vector> x, int y) {
  return logit_derivatives(theta.link, logits(theta, x), y, nullptr, false).value;
}

namespace {

Vector outer_flat(const Vector& g, Eigen::Ref<const Vector> x) {
  Matrix outer = g * x.transpose();
  return Eigen::Map<const Vector>(outer.data(), outer.size());
}

}  // namespace

Vector grad_point(const ModelParams& theta, Eigen::Ref<const Vector> x, int y) {
  const auto d = logit_derivatives(theta.link, logits(theta, x), y, nullptr, false);
  return outer_flat(d.grad, x);
}

Vector grad_point_corrected(const ModelParams& theta, Eigen::Ref<const Vector> x, int y,
                            const Matrix& distortion) {
  const auto d = logit_derivatives(theta.link, logits(theta, x), y, &distortion, false);
  return outer_flat(d.grad, x);
}

double average_loss(const EncodedDataset& data, const ModelParams& theta,
                    std::span<const std::size_t> rows) {
  const auto idx = all_rows(data, rows);
  if (idx.empty()) return 0.0;
  double total = 0.0;
  for (auto i : idx) {
    total += loss_point(theta, data.design.row(static_cast<Index>(i)).transpose(), data.labels[i]);
  }
  return total / static_cast<double>(idx.size());
}

Vector average_loss_gradient(const EncodedDataset& data, const ModelParams& theta,
                             std::span<const std::size_t> rows) {
  const auto idx = all_rows(data, rows);
  Matrix g = Matrix::Zero(theta.weights.rows(), theta.weights.cols());
  for (auto i : idx) {
    const Vector x = data.design.row(static_cast<Index>(i)).transpose();
    const auto d = logit_derivatives(theta.link, logits(theta, x), data.labels[i], nullptr, false);
    g.noalias() += d.grad * x.transpose();
  }
  if (!idx.empty()) g /= static_cast<double>(idx.size());
  return Eigen::Map<const Vector>(g.data(), g.size());
}

double accuracy(const EncodedDataset& data, const ModelParams& theta) {
  if (data.size() == 0) return 0.0;
  std::size_t hits = 0;
  for (Index i = 0; i < data.size(); ++i) {
    Index best = 0;
    predict_proba(theta, data.design.row(i).transpose()).maxCoeff(&best);
    hits += best == data.labels[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

HessianOperator::HessianOperator(const Matrix& design, Matrix curvature, Index rows, double shift)
    : design_(&design), curvature_(std::move(curvature)), rows_(rows), shift_(shift) {}

Vector HessianOperator::apply(const Vector& v) const {
  const Index p = design_->cols();
  const Index n = design_->rows();
  if (v.size() != dim()) throw DataError("model: hvp vector has wrong dimension");
  const Eigen::Map<const Matrix> V(v.data(), rows_, p);
  Matrix U = (*design_) * V.transpose();  // n x rows
  for (Index i = 0; i < n; ++i) {
    const Eigen::Map<const Matrix> K(curvature_.row(i).data(), rows_, rows_);
    U.row(i) = (K * U.row(i).transpose()).transpose();
  }
  Matrix out = U.transpose() * (*design_);
  out /= static_cast<double>(n);
  Vector result = Eigen::Map<const Vector>(out.data(), out.size());
  result += shift_ * v;
  return result;
}

Vector HessianOperator::apply_batch(std::span<const Index> batch, const Vector& v) const {
  const Index p = design_->cols();
  const Eigen::Map<const Matrix> V(v.data(), rows_, p);
  Matrix out = Matrix::Zero(rows_, p);
  for (Index i : batch) {
    const Vector x = design_->row(i).transpose();
    const Eigen::Map<const Matrix> K(curvature_.row(i).data(), rows_, rows_);
    const Vector u = K * (V * x);
    out.noalias() += u * x.transpose();
  }
  if (!batch.empty()) out /= static_cast<double>(batch.size());
  Vector result = Eigen::Map<const Vector>(out.data(), out.size());
  result += shift_ * v;
  return result;
}

double HessianOperator::max_sample_norm() const {
  double worst = 0.0;
  for (Index i = 0; i < design_->rows(); ++i) {
    const Eigen::Map<const Matrix> K(curvature_.row(i).data(), rows_, rows_);
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(K, Eigen::EigenvaluesOnly);
    const double k = eig.eigenvalues().cwiseAbs().maxCoeff();
    worst = std::max(worst, k * design_->row(i).squaredNorm());
  }
  return worst + std::abs(shift_);
}

Matrix HessianOperator::dense() const {
  const Index p = design_->cols();
  const Index n = design_->rows();
  Matrix H = Matrix::Zero(dim(), dim());
  for (Index r = 0; r < rows_; ++r) {
    for (Index c = r; c < rows_; ++c) {
      const Vector w = curvature_.col(r * rows_ + c);
      Matrix block = design_->transpose() * (design_->array().colwise() * w.array()).matrix();
      block /= static_cast<double>(n);
      H.block(r * p, c * p, p, p) = block;
      if (c != r) H.block(c * p, r * p, p, p) = block.transpose();
    }
  }
  H.diagonal().array() += shift_;
  return H;
}

Objective::Objective(const EncodedDataset& data, double l2_strength)
    : data_(&data), l2_(l2_strength) {}

Objective::Objective(const EncodedDataset& data, double l2_strength, Matrix distortion,
                     std::vector<bool> corrected)
    : data_(&data), l2_(l2_strength), distortion_(std::move(distortion)), corrected_(std::move(corrected)) {
  if (corrected_.size() != static_cast<std::size_t>(data.size())) {
    throw DataError("model: correction mask size does not match data");
  }
}

const Matrix* Objective::distortion_for(std::size_t i) const {
  if (!distortion_ || !corrected_[i]) return nullptr;
  return &*distortion_;
}

double Objective::data_value(const ModelParams& theta) const {
  const auto& d = *data_;
  if (d.size() == 0) return 0.0;
  double total = 0.0;
  for (Index i = 0; i < d.size(); ++i) {
    const auto ui = static_cast<std::size_t>(i);
    total += logit_derivatives(theta.link, theta.weights * d.design.row(i).transpose(), d.labels[ui],
                               distortion_for(ui), false)
                 .value;
  }
  return total / static_cast<double>(d.size());
}

double Objective::value(const ModelParams& theta) const {
  return data_value(theta) + 0.5 * l2_ * theta.weights.squaredNorm();
}

Vector Objective::gradient(const ModelParams& theta) const {
  const auto& d = *data_;
  check_width(theta, d.width());
  Matrix g = Matrix::Zero(theta.weights.rows(), theta.weights.cols());
  for (Index i = 0; i < d.size(); ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const Vector x = d.design.row(i).transpose();
    const auto ld = logit_derivatives(theta.link, theta.weights * x, d.labels[ui], distortion_for(ui), false);
    g.noalias() += ld.grad * x.transpose();
  }
  if (d.size() > 0) g /= static_cast<double>(d.size());
  g += l2_ * theta.weights;
  return Eigen::Map<const Vector>(g.data(), g.size());
}

HessianOperator Objective::hessian_operator(const ModelParams& theta, double damping) const {
  const auto& d = *data_;
  check_width(theta, d.width());
  const Index R = theta.weights.rows();
  Matrix curvature(d.size(), R * R);
  for (Index i = 0; i < d.size(); ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const auto ld = logit_derivatives(theta.link, theta.weights * d.design.row(i).transpose(),
                                      d.labels[ui], distortion_for(ui), true);
    curvature.row(i) = Eigen::Map<const Eigen::RowVectorXd>(ld.hess.data(), R * R);
  }
  return HessianOperator(d.design, std::move(curvature), R, l2_ + damping);
}

Matrix Objective::hessian(const ModelParams& theta, double damping) const {
  return hessian_operator(theta, damping).dense();
}

Matrix hessian(const EncodedDataset& data, const ModelParams& theta, double damping) {
  return Objective(data, theta.l2_strength).hessian(theta, damping);
}

Vector hvp(const EncodedDataset& data, const ModelParams& theta, const Vector& v, double damping) {
  return Objective(data, theta.l2_strength).hessian_operator(theta, damping).apply(v);
}

ModelParams minimize(const Objective& objective, ModelParams theta, const TrainConfig& cfg) {
  cfg.validate();
  theta.l2_strength = objective.l2_strength();
  theta.info = {};
  Vector w = theta.flat();
  Vector g = objective.gradient(theta);
  int epoch = 0;
  for (; epoch < cfg.max_epochs; ++epoch) {
    if (g.norm() <= cfg.tolerance) break;
    if (cfg.optimizer == Optimizer::GradientDescent) {
      w -= cfg.learning_rate * g;
      theta.set_flat(w);
      g = objective.gradient(theta);
      continue;
    }

    Matrix H = objective.hessian(theta, 0.0);
    Eigen::LLT<Matrix> llt(H);
    double ridge = 1e-10;
    while (llt.info() != Eigen::Success && ridge < 1e6) {
      // Corrected objectives need not be convex away from the optimum.
      Matrix shifted = H;
      shifted.diagonal().array() += ridge;
      llt.compute(shifted);
      ridge *= 10.0;
    }
    if (llt.info() != Eigen::Success) throw NumericalError("model: Newton system is not positive definite");
    const Vector step = -llt.solve(g);

    const double f0 = objective.value(theta);
    const double slope = g.dot(step);
    if (-slope <= 1e-12 * (1.0 + std::abs(f0))) {
      // The Newton decrement is below what the objective can resolve, so a
      // line search would only accept vanishing steps. Take the full step.
      w += step;
      theta.set_flat(w);
      g = objective.gradient(theta);
      continue;
    }
    double t = 1.0;
    ModelParams trial = theta;
    bool accepted = false;
    for (int k = 0; k < 40; ++k, t *= 0.5) {
      trial.set_flat(w + t * step);
      if (objective.value(trial) <= f0 + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // Near the optimum the objective differences fall below rounding; take
      // the full step when it still shrinks the gradient.
      trial.set_flat(w + step);
      const Vector g_full = objective.gradient(trial);
      if (g_full.norm() >= g.norm()) break;
      w += step;
      theta = trial;
      g = g_full;
      continue;
    }
    w += t * step;
    theta.set_flat(w);
    g = objective.gradient(theta);
  }
  theta.info.epochs = epoch;
  theta.info.grad_norm = g.norm();
  theta.info.converged = theta.info.grad_norm <= cfg.tolerance;
  return theta;
}

ModelParams train(const EncodedDataset& data, const TrainConfig& cfg) {
  if (data.size() == 0) throw DataError("model: cannot train on an empty dataset");
  const auto init =
      ModelParams::zeros(data.num_classes, data.width(), cfg.resolved_link(data.num_classes), cfg.l2_strength);
  return minimize(Objective(data, cfg.l2_strength), init, cfg);
}

}  // namespace ldpinf
