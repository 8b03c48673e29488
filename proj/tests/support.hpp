#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>

#include "ldpinf/dataset.hpp"
#include "ldpinf/model.hpp"

namespace testing {

using ldpinf::EncodedDataset;
using ldpinf::Index;
using ldpinf::Link;
using ldpinf::Matrix;
using ldpinf::ModelParams;
using ldpinf::Vector;

inline Vector gaussian(Index size, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector v(size);
  for (Index i = 0; i < size; ++i) v[i] = normal(rng);
  return v;
}

/// Continuous random design with labels drawn uniformly; enough for calculus
/// checks that never look at the categorical encoder.
inline EncodedDataset random_data(Index n, Index p, int classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  EncodedDataset d;
  d.design = Matrix(n, p);
  for (Index i = 0; i < n; ++i) d.design.row(i) = gaussian(p, rng).transpose();
  std::uniform_int_distribution<int> label(0, classes - 1);
  d.labels.resize(static_cast<std::size_t>(n));
  for (auto& y : d.labels) y = label(rng);
  d.num_classes = classes;
  return d;
}

inline ModelParams random_params(int classes, Index p, std::uint64_t seed, double l2 = 1e-2, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  const Link link = classes == 2 ? Link::Sigmoid : Link::Softmax;
  auto theta = ModelParams::zeros(classes, p, link, l2);
  theta.set_flat(gaussian(theta.dim(), rng, scale));
  return theta;
}

/// Central differences of f at x with step h.
inline Vector central_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h = 1e-5) {
  Vector g(x.size());
  Vector y = x;
  for (Index i = 0; i < x.size(); ++i) {
    y[i] = x[i] + h;
    const double up = f(y);
    y[i] = x[i] - h;
    const double down = f(y);
    y[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double relative_error(const Vector& got, const Vector& want) {
  const double scale = std::max(want.norm(), 1e-12);
  return (got - want).norm() / scale;
}

/// The synthetic binary instance the estimator-vs-oracle checks run on.
inline ldpinf::SyntheticSpec standard_spec(std::size_t n = 2000, std::uint64_t seed = 11) {
  ldpinf::SyntheticSpec s;
  s.n = n;
  s.feature_cardinalities = {2, 2, 2, 2, 2};
  s.num_classes = 2;
  s.seed = seed;
  return s;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("ldpinf-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path write(const std::string& name, const std::string& text) const {
    std::ofstream(path_ / name, std::ios::binary) << text;
    return path_ / name;
  }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
