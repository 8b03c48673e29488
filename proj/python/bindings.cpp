#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <numeric>

#include "ldpinf/cli.hpp"
#include "ldpinf/correction.hpp"

namespace py = pybind11;
using namespace ldpinf;

namespace {

EncodedDataset from_arrays(const Matrix& design, const std::vector<int>& labels, int classes) {
  if (static_cast<std::size_t>(design.rows()) != labels.size()) {
    throw DataError("python: design has " + std::to_string(design.rows()) + " rows but " +
                    std::to_string(labels.size()) + " labels were given");
  }
  for (int y : labels) {
    if (y < 0 || y >= classes) throw DataError("python: label " + std::to_string(y) + " out of range");
  }
  EncodedDataset d;
  d.design = design;
  d.labels = labels;
  d.num_classes = classes;
  return d;
}

TrainConfig train_config(double l2) {
  TrainConfig cfg;
  cfg.l2_strength = l2;
  cfg.validate();
  return cfg;
}

py::dict model_dict(const ModelParams& theta) {
  py::dict d;
  d["weights"] = theta.weights;
  d["link"] = theta.link == Link::Sigmoid ? "sigmoid" : "softmax";
  d["epochs"] = theta.info.epochs;
  d["grad_norm"] = theta.info.grad_norm;
  d["converged"] = theta.info.converged;
  return d;
}

// Trains on (design, labels) and returns the label-only estimate of the mean
// test-loss change for every epsilon, optionally under forward correction.
std::vector<double> label_influence(const Matrix& design, const std::vector<int>& labels,
                                    const Matrix& test_design, const std::vector<int>& test_labels, int classes,
                                    const std::vector<std::size_t>& group, const std::vector<double>& epsilons,
                                    double l2, const std::string& ihvp, bool flc) {
  const auto train = from_arrays(design, labels, classes);
  const auto test = from_arrays(test_design, test_labels, classes);
  const auto theta = ldpinf::train(train, train_config(l2));
  IhvpConfig cfg;
  cfg.method = parse_ihvp_method(ihvp);
  std::vector<std::size_t> rows(static_cast<std::size_t>(test.size()));
  std::iota(rows.begin(), rows.end(), 0);
  const TestGradientCache cache(train, theta, test, rows, cfg);
  std::vector<double> out;
  for (double eps : epsilons) {
    const auto r = flc ? influence_rr_flc(train, theta, group, eps, cache)
                       : influence_rr_label(train, theta, group, eps, cache);
    out.push_back(r.estimated_loss_delta);
  }
  return out;
}

std::string run_config(const std::string& config_json, const std::string& base_dir, const std::string& output_dir) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(config_json);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("python: config is not valid JSON: ") + e.what());
  }
  const auto cfg = SweepConfig::from_json(doc, base_dir);
  SweepReport report;
  {
    py::gil_scoped_release release;
    report = run(cfg);
  }
  if (!output_dir.empty()) emit_report(cfg, report, output_dir, cfg.format);
  auto out = report_to_json(cfg, report);
  out["timing"] = timing_json(report);
  return out.dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Influence-function estimates of randomized-response effects on test loss";
  m.attr("__version__") = kVersion;

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def(
      "distortion_matrix", [](int size, double epsilon) { return DistortionMatrix(size, epsilon).dense(); },
      py::arg("size"), py::arg("epsilon"));
  m.def(
      "observed_distribution",
      [](const Vector& pi, double epsilon) {
        return observed_distribution({pi}, DistortionMatrix(static_cast<int>(pi.size()), epsilon)).proportions;
      },
      py::arg("pi"), py::arg("epsilon"));
  m.def(
      "recover_distribution",
      [](const Vector& lambda, double epsilon) {
        const auto r = recover_distribution(lambda, DistortionMatrix(static_cast<int>(lambda.size()), epsilon));
        return py::make_tuple(r.distribution.proportions, r.clipped_mass);
      },
      py::arg("observed"), py::arg("epsilon"), "Returns (distribution, clipped_mass).");

  m.def(
      "train_logistic",
      [](const Matrix& design, const std::vector<int>& labels, int classes, double l2) {
        return model_dict(ldpinf::train(from_arrays(design, labels, classes), train_config(l2)));
      },
      py::arg("design"), py::arg("labels"), py::arg("classes") = 2, py::arg("l2") = 1e-3);

  m.def("label_influence", &label_influence, py::arg("design"), py::arg("labels"), py::arg("test_design"),
        py::arg("test_labels"), py::arg("classes"), py::arg("group"), py::arg("epsilons"), py::arg("l2") = 1e-3,
        py::arg("ihvp") = "explicit", py::arg("flc") = false);

  m.def(
      "spearman_rho", [](const std::vector<double>& a, const std::vector<double>& b) { return spearman_rho(a, b); },
      py::arg("a"), py::arg("b"));
  m.def(
      "mae", [](const std::vector<double>& a, const std::vector<double>& b) { return mae(a, b); }, py::arg("a"),
      py::arg("b"));

  m.def("run_json", &run_config, py::arg("config"), py::arg("base_dir") = "", py::arg("output_dir") = "");
}
