#include "ldpinf/cli.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace ldpinf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError("cli: '" + where + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError("cli: unknown key '" + key + "' in " + where);
  }
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.is_absolute() || base.empty()) return p;
  return base / p;
}

SyntheticSpec synthetic_from_json(const json& j, std::uint64_t seed) {
  reject_unknown_keys(j, {"n", "features", "classes", "signal", "seed"}, "dataset.synthetic");
  SyntheticSpec s;
  s.seed = seed;
  s.n = j.value("n", s.n);
  s.feature_cardinalities = j.value("features", s.feature_cardinalities);
  s.num_classes = j.value("classes", s.num_classes);
  s.signal = j.value("signal", s.signal);
  s.seed = j.value("seed", s.seed);
  return s;
}

json synthetic_to_json(const SyntheticSpec& s) {
  return {{"n", s.n},
          {"features", s.feature_cardinalities},
          {"classes", s.num_classes},
          {"signal", s.signal},
          {"seed", s.seed}};
}

TrainConfig train_from_json(const json& j) {
  reject_unknown_keys(j, {"optimizer", "learning_rate", "max_epochs", "tolerance", "l2", "link"}, "train");
  TrainConfig t;
  if (j.contains("optimizer")) {
    const auto name = j.at("optimizer").get<std::string>();
    if (name == "newton") {
      t.optimizer = Optimizer::Newton;
    } else if (name == "gd") {
      t.optimizer = Optimizer::GradientDescent;
    } else {
      throw ConfigError("cli: unknown optimizer '" + name + "'");
    }
  }
  t.learning_rate = j.value("learning_rate", t.learning_rate);
  t.max_epochs = j.value("max_epochs", t.max_epochs);
  t.tolerance = j.value("tolerance", t.tolerance);
  t.l2_strength = j.value("l2", t.l2_strength);
  if (j.contains("link")) {
    const auto name = j.at("link").get<std::string>();
    if (name == "sigmoid") {
      t.link = Link::Sigmoid;
    } else if (name == "softmax") {
      t.link = Link::Softmax;
    } else {
      throw ConfigError("cli: unknown link '" + name + "'");
    }
  }
  return t;
}

json train_to_json(const TrainConfig& t) {
  json j = {{"optimizer", t.optimizer == Optimizer::Newton ? "newton" : "gd"},
            {"learning_rate", t.learning_rate},
            {"max_epochs", t.max_epochs},
            {"tolerance", t.tolerance},
            {"l2", t.l2_strength}};
  if (t.link) j["link"] = *t.link == Link::Sigmoid ? "sigmoid" : "softmax";
  return j;
}

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cli: cannot write " + path.string());
  out << text;
  if (!out.flush()) throw ConfigError("cli: write failed for " + path.string());
}

template <class T>
void put_optional(json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

template <class T>
std::optional<T> get_optional(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

}  // namespace

ReportFormat parse_report_format(const std::string& name) {
  if (name == "json") return ReportFormat::Json;
  if (name == "csv") return ReportFormat::Csv;
  if (name == "both") return ReportFormat::Both;
  throw ConfigError("cli: unknown format '" + name + "'");
}

const char* to_string(ReportFormat f) {
  switch (f) {
    case ReportFormat::Json:
      return "json";
    case ReportFormat::Csv:
      return "csv";
    case ReportFormat::Both:
      return "both";
  }
  return "?";
}

std::vector<double> EpsilonGrid::values() const {
  if (!explicit_values.empty()) return explicit_values;
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double t = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
    out[i] = log_spacing ? std::exp(std::log(min) + t * (std::log(max) - std::log(min))) : min + t * (max - min);
  }
  if (count > 1) out.back() = max;
  return out;
}

SweepConfig SweepConfig::from_json(const json& j, const fs::path& base_dir) {
  try {
    reject_unknown_keys(j,
                        {"dataset", "epsilons", "group", "mode", "feature_attributes", "correction", "scaling",
                         "ihvp", "train", "oracle", "repeats", "seed", "test_subsample", "threads", "output"},
                        "config");
    SweepConfig c;
    c.seed = j.value("seed", c.seed);

    const json& d = j.at("dataset");
    reject_unknown_keys(d, {"csv", "test_csv", "schema", "synthetic", "test_fraction"}, "dataset");
    if (d.contains("csv")) c.dataset.csv = resolve(d.at("csv").get<std::string>(), base_dir);
    if (d.contains("test_csv")) c.dataset.test_csv = resolve(d.at("test_csv").get<std::string>(), base_dir);
    if (d.contains("schema")) c.dataset.schema = resolve(d.at("schema").get<std::string>(), base_dir);
    if (d.contains("synthetic")) c.dataset.synthetic = synthetic_from_json(d.at("synthetic"), c.seed);
    c.dataset.test_fraction = d.value("test_fraction", c.dataset.test_fraction);

    if (j.contains("epsilons")) {
      const json& e = j.at("epsilons");
      reject_unknown_keys(e, {"count", "min", "max", "spacing", "values"}, "epsilons");
      c.epsilons.count = e.value("count", c.epsilons.count);
      c.epsilons.min = e.value("min", c.epsilons.min);
      c.epsilons.max = e.value("max", c.epsilons.max);
      const auto spacing = e.value("spacing", std::string("linear"));
      if (spacing != "linear" && spacing != "log") throw ConfigError("cli: spacing must be linear or log");
      c.epsilons.log_spacing = spacing == "log";
      c.epsilons.explicit_values = e.value("values", std::vector<double>{});
    }

    const json& g = j.at("group");
    reject_unknown_keys(g, {"attribute", "value", "k"}, "group");
    c.group.attribute = g.at("attribute").get<std::string>();
    c.group.value = g.at("value").get<std::string>();
    c.group.k = g.value("k", c.group.k);

    if (j.contains("mode")) c.mode = parse_perturb_mode(j.at("mode").get<std::string>());
    c.feature_attributes = j.value("feature_attributes", c.feature_attributes);
    if (j.contains("correction")) c.correction = parse_correction(j.at("correction").get<std::string>());
    if (j.contains("scaling")) c.scaling = parse_scaling_mode(j.at("scaling").get<std::string>());
    if (j.contains("ihvp")) c.ihvp = IhvpConfig::from_json(j.at("ihvp"), c.ihvp);
    if (!j.contains("ihvp") || !j.at("ihvp").contains("seed")) c.ihvp.seed = c.seed;
    if (j.contains("train")) c.train = train_from_json(j.at("train"));
    c.train.seed = c.seed;
    if (j.contains("oracle")) c.oracle = OracleMode::parse(j.at("oracle").get<std::string>());
    c.repeats = j.value("repeats", c.repeats);
    c.test_subsample = get_optional<std::size_t>(j, "test_subsample");
    c.threads = j.value("threads", c.threads);
    if (j.contains("output")) {
      const json& o = j.at("output");
      reject_unknown_keys(o, {"dir", "format"}, "output");
      if (o.contains("dir")) c.output_dir = resolve(o.at("dir").get<std::string>(), base_dir);
      if (o.contains("format")) c.format = parse_report_format(o.at("format").get<std::string>());
    }
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("cli: malformed config: ") + e.what());
  }
}

SweepConfig SweepConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cli: cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("cli: " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j, path.parent_path());
}

json SweepConfig::to_json() const {
  json d = {{"test_fraction", dataset.test_fraction}};
  if (dataset.csv) d["csv"] = dataset.csv->generic_string();
  if (dataset.test_csv) d["test_csv"] = dataset.test_csv->generic_string();
  if (dataset.schema) d["schema"] = dataset.schema->generic_string();
  if (dataset.synthetic) d["synthetic"] = synthetic_to_json(*dataset.synthetic);

  json e = {{"count", epsilons.count},
            {"min", epsilons.min},
            {"max", epsilons.max},
            {"spacing", epsilons.log_spacing ? "log" : "linear"}};
  if (!epsilons.explicit_values.empty()) e["values"] = epsilons.explicit_values;

  json j = {{"dataset", d},
            {"epsilons", e},
            {"group", {{"attribute", group.attribute}, {"value", group.value}, {"k", group.k}}},
            {"mode", ldpinf::to_string(mode)},
            {"feature_attributes", feature_attributes},
            {"correction", ldpinf::to_string(correction)},
            {"scaling", ldpinf::to_string(scaling)},
            {"ihvp", ihvp.to_json()},
            {"train", train_to_json(train)},
            {"oracle", oracle.to_string()},
            {"repeats", repeats},
            {"seed", seed},
            {"threads", threads},
            {"output", {{"dir", output_dir.generic_string()}, {"format", ldpinf::to_string(format)}}}};
  if (test_subsample) j["test_subsample"] = *test_subsample;
  return j;
}

void SweepConfig::validate() const {
  const bool from_csv = dataset.csv.has_value();
  if (from_csv == dataset.synthetic.has_value()) {
    throw ConfigError("cli: dataset needs exactly one of 'csv' or 'synthetic'");
  }
  if (from_csv && !dataset.schema) throw ConfigError("cli: a csv dataset needs a schema");
  if (dataset.test_csv && !from_csv) throw ConfigError("cli: test_csv requires a csv dataset");
  if (!(dataset.test_fraction > 0.0 && dataset.test_fraction < 1.0)) {
    throw ConfigError("cli: test_fraction must lie in (0, 1)");
  }
  if (epsilons.explicit_values.empty()) {
    if (epsilons.count < 1) throw ConfigError("cli: epsilon grid is empty");
    if (!(epsilons.min > 0.0) || !(epsilons.max >= epsilons.min)) {
      throw ConfigError("cli: epsilon grid needs 0 < min <= max");
    }
  }
  for (double v : epsilons.values()) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("cli: epsilon values must be positive");
  }
  if (group.attribute.empty()) throw ConfigError("cli: group.attribute is required");
  if (group.k.empty()) throw ConfigError("cli: k grid is empty");
  for (double k : group.k) {
    if (!(k > 0.0 && k <= 1.0)) throw ConfigError("cli: k values must lie in (0, 1]");
  }
  if (repeats < 1) throw ConfigError("cli: repeats must be >= 1");
  if (threads < 1) throw ConfigError("cli: threads must be >= 1");
  if (test_subsample && *test_subsample == 0) throw ConfigError("cli: test_subsample must be positive");
  ihvp.validate();
  train.validate();
}

SweepReport run(const SweepConfig& config) {
  config.validate();
  auto start = Clock::now();

  Dataset train_records;
  Dataset test_records;
  bool bias = true;
  if (config.dataset.synthetic) {
    auto s = split(make_synthetic(*config.dataset.synthetic), config.dataset.test_fraction, config.seed);
    train_records = std::move(s.train);
    test_records = std::move(s.test);
  } else {
    const auto schema = Schema::load(*config.dataset.schema);
    bias = schema.bias;
    auto full = load_csv(*config.dataset.csv, schema);
    if (config.dataset.test_csv) {
      train_records = std::move(full);
      test_records = load_csv(*config.dataset.test_csv, schema);
    } else {
      auto s = split(full, config.dataset.test_fraction, config.seed);
      train_records = std::move(s.train);
      test_records = std::move(s.test);
    }
  }
  const auto train = encode(train_records, bias);
  const auto test = encode(test_records, bias);
  const double load_seconds = seconds_since(start);

  start = Clock::now();
  const auto baseline = ldpinf::train(train, config.train);
  const double train_seconds = seconds_since(start);
  if (!baseline.info.converged) {
    warn("cli: baseline training stopped at gradient norm " + std::to_string(baseline.info.grad_norm));
  }

  std::vector<GroupSpec> groups;
  for (double k : config.group.k) {
    auto g = select_group(train_records, {config.group.attribute, config.group.value, k, config.seed},
                          static_cast<std::size_t>(test.size()));
    if (config.test_subsample) subsample_test_rows(g, *config.test_subsample, mix_seed(config.seed, 0x5e7e));
    groups.push_back(std::move(g));
  }

  SweepOptions options;
  options.epsilons = config.epsilons.values();
  options.mode = config.mode;
  options.feature_attributes = config.feature_attributes;
  options.correction = config.correction;
  options.scaling = config.scaling;
  options.ihvp = config.ihvp;
  options.train = config.train;
  options.oracle = config.oracle;
  options.repeats = config.repeats;
  options.seed = config.seed;
  options.threads = config.threads;

  auto report = run_sweep_comparison({train_records, train, test, baseline}, groups, options);
  report.timing.load_seconds = load_seconds;
  report.timing.train_seconds = train_seconds;
  return report;
}

const std::vector<std::string>& report_csv_columns() {
  static const std::vector<std::string> columns = {"schema_version", "group",         "k",
                                                   "group_size",     "epsilon",       "estimated",
                                                   "actual",         "actual_signed", "calibrated"};
  return columns;
}

json report_to_json(const SweepConfig& config, const SweepReport& report) {
  const auto& b = report.baseline;
  json rows = json::array();
  for (const auto& r : report.rows) {
    json row = {{"group", r.group},
                {"k", r.k},
                {"group_size", r.group_size},
                {"epsilon", r.epsilon},
                {"estimated", r.estimated}};
    put_optional(row, "actual", r.actual);
    put_optional(row, "actual_signed", r.actual_signed);
    put_optional(row, "calibrated", r.calibrated);
    rows.push_back(std::move(row));
  }
  json groups = json::array();
  for (const auto& g : report.groups) {
    json row = {{"group", g.group}, {"k", g.k}, {"group_size", g.group_size}};
    put_optional(row, "mae", g.mae);
    put_optional(row, "rho", g.rho);
    if (g.fit) row["fit"] = {{"slope", g.fit->slope}, {"intercept", g.fit->intercept}};
    groups.push_back(std::move(row));
  }
  return {{"version", kVersion},
          {"schema_version", kCsvSchemaVersion},
          {"config", config.to_json()},
          {"baseline",
           {{"n_train", b.n_train},
            {"n_test", b.n_test},
            {"width", b.width},
            {"parameters", b.parameters},
            {"test_loss", b.test_loss},
            {"test_accuracy", b.test_accuracy},
            {"epochs", b.epochs},
            {"grad_norm", b.grad_norm},
            {"converged", b.converged}}},
          {"rows", rows},
          {"groups", groups}};
}

SweepReport report_from_json(const json& j) {
  try {
    SweepReport r;
    const json& b = j.at("baseline");
    r.baseline = {b.at("n_train").get<std::size_t>(),  b.at("n_test").get<std::size_t>(),
                  b.at("width").get<Index>(),          b.at("parameters").get<Index>(),
                  b.at("test_loss").get<double>(),     b.at("test_accuracy").get<double>(),
                  b.at("epochs").get<int>(),           b.at("grad_norm").get<double>(),
                  b.at("converged").get<bool>()};
    for (const auto& row : j.at("rows")) {
      SweepRow s;
      s.group = row.at("group").get<std::size_t>();
      s.k = row.at("k").get<double>();
      s.group_size = row.at("group_size").get<std::size_t>();
      s.epsilon = row.at("epsilon").get<double>();
      s.estimated = row.at("estimated").get<double>();
      s.actual = get_optional<double>(row, "actual");
      s.actual_signed = get_optional<double>(row, "actual_signed");
      s.calibrated = get_optional<double>(row, "calibrated");
      r.rows.push_back(s);
    }
    for (const auto& row : j.at("groups")) {
      GroupSummary g;
      g.group = row.at("group").get<std::size_t>();
      g.k = row.at("k").get<double>();
      g.group_size = row.at("group_size").get<std::size_t>();
      g.mae = get_optional<double>(row, "mae");
      g.rho = get_optional<double>(row, "rho");
      if (row.contains("fit")) {
        g.fit = LinearFit{row.at("fit").at("slope").get<double>(), row.at("fit").at("intercept").get<double>()};
      }
      r.groups.push_back(g);
    }
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("cli: malformed report: ") + e.what());
  }
}

std::string report_csv(const SweepReport& report) {
  std::ostringstream out;
  const auto& cols = report_csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& r : report.rows) {
    out << kCsvSchemaVersion << ',' << r.group << ',' << fmt(r.k) << ',' << r.group_size << ',' << fmt(r.epsilon)
        << ',' << fmt(r.estimated) << ',' << fmt(r.actual) << ',' << fmt(r.actual_signed) << ','
        << fmt(r.calibrated) << '\n';
  }
  return out.str();
}

std::string summary_csv(const SweepReport& report) {
  std::ostringstream out;
  out << "schema_version,group,k,group_size,mae,rho,slope,intercept\n";
  for (const auto& g : report.groups) {
    out << kCsvSchemaVersion << ',' << g.group << ',' << fmt(g.k) << ',' << g.group_size << ',' << fmt(g.mae)
        << ',' << fmt(g.rho) << ',' << (g.fit ? fmt(g.fit->slope) : "") << ','
        << (g.fit ? fmt(g.fit->intercept) : "") << '\n';
  }
  return out.str();
}

json timing_json(const SweepReport& report) {
  const auto& t = report.timing;
  json j = {{"load_seconds", t.load_seconds},
            {"train_seconds", t.train_seconds},
            {"ihvp_seconds", t.ihvp_seconds},
            {"ihvp_solves", t.ihvp_solves},
            {"estimate_seconds", t.estimate_seconds},
            {"estimate_calls", t.estimate_calls},
            {"estimate_seconds_per_call", t.estimate_calls ? t.estimate_seconds / t.estimate_calls : 0.0},
            {"estimator_phase_seconds", t.estimator_phase()},
            {"oracle_seconds", t.oracle_seconds},
            {"retrain_count", t.retrain_count},
            {"retrain_seconds", t.retrain_seconds},
            {"retrain_seconds_per_call", t.retrain_count ? t.retrain_seconds / t.retrain_count : 0.0}};
  if (t.retrain_count > 0 && t.estimator_phase() > 0.0) {
    j["retrain_to_estimator_ratio"] = t.retrain_seconds / t.estimator_phase();
  }
  return j;
}

void check_report_consistency(const SweepReport& report, OracleMode oracle) {
  const auto again = summarize_rows(report.rows, oracle);
  auto mismatch = [](const std::optional<double>& a, const std::optional<double>& b) {
    if (a.has_value() != b.has_value()) return true;
    return a && std::abs(*a - *b) > 1e-12;
  };
  if (again.size() != report.groups.size()) throw NumericalError("cli: group aggregates do not match the rows");
  for (std::size_t i = 0; i < again.size(); ++i) {
    if (mismatch(again[i].mae, report.groups[i].mae) || mismatch(again[i].rho, report.groups[i].rho)) {
      throw NumericalError("cli: aggregates of group " + std::to_string(i) + " do not match its rows");
    }
  }
}

std::vector<fs::path> emit_report(const SweepConfig& config, const SweepReport& report, const fs::path& dir,
                                  ReportFormat format) {
  check_report_consistency(report, config.oracle);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cli: cannot create " + dir.string() + ": " + ec.message());

  std::vector<fs::path> written;
  auto emit = [&](const char* name, const std::string& text) {
    write_file(dir / name, text);
    written.push_back(dir / name);
  };
  if (format != ReportFormat::Csv) emit("report.json", report_to_json(config, report).dump(2) + "\n");
  if (format != ReportFormat::Json) {
    emit("report.csv", report_csv(report));
    if (config.oracle.kind != OracleMode::Kind::Off) emit("summary.csv", summary_csv(report));
  }
  emit("timing.json", timing_json(report).dump(2) + "\n");
  return written;
}

}  // namespace ldpinf
