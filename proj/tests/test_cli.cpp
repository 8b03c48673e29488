#include <doctest.h>

#include <fstream>
#include <sstream>

#include "ldpinf/cli.hpp"
#include "support.hpp"

using namespace ldpinf;
using nlohmann::json;

namespace {

const std::filesystem::path kSource = LDPINF_SOURCE_DIR;

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::size_t fields(const std::string& line) { return static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1; }

SweepConfig smoke(const std::string& oracle = "on") {
  auto cfg = SweepConfig::load(kSource / "configs" / "smoke.json");
  cfg.oracle = OracleMode::parse(oracle);
  return cfg;
}

}  // namespace

TEST_CASE("epsilon grids") {
  EpsilonGrid linear;
  const auto def = linear.values();
  REQUIRE(def.size() == 30);
  CHECK(def.front() == 0.001);
  CHECK(def.back() == 10.0);
  CHECK(def[1] - def[0] == doctest::Approx((10.0 - 0.001) / 29.0).epsilon(1e-12));

  EpsilonGrid log{4, 0.01, 10.0, true, {}};
  const auto lv = log.values();
  REQUIRE(lv.size() == 4);
  CHECK(lv[1] == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(lv[2] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(lv.back() == 10.0);

  EpsilonGrid single{1, 0.5, 0.5, false, {}};
  CHECK(single.values() == std::vector<double>{0.5});
  EpsilonGrid listed;
  listed.explicit_values = {0.3, 2.0};
  CHECK(listed.values() == std::vector<double>{0.3, 2.0});
}

TEST_CASE("config parsing") {
  const auto cfg = SweepConfig::load(kSource / "configs" / "smoke.json");
  CHECK(cfg.dataset.synthetic.has_value());
  CHECK(cfg.dataset.synthetic->n == 500);
  CHECK(cfg.epsilons.values().size() == 3);
  CHECK(cfg.group.k == std::vector<double>{0.2, 0.5});
  CHECK(cfg.oracle.kind == OracleMode::Kind::On);
  CHECK(cfg.repeats == 1);
  CHECK(cfg.seed == 7);
  CHECK(cfg.train.l2_strength == 0.01);
  CHECK(cfg.output_dir == kSource / "configs" / "smoke-out");

  const auto back = SweepConfig::from_json(json::parse(cfg.to_json().dump()));
  CHECK(back.to_json() == cfg.to_json());

  const json base = {{"dataset", {{"synthetic", {{"n", 100}}}}}, {"group", {{"attribute", "f0"}, {"value", "1"}}}};
  CHECK_NOTHROW(SweepConfig::from_json(base).validate());
  auto bad = base;
  bad["epsilon"] = 3;
  CHECK_THROWS_AS(SweepConfig::from_json(bad), ConfigError);
  bad = base;
  bad["dataset"]["synthetic"]["rows"] = 3;
  CHECK_THROWS_AS(SweepConfig::from_json(bad), ConfigError);
  bad = base;
  bad["mode"] = "sideways";
  CHECK_THROWS_AS(SweepConfig::from_json(bad), ConfigError);
  bad = base;
  bad["repeats"] = "many";
  CHECK_THROWS_AS(SweepConfig::from_json(bad), ConfigError);
  bad = base;
  bad["group"]["k"] = {0.0};
  CHECK_THROWS_AS(SweepConfig::from_json(bad).validate(), ConfigError);
  bad = base;
  bad["epsilons"] = {{"values", {-1.0}}};
  CHECK_THROWS_AS(SweepConfig::from_json(bad).validate(), ConfigError);
  bad = base;
  bad.erase("dataset");
  CHECK_THROWS_AS(SweepConfig::from_json(bad).validate(), ConfigError);
  CHECK_THROWS_AS(SweepConfig::load(kSource / "configs" / "missing.json"), ConfigError);
}

TEST_CASE("smoke run") {
  const auto cfg = smoke();
  const auto report = run(cfg);
  CHECK(report.rows.size() == 6);
  CHECK(report.groups.size() == 2);
  CHECK(report.timing.ihvp_solves == 1);
  CHECK(report.timing.retrain_count == 6);
  for (const auto& row : report.rows) CHECK(row.actual.has_value());
  CHECK_NOTHROW(check_report_consistency(report, cfg.oracle));

  auto broken = report;
  *broken.groups[0].mae += 1e-9;
  CHECK_THROWS_AS(check_report_consistency(broken, cfg.oracle), NumericalError);
}

TEST_CASE("one IHVP however large the grid") {
  auto cfg = smoke("off");
  cfg.epsilons = {25, 0.01, 10.0, false, {}};
  cfg.group.k = {0.1, 0.2, 0.3, 0.4, 0.5};
  const auto report = run(cfg);
  CHECK(report.rows.size() == 125);
  CHECK(report.timing.ihvp_solves == 1);
  CHECK(report.timing.estimate_calls == 125);
}

TEST_CASE("report json round trip and csv layout") {
  const auto cfg = smoke();
  const auto report = run(cfg);
  const auto doc = report_to_json(cfg, report);
  CHECK(doc.at("schema_version") == kCsvSchemaVersion);
  const auto back = report_from_json(json::parse(doc.dump(2)));
  CHECK(report_to_json(cfg, back) == doc);
  REQUIRE(back.rows.size() == report.rows.size());
  for (std::size_t i = 0; i < back.rows.size(); ++i) {
    CHECK(back.rows[i].estimated == report.rows[i].estimated);
    CHECK(back.rows[i].actual == report.rows[i].actual);
  }

  const auto csv = lines(report_csv(report));
  REQUIRE(csv.size() == 7);
  CHECK(report_csv_columns().size() == 9);
  CHECK(report_csv_columns().front() == "schema_version");
  for (const auto& line : csv) CHECK(fields(line) == 9);
  CHECK(csv[1].rfind("1,", 0) == 0);
  CHECK_THROWS_AS(report_from_json(json{{"rows", 3}}), DataError);
}

TEST_CASE("oracle-off reports leave actual columns empty") {
  const auto cfg = smoke("off");
  const auto report = run(cfg);
  const auto csv = lines(report_csv(report));
  for (std::size_t i = 1; i < csv.size(); ++i) {
    CHECK(fields(csv[i]) == 9);
    CHECK(csv[i].substr(csv[i].size() - 3) == ",,,");
  }
  const auto doc = report_to_json(cfg, report);
  for (const auto& row : doc.at("rows")) CHECK_FALSE(row.contains("actual"));
  for (const auto& g : doc.at("groups")) {
    CHECK_FALSE(g.contains("mae"));
    CHECK_FALSE(g.contains("rho"));
  }

  const testing::TempDir dir("cli-off");
  const auto written = emit_report(cfg, report, dir.path(), ReportFormat::Both);
  CHECK(written.size() == 3);
  CHECK_FALSE(std::filesystem::exists(dir.path() / "summary.csv"));
}

TEST_CASE("identical configs emit identical bytes") {
  const auto cfg = smoke("off");
  const testing::TempDir a("cli-a");
  const testing::TempDir b("cli-b");
  emit_report(cfg, run(cfg), a.path(), ReportFormat::Both);
  emit_report(cfg, run(cfg), b.path(), ReportFormat::Both);
  for (const char* name : {"report.json", "report.csv"}) {
    CHECK(slurp(a.path() / name) == slurp(b.path() / name));
    CHECK_FALSE(slurp(a.path() / name).empty());
  }
}

TEST_CASE("emission writes the requested formats") {
  const auto cfg = smoke();
  const auto report = run(cfg);
  const testing::TempDir dir("cli-formats");
  const auto json_only = emit_report(cfg, report, dir.path() / "j", ReportFormat::Json);
  CHECK(json_only.size() == 2);
  const auto both = emit_report(cfg, report, dir.path() / "b", ReportFormat::Both);
  CHECK(both.size() == 4);
  const auto summary = lines(slurp(dir.path() / "b" / "summary.csv"));
  CHECK(summary.size() == 3);
  const auto timing = json::parse(slurp(dir.path() / "b" / "timing.json"));
  CHECK(timing.at("ihvp_solves") == 1);
  CHECK(timing.contains("retrain_to_estimator_ratio"));
  CHECK(parse_report_format("csv") == ReportFormat::Csv);
  CHECK_THROWS_AS(parse_report_format("xml"), ConfigError);
}

TEST_CASE("csv datasets with a schema file") {
  const testing::TempDir dir("cli-csv");
  std::ostringstream csv;
  csv << "color,size,label\n";
  std::mt19937_64 rng(4);
  for (int i = 0; i < 300; ++i) {
    const int c = static_cast<int>(rng() % 3);
    const int s = static_cast<int>(rng() % 2);
    const int y = (c + s + static_cast<int>(rng() % 4 == 0)) % 2;
    csv << (c == 0 ? "red" : c == 1 ? "green" : "blue") << ',' << (s ? "big" : "small") << ',' << (y ? "yes" : "no")
        << '\n';
  }
  dir.write("data.csv", csv.str());
  dir.write("schema.json", R"({"attributes": [
      {"name": "color", "categories": ["red", "green", "blue"]},
      {"name": "size", "categories": ["small", "big"]},
      {"name": "label", "categories": ["no", "yes"]}],
    "label": "label"})");
  dir.write("config.json", R"({"dataset": {"csv": "data.csv", "schema": "schema.json"},
    "epsilons": {"values": [0.5, 2.0]},
    "group": {"attribute": "color", "value": "green", "k": [0.5]},
    "mode": "both", "feature_attributes": ["size"], "oracle": "on", "repeats": 2, "seed": 3})");
  const auto cfg = SweepConfig::load(dir.path() / "config.json");
  const auto report = run(cfg);
  CHECK(report.rows.size() == 2);
  CHECK(report.baseline.n_train == 240);
  CHECK(report.groups[0].rho.has_value());
}
