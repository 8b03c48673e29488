#include <doctest.h>

#include <algorithm>
#include <set>

#include "ldpinf/dataset.hpp"
#include "support.hpp"

using namespace ldpinf;

namespace {

Schema tiny_schema() {
  return Schema::from_json(nlohmann::json::parse(R"({
    "attributes": [
      {"name": "color", "categories": ["red", "green", "blue"]},
      {"name": "y", "categories": ["no", "yes"]}
    ],
    "label": "y"
  })"));
}

Dataset matching_rows(std::size_t matches, std::size_t others) {
  Dataset ds;
  ds.attributes = {{"g", {"a", "b"}, Encoding::OneHot}, {"y", {"0", "1"}, Encoding::OneHot}};
  ds.label_attribute = 1;
  for (std::size_t i = 0; i < matches; ++i) ds.records.push_back({1, static_cast<int>(i % 2)});
  for (std::size_t i = 0; i < others; ++i) ds.records.push_back({0, static_cast<int>(i % 2)});
  return ds;
}

}  // namespace

TEST_CASE("four-row csv reads back") {
  const auto ds = parse_csv("color,y\nred,no\ngreen,yes\nblue,no\nred,yes\n", tiny_schema());
  CHECK(ds.size() == 4);
  CHECK(ds.attributes.size() == 2);
  CHECK(ds.records[1] == Record{1, 1});
  CHECK(ds.num_classes() == 2);
}

TEST_CASE("dedup keeps distinct rows") {
  auto schema = tiny_schema();
  const std::string text = "color,y\nred,no\nred,no\nblue,yes\nred,no\nblue,yes\n";
  CHECK(parse_csv(text, schema).size() == 5);
  schema.dedup = true;
  const auto ds = parse_csv(text, schema);
  CHECK(ds.size() == 2);
  CHECK(ds.records[0] == Record{0, 0});
  CHECK(ds.records[1] == Record{2, 1});
}

TEST_CASE("csv errors carry the row number") {
  const auto schema = tiny_schema();
  try {
    parse_csv("color,y\nred,no\ngreen\n", schema);
    FAIL("expected a parse error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("row 3") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_csv("color,y\npurple,no\n", schema), ConfigError);
  CHECK_THROWS_AS(parse_csv("shade,y\nred,no\n", schema), ConfigError);
}

TEST_CASE("quoted fields, extra columns and missing markers") {
  auto schema = tiny_schema();
  schema.missing_values = {"?"};
  const auto ds = parse_csv("id,color,y\n\"1, first\",red,\"yes\"\n2,?,no\n3, blue ,no\n", schema);
  REQUIRE(ds.size() == 2);
  CHECK(ds.records[0] == Record{0, 1});
  CHECK(ds.records[1] == Record{2, 0});
  CHECK(split_csv_line("a,\"b,c\",\"d\"\"e\"") == std::vector<std::string>{"a", "b,c", "d\"e"});
}

TEST_CASE("schema rejects bad domains") {
  CHECK_THROWS_AS(Schema::from_json(nlohmann::json::parse(
                      R"({"attributes":[{"name":"y","categories":["a","a"]}],"label":"y"})")),
                  ConfigError);
  CHECK_THROWS_AS(Schema::from_json(nlohmann::json::parse(
                      R"({"attributes":[{"name":"y","categories":["a"]}],"label":"y"})")),
                  ConfigError);
  CHECK_THROWS_AS(Schema::from_json(nlohmann::json::parse(
                      R"({"attributes":[{"name":"y","categories":["a","b"]}],"label":"z"})")),
                  ConfigError);
}

TEST_CASE("one-hot and binarize encodings") {
  Dataset ds;
  ds.attributes = {{"c", {"a", "b", "c"}, Encoding::OneHot},
                   {"b", {"0", "1"}, Encoding::Binarize},
                   {"y", {"n", "y"}, Encoding::OneHot}};
  ds.label_attribute = 2;
  ds.records = {{1, 0, 1}, {2, 1, 0}};

  const auto plain = encode(ds, false);
  CHECK(plain.width() == 4);
  CHECK(plain.design.row(0).head(3) == Vector::Unit(3, 1).transpose());
  CHECK(plain.design(0, 3) == 0.0);
  CHECK(plain.design(1, 3) == 1.0);
  CHECK(plain.labels == std::vector<int>{1, 0});

  const auto biased = encode(ds, true);
  CHECK(biased.width() == 5);
  CHECK(biased.design.col(4).isOnes());

  Dataset single;
  single.attributes = {{"c", {"a", "b", "c"}, Encoding::OneHot}, {"y", {"n", "y"}, Encoding::OneHot}};
  single.label_attribute = 1;
  single.records = {{1, 0}};
  CHECK(encode(single, false).design.row(0) == Vector::Unit(3, 1).transpose());
}

TEST_CASE("encoding round-trips every record") {
  const auto ds = make_synthetic({500, {3, 2, 4, 2}, 3, 1.0, 5});
  const auto enc = encode(ds, true);
  CHECK(decode(enc).records == ds.records);
  const auto again = encode(decode(enc), true);
  CHECK(again.design == enc.design);
  for (const auto& r : enc.encoder.ranges()) {
    if (r.width > 1) {
      CHECK(enc.design.middleCols(r.offset, r.width).rowwise().sum().isOnes());
    }
  }
}

TEST_CASE("split sizes, determinism and seed sensitivity") {
  const auto small = make_synthetic({10, {2, 2}, 2, 1.0, 1});
  const auto s = split(small, 0.2, 3);
  CHECK(s.train.size() == 8);
  CHECK(s.test.size() == 2);

  const auto ds = make_synthetic({1000, {2, 2, 2}, 2, 1.0, 2});
  const auto a = split(ds, 0.2, 9);
  const auto b = split(ds, 0.2, 9);
  const auto c = split(ds, 0.2, 10);
  CHECK(a.test_rows == b.test_rows);
  CHECK(a.test_rows != c.test_rows);
  CHECK(a.train.size() + a.test.size() == ds.size());

  std::vector<std::size_t> all = a.train_rows;
  all.insert(all.end(), a.test_rows.begin(), a.test_rows.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);

  CHECK_THROWS_AS(split(ds, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(split(ds, 1.0, 1), ConfigError);
}

TEST_CASE("select_group sizes") {
  const auto ds = matching_rows(100, 40);
  auto g = select_group(ds, {"g", "b", 0.30, 4}, 17);
  CHECK(g.train_rows.size() == 30);
  CHECK(g.test_rows.size() == 17);
  for (auto i : g.train_rows) CHECK(ds.records[i][0] == 1);

  const auto all = select_group(ds, {"g", "b", 1.0, 4}, 1);
  CHECK(all.train_rows.size() == 100);

  // A class-defined group: 10% of one label.
  const auto by_label = select_group(ds, {"y", "1", 0.1, 4}, 1);
  const auto ones = std::count_if(ds.records.begin(), ds.records.end(), [](const Record& r) { return r[1] == 1; });
  CHECK(by_label.train_rows.size() == static_cast<std::size_t>(ones / 10));

  CHECK_THROWS_AS(select_group(matching_rows(0, 5), {"g", "b", 0.5, 1}, 1), DataError);
  CHECK_THROWS_AS(select_group(ds, {"g", "zzz", 0.5, 1}, 1), ConfigError);
  CHECK_THROWS_AS(select_group(ds, {"g", "b", 0.0, 1}, 1), ConfigError);
  CHECK_THROWS_AS(select_group(ds, {"g", "b", 1.5, 1}, 1), ConfigError);
}

TEST_CASE("groups over k are nested prefixes and deterministic") {
  const auto ds = matching_rows(237, 50);
  std::size_t last = 0;
  std::vector<std::size_t> previous;
  for (double k : {0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 1.0}) {
    const auto g = select_group(ds, {"g", "b", k, 21}, 1);
    CHECK(g.train_rows.size() >= last);
    CHECK(std::equal(previous.begin(), previous.end(), g.train_rows.begin()));
    CHECK(g.train_rows == select_group(ds, {"g", "b", k, 21}, 1).train_rows);
    last = g.train_rows.size();
    previous = g.train_rows;
  }
}

TEST_CASE("test-row subsampling") {
  const auto ds = matching_rows(20, 0);
  auto g = select_group(ds, {"g", "b", 0.5, 1}, 50);
  subsample_test_rows(g, 10, 3);
  CHECK(g.test_rows.size() == 10);
  CHECK(std::set<std::size_t>(g.test_rows.begin(), g.test_rows.end()).size() == 10);
  CHECK(g.test_rows.back() < 50);
}

TEST_CASE("schema json round trip and file loading") {
  testing::TempDir dir("dataset");
  const auto schema = tiny_schema();
  const auto path = dir.write("schema.json", schema.to_json().dump());
  const auto loaded = Schema::load(path);
  CHECK(loaded.to_json() == schema.to_json());
  const auto csv = dir.write("data.csv", "color,y\r\nred,no\r\nblue,yes\r\n");
  CHECK(load_csv(csv, loaded).size() == 2);
  CHECK_THROWS_AS(load_csv(dir.path() / "absent.csv", loaded), DataError);
}

TEST_CASE("synthetic data is deterministic and label depends on features") {
  const auto a = make_synthetic(testing::standard_spec());
  const auto b = make_synthetic(testing::standard_spec());
  CHECK(a.records == b.records);
  CHECK(a.size() == 2000);
  CHECK(a.attributes.size() == 6);
  CHECK(a.attributes[a.label_attribute].name == "y");
  std::set<int> labels;
  for (const auto& r : a.records) labels.insert(r[a.label_attribute]);
  CHECK(labels.size() == 2);
}

TEST_CASE("bundled Adult schema reads the raw file layout") {
  const auto schema = Schema::load(std::filesystem::path(LDPINF_SOURCE_DIR) / "configs" / "adult" / "schema.json");
  const auto ds = parse_csv(
      "age,workclass,fnlwgt,education,education-num,marital-status,occupation,relationship,race,sex,"
      "capital-gain,capital-loss,hours-per-week,native-country,income\n"
      "39, State-gov, 77516, Bachelors, 13, Never-married, Adm-clerical, Not-in-family, White, Male, 2174, 0, 40, "
      "United-States, <=50K\n"
      "50, Self-emp-not-inc, 83311, Bachelors, 13, Married-civ-spouse, Exec-managerial, Husband, White, Male, 0, 0, "
      "13, United-States, <=50K\n"
      "54, ?, 180211, Some-college, 10, Married-civ-spouse, ?, Husband, Asian-Pac-Islander, Male, 0, 0, 60, South, "
      ">50K\n",
      schema);
  CHECK(ds.size() == 2);
  CHECK(ds.attributes.size() == 9);
  CHECK(encode(ds, schema.bias).width() == 100);
}
