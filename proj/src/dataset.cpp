#include "ldpinf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

namespace ldpinf {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

struct CsvRow {
  std::size_t line;
  std::vector<std::string> fields;
};

// Whole-text RFC-4180 tokenizer; quoted fields may span lines.
std::vector<CsvRow> tokenize_csv(std::string_view text) {
  std::vector<CsvRow> rows;
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  bool row_has_content = false;
  std::size_t line = 1;
  std::size_t row_line = 1;

  auto end_row = [&] {
    if (row_has_content || !field.empty() || !fields.empty()) {
      fields.push_back(std::move(field));
      rows.push_back({row_line, std::move(fields)});
    }
    fields.clear();
    field.clear();
    row_has_content = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        row_has_content = true;
        break;
      case ',':
        fields.push_back(std::move(field));
        field.clear();
        row_has_content = true;
        break;
      case '\r':
        break;
      case '\n':
        end_row();
        ++line;
        row_line = line;
        break;
      default:
        field.push_back(c);
        row_has_content = true;
    }
  }
  if (in_quotes) {
    throw DataError("dataset: unterminated quoted field starting on line " +
                    std::to_string(row_line));
  }
  end_row();
  return rows;
}

}  // namespace

int CategoricalDomain::index_of(std::string_view value) const {
  const auto it = std::find(categories.begin(), categories.end(), value);
  return it == categories.end() ? -1 : static_cast<int>(it - categories.begin());
}

void CategoricalDomain::validate() const {
  if (categories.size() < 2) {
    throw ConfigError("dataset: attribute '" + name + "' needs at least two categories");
  }
  std::set<std::string> seen(categories.begin(), categories.end());
  if (seen.size() != categories.size()) {
    throw ConfigError("dataset: attribute '" + name + "' has duplicate categories");
  }
  if (encoding == Encoding::Binarize && categories.size() != 2) {
    throw ConfigError("dataset: attribute '" + name + "' uses binarize but is not binary");
  }
}

std::size_t Dataset::attribute_index(std::string_view name) const {
  for (std::size_t t = 0; t < attributes.size(); ++t) {
    if (attributes[t].name == name) return t;
  }
  throw ConfigError("dataset: unknown attribute '" + std::string(name) + "'");
}

void Dataset::validate() const {
  if (label_attribute >= attributes.size()) {
    throw ConfigError("dataset: label attribute index out of range");
  }
  for (const auto& a : attributes) a.validate();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.size() != attributes.size()) {
      throw DataError("dataset: record " + std::to_string(i) + " has wrong arity");
    }
    for (std::size_t t = 0; t < r.size(); ++t) {
      if (r[t] < 0 || static_cast<std::size_t>(r[t]) >= attributes[t].cardinality()) {
        throw DataError("dataset: record " + std::to_string(i) + " has invalid value for '" +
                        attributes[t].name + "'");
      }
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out{attributes, {}, label_attribute};
  out.records.reserve(rows.size());
  for (auto r : rows) out.records.push_back(records.at(r));
  return out;
}

Encoder::Encoder(std::vector<CategoricalDomain> attributes, std::size_t label_attribute, bool bias)
    : attributes_(std::move(attributes)), label_attribute_(label_attribute), bias_(bias) {
  Index offset = 0;
  for (std::size_t t = 0; t < attributes_.size(); ++t) {
    if (t == label_attribute_) continue;
    const auto& a = attributes_[t];
    const Index w = a.encoding == Encoding::Binarize ? 1 : static_cast<Index>(a.cardinality());
    ranges_.push_back({t, offset, w});
    offset += w;
  }
  width_ = offset + (bias_ ? 1 : 0);
}

void Encoder::encode_into(const Record& record, Eigen::Ref<Vector> row) const {
  row.setZero();
  for (const auto& r : ranges_) {
    const int v = record[r.attribute];
    if (r.width == 1) {
      row[r.offset] = static_cast<double>(v);
    } else {
      row[r.offset + v] = 1.0;
    }
  }
  if (bias_) row[width_ - 1] = 1.0;
}

Vector Encoder::encode(const Record& record) const {
  Vector row(width_);
  encode_into(record, row);
  return row;
}

Record Encoder::decode(Eigen::Ref<const Vector> row, int label) const {
  Record record(attributes_.size(), 0);
  record[label_attribute_] = label;
  for (const auto& r : ranges_) {
    if (r.width == 1) {
      record[r.attribute] = row[r.offset] > 0.5 ? 1 : 0;
    } else {
      Index best = 0;
      row.segment(r.offset, r.width).maxCoeff(&best);
      record[r.attribute] = static_cast<int>(best);
    }
  }
  return record;
}

EncodedDataset encode(const Dataset& ds, bool bias) {
  EncodedDataset out;
  out.encoder = Encoder(ds.attributes, ds.label_attribute, bias);
  out.num_classes = ds.num_classes();
  out.design.resize(static_cast<Index>(ds.size()), out.encoder.width());
  out.labels.resize(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& rec = ds.records[i];
    Vector row(out.encoder.width());
    out.encoder.encode_into(rec, row);
    out.design.row(static_cast<Index>(i)) = row.transpose();
    out.labels[i] = rec[ds.label_attribute];
  }
  return out;
}

Dataset decode(const EncodedDataset& encoded) {
  Dataset out{encoded.encoder.attributes(), {}, encoded.encoder.label_attribute()};
  out.records.reserve(static_cast<std::size_t>(encoded.size()));
  for (Index i = 0; i < encoded.size(); ++i) {
    Vector row = encoded.design.row(i).transpose();
    out.records.push_back(encoded.encoder.decode(row, encoded.labels[static_cast<std::size_t>(i)]));
  }
  return out;
}

Schema Schema::from_json(const nlohmann::json& j) {
  Schema s;
  try {
    for (const auto& a : j.at("attributes")) {
      CategoricalDomain d;
      d.name = a.at("name").get<std::string>();
      d.categories = a.at("categories").get<std::vector<std::string>>();
      const auto mode = a.value("encode", std::string("onehot"));
      if (mode == "onehot") {
        d.encoding = Encoding::OneHot;
      } else if (mode == "binarize") {
        d.encoding = Encoding::Binarize;
      } else {
        throw ConfigError("dataset: unknown encode mode '" + mode + "'");
      }
      s.attributes.push_back(std::move(d));
    }
    s.label = j.at("label").get<std::string>();
    s.dedup = j.value("dedup", false);
    s.bias = j.value("bias", true);
    if (j.contains("missing_values")) {
      s.missing_values = j.at("missing_values").get<std::vector<std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("dataset: invalid schema: ") + e.what());
  }
  bool found = false;
  for (const auto& a : s.attributes) {
    a.validate();
    found = found || a.name == s.label;
  }
  if (!found) throw ConfigError("dataset: label '" + s.label + "' is not a schema attribute");
  return s;
}

Schema Schema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("dataset: cannot open schema " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("dataset: schema is not valid JSON: " + std::string(e.what()));
  }
}

nlohmann::json Schema::to_json() const {
  nlohmann::json attrs = nlohmann::json::array();
  for (const auto& a : attributes) {
    attrs.push_back({{"name", a.name},
                     {"categories", a.categories},
                     {"encode", a.encoding == Encoding::Binarize ? "binarize" : "onehot"}});
  }
  return {{"attributes", attrs},
          {"label", label},
          {"dedup", dedup},
          {"bias", bias},
          {"missing_values", missing_values}};
}

std::vector<std::string> split_csv_line(std::string_view line) {
  auto rows = tokenize_csv(line);
  if (rows.empty()) return {};
  return std::move(rows.front().fields);
}

Dataset parse_csv(std::string_view text, const Schema& schema) {
  auto rows = tokenize_csv(text);
  if (rows.empty()) throw DataError("dataset: CSV has no header row");

  const auto& header = rows.front().fields;
  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t c = 0; c < header.size(); ++c) column[trim(header[c])] = c;

  Dataset ds;
  ds.attributes = schema.attributes;
  std::vector<std::size_t> source;
  for (std::size_t t = 0; t < schema.attributes.size(); ++t) {
    const auto& name = schema.attributes[t].name;
    const auto it = column.find(name);
    if (it == column.end()) throw ConfigError("dataset: CSV lacks column '" + name + "'");
    source.push_back(it->second);
    if (name == schema.label) ds.label_attribute = t;
  }

  std::set<std::string> missing(schema.missing_values.begin(), schema.missing_values.end());
  std::set<Record> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.fields.size() == 1 && trim(row.fields[0]).empty()) continue;
    if (row.fields.size() != header.size()) {
      throw DataError("dataset: row " + std::to_string(row.line) + " has " +
                      std::to_string(row.fields.size()) + " fields, expected " +
                      std::to_string(header.size()));
    }
    Record rec(schema.attributes.size());
    bool drop = false;
    for (std::size_t t = 0; t < schema.attributes.size() && !drop; ++t) {
      const auto value = trim(row.fields[source[t]]);
      if (missing.count(value)) {
        drop = true;
        break;
      }
      const int idx = schema.attributes[t].index_of(value);
      if (idx < 0) {
        throw ConfigError("dataset: row " + std::to_string(row.line) + ": unknown category '" +
                          value + "' for attribute '" + schema.attributes[t].name + "'");
      }
      rec[t] = idx;
    }
    if (drop) continue;
    if (schema.dedup && !seen.insert(rec).second) continue;
    ds.records.push_back(std::move(rec));
  }
  ds.validate();
  return ds;
}

Dataset load_csv(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("dataset: cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), schema);
}

TrainTestSplit split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("dataset: test fraction must lie in (0, 1)");
  }
  const std::size_t n = ds.size();
  if (n < 2) throw DataError("dataset: need at least two records to split");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  n_test = std::clamp<std::size_t>(n_test, 1, n - 1);

  TrainTestSplit out;
  out.test_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  out.train_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(out.test_rows.begin(), out.test_rows.end());
  std::sort(out.train_rows.begin(), out.train_rows.end());
  out.train = ds.subset(out.train_rows);
  out.test = ds.subset(out.test_rows);
  return out;
}

GroupSpec select_group(const Dataset& train, const SelectionRule& rule, std::size_t test_count) {
  if (!(rule.fraction > 0.0 && rule.fraction <= 1.0)) {
    throw ConfigError("dataset: group fraction must lie in (0, 1]");
  }
  const auto t = train.attribute_index(rule.attribute);
  const int value = train.attributes[t].index_of(rule.value);
  if (value < 0) {
    throw ConfigError("dataset: attribute '" + rule.attribute + "' has no category '" +
                      rule.value + "'");
  }
  std::vector<std::size_t> matches;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (train.records[i][t] == value) matches.push_back(i);
  }
  if (matches.empty()) {
    throw DataError("dataset: no training rows match " + rule.attribute + "=" + rule.value);
  }
  std::mt19937_64 rng(rule.seed);
  std::shuffle(matches.begin(), matches.end(), rng);
  // The tiny offset keeps e.g. 0.29 * 100 from flooring to 28.
  const auto take = static_cast<std::size_t>(
      std::floor(rule.fraction * static_cast<double>(matches.size()) + 1e-9));
  if (take == 0) {
    throw DataError("dataset: fraction " + std::to_string(rule.fraction) +
                    " selects no rows out of " + std::to_string(matches.size()));
  }
  GroupSpec g;
  g.train_rows.assign(matches.begin(), matches.begin() + static_cast<std::ptrdiff_t>(take));
  g.test_rows.resize(test_count);
  std::iota(g.test_rows.begin(), g.test_rows.end(), 0);
  g.rule = rule;
  return g;
}

void subsample_test_rows(GroupSpec& group, std::size_t count, std::uint64_t seed) {
  if (count == 0 || count >= group.test_rows.size()) return;
  std::mt19937_64 rng(seed);
  std::shuffle(group.test_rows.begin(), group.test_rows.end(), rng);
  group.test_rows.resize(count);
  std::sort(group.test_rows.begin(), group.test_rows.end());
}

Dataset make_synthetic(const SyntheticSpec& spec) {
  if (spec.num_classes < 2) throw ConfigError("dataset: synthetic data needs >= 2 classes");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, spec.signal);

  Dataset ds;
  for (std::size_t f = 0; f < spec.feature_cardinalities.size(); ++f) {
    CategoricalDomain d;
    d.name = "f" + std::to_string(f);
    for (int c = 0; c < spec.feature_cardinalities[f]; ++c) d.categories.push_back(std::to_string(c));
    ds.attributes.push_back(std::move(d));
  }
  CategoricalDomain label{"y", {}, Encoding::OneHot};
  for (int c = 0; c < spec.num_classes; ++c) label.categories.push_back(std::to_string(c));
  ds.attributes.push_back(std::move(label));
  ds.label_attribute = ds.attributes.size() - 1;

  // weights[f][category][class]
  std::vector<std::vector<std::vector<double>>> weights;
  for (int d : spec.feature_cardinalities) {
    std::vector<std::vector<double>> w(static_cast<std::size_t>(d),
                                       std::vector<double>(static_cast<std::size_t>(spec.num_classes)));
    for (auto& row : w) {
      for (auto& v : row) v = gauss(rng);
    }
    weights.push_back(std::move(w));
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ds.records.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    Record rec(ds.attributes.size());
    std::vector<double> logits(static_cast<std::size_t>(spec.num_classes), 0.0);
    for (std::size_t f = 0; f < spec.feature_cardinalities.size(); ++f) {
      std::uniform_int_distribution<int> pick(0, spec.feature_cardinalities[f] - 1);
      rec[f] = pick(rng);
      for (int c = 0; c < spec.num_classes; ++c) {
        logits[static_cast<std::size_t>(c)] += weights[f][static_cast<std::size_t>(rec[f])][static_cast<std::size_t>(c)];
      }
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (auto& l : logits) total += (l = std::exp(l - top));
    double u = unit(rng) * total;
    int y = spec.num_classes - 1;
    for (int c = 0; c < spec.num_classes; ++c) {
      u -= logits[static_cast<std::size_t>(c)];
      if (u <= 0.0) {
        y = c;
        break;
      }
    }
    rec[ds.label_attribute] = y;
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

}  // namespace ldpinf
