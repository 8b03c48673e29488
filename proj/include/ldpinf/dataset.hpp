#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ldpinf/common.hpp"

namespace ldpinf {

enum class Encoding { OneHot, Binarize };

struct CategoricalDomain {
  std::string name;
  std::vector<std::string> categories;
  Encoding encoding = Encoding::OneHot;

  std::size_t cardinality() const { return categories.size(); }
  /// Index of `value` in the category list, or -1.
  int index_of(std::string_view value) const;
  /// Throws ConfigError unless categories are unique and at least two.
  void validate() const;
};

/// One category index per attribute.
using Record = std::vector<int>;

struct Dataset {
  std::vector<CategoricalDomain> attributes;
  std::vector<Record> records;
  std::size_t label_attribute = 0;

  std::size_t size() const { return records.size(); }
  int num_classes() const {
    return static_cast<int>(attributes.at(label_attribute).cardinality());
  }
  std::size_t attribute_index(std::string_view name) const;
  void validate() const;
  Dataset subset(std::span<const std::size_t> rows) const;
};

/// Column layout of the design matrix. Labels are never encoded.
struct ColumnRange {
  std::size_t attribute;
  Index offset;
  Index width;
};

class Encoder {
 public:
  Encoder() = default;
  Encoder(std::vector<CategoricalDomain> attributes, std::size_t label_attribute, bool bias);

  Index width() const { return width_; }
  bool bias() const { return bias_; }
  std::size_t label_attribute() const { return label_attribute_; }
  const std::vector<ColumnRange>& ranges() const { return ranges_; }
  const std::vector<CategoricalDomain>& attributes() const { return attributes_; }

  void encode_into(const Record& record, Eigen::Ref<Vector> row) const;
  Vector encode(const Record& record) const;
  /// Inverse of encode for the feature attributes; the label slot is set to `label`.
  Record decode(Eigen::Ref<const Vector> row, int label) const;

 private:
  std::vector<CategoricalDomain> attributes_;
  std::vector<ColumnRange> ranges_;
  std::size_t label_attribute_ = 0;
  Index width_ = 0;
  bool bias_ = false;
};

struct EncodedDataset {
  Matrix design;
  std::vector<int> labels;
  Encoder encoder;
  int num_classes = 2;

  Index size() const { return design.rows(); }
  Index width() const { return design.cols(); }
};

EncodedDataset encode(const Dataset& ds, bool bias);
/// Rebuilds the categorical records from an encoded dataset.
Dataset decode(const EncodedDataset& encoded);

struct Schema {
  std::vector<CategoricalDomain> attributes;
  std::string label;
  bool dedup = false;
  /// Rows containing any of these raw tokens are dropped before validation.
  std::vector<std::string> missing_values;
  bool bias = true;

  static Schema from_json(const nlohmann::json& j);
  static Schema load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

/// Reads a header-first CSV whose columns include every schema attribute.
/// Columns that the schema does not list are ignored (feature selection).
Dataset load_csv(const std::filesystem::path& path, const Schema& schema);
Dataset parse_csv(std::string_view text, const Schema& schema);

/// Splits one CSV line into fields (RFC-4180 quoting).
std::vector<std::string> split_csv_line(std::string_view line);

struct TrainTestSplit {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
};

TrainTestSplit split(const Dataset& ds, double test_fraction, std::uint64_t seed);

struct SelectionRule {
  std::string attribute;
  std::string value;
  double fraction = 0.1;
  std::uint64_t seed = 0;
};

struct GroupSpec {
  std::vector<std::size_t> train_rows;  // S
  std::vector<std::size_t> test_rows;   // S_te
  SelectionRule rule;
};

/// Seeded shuffle of rows matching attribute == value, then the first
/// floor(fraction * matches) of them. The shuffle depends only on the seed,
/// so groups for increasing fractions are nested prefixes.
GroupSpec select_group(const Dataset& train, const SelectionRule& rule, std::size_t test_count);

/// Replaces S_te with a seeded random sample of `count` of its rows.
void subsample_test_rows(GroupSpec& group, std::size_t count, std::uint64_t seed);

struct SyntheticSpec {
  std::size_t n = 2000;
  /// Cardinality of each feature attribute; all binary by default.
  std::vector<int> feature_cardinalities = {2, 2, 2, 2, 2};
  int num_classes = 2;
  /// Scale of the random per-category logit weights; larger = cleaner labels.
  double signal = 1.5;
  std::uint64_t seed = 0;
};

/// Categorical data whose label follows a random softmax model of the features.
Dataset make_synthetic(const SyntheticSpec& spec);

}  // namespace ldpinf
