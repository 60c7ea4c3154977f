// Copyright 2026 The ews-lab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Tabular data model: feature manifest with the individual/environmental
// partition, student records, cohorts, visit logs, and their file formats.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

#include "ewslab/csv.hpp"
#include "ewslab/error.hpp"
#include "ewslab/random.hpp"

namespace ewslab {

enum class FeatureKind { kIndividual, kEnvironmental };
enum class ValueType { kNumeric, kBinary, kCategorical };

inline std::string_view to_string(FeatureKind k) {
  return k == FeatureKind::kIndividual ? "individual" : "environmental";
}

inline std::string_view to_string(ValueType v) {
  switch (v) {
    case ValueType::kNumeric: return "numeric";
    case ValueType::kBinary: return "binary";
    case ValueType::kCategorical: return "categorical";
  }
  return "?";
}

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::kIndividual;
  ValueType vtype = ValueType::kNumeric;

  bool operator==(const FeatureSpec&) const = default;
};

class FeatureManifest {
 public:
  FeatureManifest() = default;

  explicit FeatureManifest(std::vector<FeatureSpec> entries) : entries_(std::move(entries)) {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].name.empty()) {
        throw Error(ErrorCode::kInvalidArgument, "feature with empty name");
      }
      if (!index_.emplace(entries_[i].name, i).second) {
        throw Error(ErrorCode::kDuplicateFeature, entries_[i].name);
      }
    }
  }

  const std::vector<FeatureSpec>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::optional<std::size_t> index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const FeatureSpec& at(std::string_view name) const {
    auto idx = index_of(name);
    if (!idx) throw Error(ErrorCode::kUnknownFeature, std::string(name));
    return entries_[*idx];
  }

  std::size_t count(FeatureKind kind) const {
    return static_cast<std::size_t>(std::count_if(
        entries_.begin(), entries_.end(), [&](const FeatureSpec& f) { return f.kind == kind; }));
  }

  // Partitioned training needs both sides of x = (x_env, x_ind).
  void require_partitioned() const {
    if (count(FeatureKind::kIndividual) == 0 || count(FeatureKind::kEnvironmental) == 0) {
      throw Error(ErrorCode::kInvalidArgument,
                  "manifest needs at least one individual and one environmental feature");
    }
  }

  bool operator==(const FeatureManifest& other) const { return entries_ == other.entries_; }

  static FeatureManifest from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw Error(ErrorCode::kInvalidArgument, "manifest must be a JSON array");
    std::vector<FeatureSpec> entries;
    for (const auto& e : j) {
      FeatureSpec f;
      f.name = e.at("name").get<std::string>();
      auto kind = e.at("kind").get<std::string>();
      if (kind == "individual") {
        f.kind = FeatureKind::kIndividual;
      } else if (kind == "environmental") {
        f.kind = FeatureKind::kEnvironmental;
      } else {
        throw Error(ErrorCode::kInvalidArgument, "bad kind '" + kind + "' for " + f.name);
      }
      auto vtype = e.at("vtype").get<std::string>();
      if (vtype == "numeric") {
        f.vtype = ValueType::kNumeric;
      } else if (vtype == "binary") {
        f.vtype = ValueType::kBinary;
      } else if (vtype == "categorical") {
        f.vtype = ValueType::kCategorical;
      } else {
        throw Error(ErrorCode::kInvalidArgument, "bad vtype '" + vtype + "' for " + f.name);
      }
      entries.push_back(std::move(f));
    }
    return FeatureManifest(std::move(entries));
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& f : entries_) {
      j.push_back({{"name", f.name},
                   {"kind", std::string(to_string(f.kind))},
                   {"vtype", std::string(to_string(f.vtype))}});
    }
    return j;
  }

  static FeatureManifest load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kInvalidArgument, path + ": " + e.what());
    }
    return from_json(j);
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
    out << to_json().dump(2) << '\n';
  }

 private:
  std::vector<FeatureSpec> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

using FeatureValue = std::variant<double, std::string>;

struct StudentRecord {
  std::string student_id;
  int cohort_year = 0;
  std::string school_id;
  std::string district_id;
  std::optional<int> outcome;  // 1 = graduated on time
  std::vector<FeatureValue> features;  // aligned with the manifest
};

class Cohort {
 public:
  Cohort() = default;

  Cohort(FeatureManifest manifest, std::vector<StudentRecord> records)
      : manifest_(std::move(manifest)), records_(std::move(records)) {
    validate();
  }

  const FeatureManifest& manifest() const { return manifest_; }
  const std::vector<StudentRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const StudentRecord& operator[](std::size_t i) const { return records_[i]; }

  bool has_all_outcomes() const {
    return std::all_of(records_.begin(), records_.end(),
                       [](const StudentRecord& r) { return r.outcome.has_value(); });
  }

  std::vector<int> outcomes() const {
    std::vector<int> y;
    y.reserve(records_.size());
    for (const auto& r : records_) {
      if (!r.outcome) throw Error(ErrorCode::kMissingOutcome, "student " + r.student_id);
      y.push_back(*r.outcome);
    }
    return y;
  }

  // Values of a numeric or binary feature.
  std::vector<double> numeric(std::string_view name) const {
    auto idx = manifest_.index_of(name);
    if (!idx) throw Error(ErrorCode::kUnknownFeature, std::string(name));
    if (manifest_.entries()[*idx].vtype == ValueType::kCategorical) {
      throw Error(ErrorCode::kNotNumeric, std::string(name));
    }
    std::vector<double> out;
    out.reserve(records_.size());
    for (const auto& r : records_) out.push_back(std::get<double>(r.features[*idx]));
    return out;
  }

  std::vector<std::string> student_ids() const {
    std::vector<std::string> ids;
    ids.reserve(records_.size());
    for (const auto& r : records_) ids.push_back(r.student_id);
    return ids;
  }

  std::vector<std::string> school_ids() const {
    std::vector<std::string> ids;
    ids.reserve(records_.size());
    for (const auto& r : records_) ids.push_back(r.school_id);
    return ids;
  }

  Cohort subset(std::span<const std::size_t> indices) const {
    std::vector<StudentRecord> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(records_.at(i));
    return Cohort(manifest_, std::move(out));
  }

  Cohort with_outcomes(std::span<const int> outcomes) const& {
    return Cohort(*this).with_outcomes(outcomes);
  }

  // Only outcomes change, so the remaining invariants carry over.
  Cohort with_outcomes(std::span<const int> outcomes) && {
    check_lengths(outcomes.size(), records_.size(), "with_outcomes");
    for (std::size_t i = 0; i < records_.size(); ++i) {
      if (outcomes[i] != 0 && outcomes[i] != 1) {
        throw Error(ErrorCode::kTypeMismatch, "outcome must be 0/1 for " + records_[i].student_id);
      }
      records_[i].outcome = outcomes[i];
    }
    return std::move(*this);
  }

 private:
  void validate() const {
    std::unordered_map<std::string_view, std::string_view> district_of;
    std::unordered_set<std::string_view> ids;
    const auto& entries = manifest_.entries();
    for (const auto& r : records_) {
      if (r.student_id.empty()) throw Error(ErrorCode::kInvalidArgument, "empty student_id");
      if (!ids.insert(r.student_id).second) {
        throw Error(ErrorCode::kInvalidArgument, "duplicate student_id " + r.student_id);
      }
      if (r.outcome && *r.outcome != 0 && *r.outcome != 1) {
        throw Error(ErrorCode::kTypeMismatch, "outcome of " + r.student_id + " not in {0,1}");
      }
      if (r.features.size() != entries.size()) {
        throw Error(ErrorCode::kSchemaMismatch, "record " + r.student_id + " has " +
                                                    std::to_string(r.features.size()) +
                                                    " features, manifest has " +
                                                    std::to_string(entries.size()));
      }
      for (std::size_t f = 0; f < entries.size(); ++f) {
        const auto& v = r.features[f];
        if (entries[f].vtype == ValueType::kCategorical) {
          if (!std::holds_alternative<std::string>(v)) {
            throw Error(ErrorCode::kTypeMismatch, entries[f].name + " must be categorical");
          }
          continue;
        }
        if (!std::holds_alternative<double>(v)) {
          throw Error(ErrorCode::kTypeMismatch, entries[f].name + " must be numeric");
        }
        double x = std::get<double>(v);
        if (!std::isfinite(x)) {
          throw Error(ErrorCode::kTypeMismatch, entries[f].name + " is not finite for " + r.student_id);
        }
        if (entries[f].vtype == ValueType::kBinary && x != 0.0 && x != 1.0) {
          throw Error(ErrorCode::kTypeMismatch, entries[f].name + " must be 0/1 for " + r.student_id);
        }
      }
      auto [it, fresh] = district_of.emplace(r.school_id, r.district_id);
      if (!fresh && it->second != r.district_id) {
        throw Error(ErrorCode::kInvalidArgument,
                    "school " + r.school_id + " maps to two districts");
      }
    }
  }

  FeatureManifest manifest_;
  std::vector<StudentRecord> records_;
};

// ---------------------------------------------------------------------------
// Cohort CSV

inline constexpr std::string_view kIdColumns[] = {"student_id", "cohort_year", "school_id",
                                                  "district_id", "outcome"};

struct LoadOptions {
  bool require_ids = true;       // cohort_year, school_id, district_id
  bool require_outcome = false;  // column must exist (cells may still be empty)
};

inline Cohort parse_cohort(const FeatureManifest& manifest, const csv::Table& table,
                           const std::string& source, LoadOptions opts = {}) {
  int c_student = table.require_column("student_id");
  int c_year = table.column("cohort_year");
  int c_school = table.column("school_id");
  int c_district = table.column("district_id");
  int c_outcome = table.column("outcome");
  if (opts.require_ids) {
    table.require_column("cohort_year");
    table.require_column("school_id");
    table.require_column("district_id");
  }
  if (opts.require_outcome) table.require_column("outcome");

  std::vector<int> feature_col(manifest.size(), -1);
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    const auto& name = table.header[c];
    if (std::find(std::begin(kIdColumns), std::end(kIdColumns), name) != std::end(kIdColumns)) {
      continue;
    }
    auto idx = manifest.index_of(name);
    if (!idx) throw Error(ErrorCode::kUnknownFeature, source + ": column '" + name + "'");
    feature_col[*idx] = static_cast<int>(c);
  }
  for (std::size_t f = 0; f < manifest.size(); ++f) {
    if (feature_col[f] < 0) {
      throw Error(ErrorCode::kMissingColumn, source + ": feature '" + manifest.entries()[f].name + "'");
    }
  }

  std::vector<StudentRecord> records;
  records.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    auto where = [&](std::string_view col) {
      return source + ": row " + std::to_string(i + 1) + ", column '" + std::string(col) + "'";
    };
    StudentRecord r;
    r.student_id = row[c_student];
    if (c_year >= 0) {
      long long y = 0;
      if (!csv::parse_int(row[c_year], y)) throw Error(ErrorCode::kTypeMismatch, where("cohort_year"));
      r.cohort_year = static_cast<int>(y);
    }
    if (c_school >= 0) r.school_id = row[c_school];
    if (c_district >= 0) r.district_id = row[c_district];
    if (c_outcome >= 0 && !row[c_outcome].empty()) {
      const auto& cell = row[c_outcome];
      if (cell == "0") {
        r.outcome = 0;
      } else if (cell == "1") {
        r.outcome = 1;
      } else {
        throw Error(ErrorCode::kTypeMismatch, where("outcome") + ": '" + cell + "' is not 0/1");
      }
    }
    r.features.reserve(manifest.size());
    for (std::size_t f = 0; f < manifest.size(); ++f) {
      const auto& spec = manifest.entries()[f];
      const auto& cell = row[feature_col[f]];
      if (spec.vtype == ValueType::kCategorical) {
        if (cell.empty()) throw Error(ErrorCode::kMissingValue, where(spec.name));
        r.features.emplace_back(cell);
        continue;
      }
      if (cell.empty()) throw Error(ErrorCode::kMissingValue, where(spec.name));
      double x = 0;
      if (!csv::parse_double(cell, x) || !std::isfinite(x)) {
        throw Error(ErrorCode::kTypeMismatch, where(spec.name) + ": '" + cell + "'");
      }
      if (spec.vtype == ValueType::kBinary && x != 0.0 && x != 1.0) {
        throw Error(ErrorCode::kTypeMismatch, where(spec.name) + ": '" + cell + "' is not 0/1");
      }
      r.features.emplace_back(x);
    }
    records.push_back(std::move(r));
  }
  return Cohort(manifest, std::move(records));
}

inline Cohort load_cohort(const std::string& manifest_path, const std::string& data_path,
                          LoadOptions opts = {}) {
  auto manifest = FeatureManifest::load(manifest_path);
  return parse_cohort(manifest, csv::read_file(data_path), data_path, opts);
}

inline void write_cohort(const Cohort& c, std::ostream& out) {
  csv::Row header(std::begin(kIdColumns), std::end(kIdColumns));
  for (const auto& f : c.manifest().entries()) header.push_back(f.name);
  csv::write_row(out, header);
  csv::Row row;
  for (const auto& r : c.records()) {
    row.clear();
    row.push_back(r.student_id);
    row.push_back(std::to_string(r.cohort_year));
    row.push_back(r.school_id);
    row.push_back(r.district_id);
    row.push_back(r.outcome ? std::to_string(*r.outcome) : std::string());
    for (const auto& v : r.features) {
      if (const auto* d = std::get_if<double>(&v)) {
        row.push_back(csv::format_double(*d));
      } else {
        row.push_back(std::get<std::string>(v));
      }
    }
    csv::write_row(out, row);
  }
}

inline void write_cohort(const Cohort& c, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  write_cohort(c, out);
}

// ---------------------------------------------------------------------------
// Train/test split keyed by hash(seed, student_id), so it is stable under row
// reordering.

inline std::pair<Cohort, Cohort> split_cohort(const Cohort& c, double train_fraction,
                                              std::uint64_t seed) {
  if (c.empty()) throw Error(ErrorCode::kEmptyCohort, "cannot split an empty cohort");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "train_fraction must lie in (0,1)");
  }
  const std::size_t n = c.size();
  std::vector<std::pair<std::uint64_t, std::size_t>> keyed(n);
  for (std::size_t i = 0; i < n; ++i) {
    keyed[i] = {derive_seed(seed, fnv1a(c[i].student_id)), i};
  }
  std::sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return c[a.second].student_id < c[b.second].student_id;
  });
  auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  std::vector<std::size_t> train, test;
  for (std::size_t k = 0; k < n; ++k) (k < n_train ? train : test).push_back(keyed[k].second);
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {c.subset(train), c.subset(test)};
}

// ---------------------------------------------------------------------------
// Feature projection

struct PartitionSelector {
  enum class Mode { kEnvironmentalOnly, kAll, kEnvironmentalPlus };

  Mode mode = Mode::kAll;
  std::vector<std::string> extra;  // individual features added in kEnvironmentalPlus

  static PartitionSelector environmental_only() { return {Mode::kEnvironmentalOnly, {}}; }
  static PartitionSelector all() { return {Mode::kAll, {}}; }
  static PartitionSelector environmental_plus(std::vector<std::string> names) {
    return {Mode::kEnvironmentalPlus, std::move(names)};
  }

  bool operator==(const PartitionSelector&) const = default;

  nlohmann::json to_json() const {
    switch (mode) {
      case Mode::kEnvironmentalOnly: return "environmental";
      case Mode::kAll: return "all";
      case Mode::kEnvironmentalPlus: return nlohmann::json{{"environmental_plus", extra}};
    }
    return nullptr;
  }

  static PartitionSelector from_json(const nlohmann::json& j) {
    if (j.is_string()) {
      auto s = j.get<std::string>();
      if (s == "environmental" || s == "environmental_only") return environmental_only();
      if (s == "all") return all();
      throw Error(ErrorCode::kInvalidArgument, "unknown partition '" + s + "'");
    }
    if (j.is_object() && j.contains("environmental_plus")) {
      return environmental_plus(j.at("environmental_plus").get<std::vector<std::string>>());
    }
    throw Error(ErrorCode::kInvalidArgument, "bad partition selector " + j.dump());
  }
};

// Selected manifest entries plus the one-of-k vocabulary of each categorical
// entry, frozen at schema creation (normally on the training cohort).
struct FeatureSchema {
  std::vector<FeatureSpec> features;
  std::vector<std::vector<std::string>> vocab;  // sorted; empty for non-categorical

  std::vector<std::string> column_names() const {
    std::vector<std::string> names;
    for (std::size_t f = 0; f < features.size(); ++f) {
      if (features[f].vtype == ValueType::kCategorical) {
        for (const auto& cat : vocab[f]) names.push_back(features[f].name + "=" + cat);
      } else {
        names.push_back(features[f].name);
      }
    }
    return names;
  }

  std::size_t width() const {
    std::size_t w = 0;
    for (std::size_t f = 0; f < features.size(); ++f) {
      w += features[f].vtype == ValueType::kCategorical ? vocab[f].size() : 1;
    }
    return w;
  }

  // Fingerprint over (name, kind, vtype) of the selected features.
  std::uint64_t fingerprint() const {
    std::uint64_t h = fnv1a("ewslab-schema-v1");
    for (const auto& f : features) {
      h = fnv1a(f.name, h);
      h = fnv1a(to_string(f.kind), h);
      h = fnv1a(to_string(f.vtype), h);
      h = fnv1a("|", h);
    }
    return h;
  }

  bool operator==(const FeatureSchema&) const = default;
};

// Dense row-major matrix.
struct FeatureMatrix {
  std::vector<std::string> columns;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  FeatureMatrix() = default;
  FeatureMatrix(std::vector<std::string> names, std::size_t n)
      : columns(std::move(names)), rows(n), cols(columns.size()), data(rows * cols, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  std::vector<double> column(std::size_t c) const {
    std::vector<double> out(rows);
    for (std::size_t r = 0; r < rows; ++r) out[r] = (*this)(r, c);
    return out;
  }

  FeatureMatrix subset_rows(std::span<const std::size_t> idx) const {
    FeatureMatrix out(columns, idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(idx[k] * cols), cols,
                  out.data.begin() + static_cast<std::ptrdiff_t>(k * cols));
    }
    return out;
  }

  // Horizontal concatenation.
  static FeatureMatrix hstack(const FeatureMatrix& a, const FeatureMatrix& b) {
    check_lengths(a.rows, b.rows, "hstack rows");
    auto names = a.columns;
    names.insert(names.end(), b.columns.begin(), b.columns.end());
    FeatureMatrix out(std::move(names), a.rows);
    for (std::size_t r = 0; r < a.rows; ++r) {
      for (std::size_t c = 0; c < a.cols; ++c) out(r, c) = a(r, c);
      for (std::size_t c = 0; c < b.cols; ++c) out(r, a.cols + c) = b(r, c);
    }
    return out;
  }
};

inline std::vector<FeatureSpec> select_features(const FeatureManifest& m,
                                                const PartitionSelector& sel) {
  std::set<std::string> extra;
  for (const auto& name : sel.extra) {
    m.at(name);  // throws UnknownFeature
    extra.insert(name);
  }
  std::vector<FeatureSpec> out;
  for (const auto& f : m.entries()) {
    bool keep = false;
    switch (sel.mode) {
      case PartitionSelector::Mode::kAll: keep = true; break;
      case PartitionSelector::Mode::kEnvironmentalOnly:
        keep = f.kind == FeatureKind::kEnvironmental;
        break;
      case PartitionSelector::Mode::kEnvironmentalPlus:
        keep = f.kind == FeatureKind::kEnvironmental || extra.count(f.name) > 0;
        break;
    }
    if (keep) out.push_back(f);
  }
  return out;
}

inline FeatureSchema make_schema(const Cohort& c, const PartitionSelector& sel) {
  FeatureSchema s;
  s.features = select_features(c.manifest(), sel);
  for (const auto& f : s.features) {
    std::vector<std::string> cats;
    if (f.vtype == ValueType::kCategorical) {
      std::size_t idx = *c.manifest().index_of(f.name);
      std::set<std::string> seen;
      for (const auto& r : c.records()) seen.insert(std::get<std::string>(r.features[idx]));
      cats.assign(seen.begin(), seen.end());
    }
    s.vocab.push_back(std::move(cats));
  }
  return s;
}

// Projects a cohort through a frozen schema. Unseen categories encode as all
// zeros.
inline FeatureMatrix project(const Cohort& c, const FeatureSchema& schema) {
  std::vector<std::size_t> src;
  for (const auto& f : schema.features) {
    auto idx = c.manifest().index_of(f.name);
    if (!idx || c.manifest().entries()[*idx] != f) {
      throw Error(ErrorCode::kSchemaMismatch, "cohort lacks feature '" + f.name + "' as trained");
    }
    src.push_back(*idx);
  }
  FeatureMatrix m(schema.column_names(), c.size());
  for (std::size_t r = 0; r < c.size(); ++r) {
    std::size_t col = 0;
    const auto& rec = c[r];
    for (std::size_t f = 0; f < schema.features.size(); ++f) {
      const auto& v = rec.features[src[f]];
      if (schema.features[f].vtype == ValueType::kCategorical) {
        const auto& vocab = schema.vocab[f];
        auto it = std::lower_bound(vocab.begin(), vocab.end(), std::get<std::string>(v));
        if (it != vocab.end() && *it == std::get<std::string>(v)) {
          m(r, col + static_cast<std::size_t>(it - vocab.begin())) = 1.0;
        }
        col += vocab.size();
      } else {
        m(r, col++) = std::get<double>(v);
      }
    }
  }
  return m;
}

inline FeatureMatrix project_features(const Cohort& c, const PartitionSelector& sel) {
  return project(c, make_schema(c, sel));
}

// ---------------------------------------------------------------------------
// Visit log (district portal usage)

struct VisitEntry {
  std::string district_id;
  int year = 0;
  int visited = 0;
  long long enrollment = 0;
};

class VisitLog {
 public:
  VisitLog() = default;
  explicit VisitLog(std::vector<VisitEntry> entries) : entries_(std::move(entries)) {
    std::set<std::pair<std::string, int>> seen;
    for (const auto& e : entries_) {
      if (e.enrollment <= 0) {
        throw Error(ErrorCode::kInvalidArgument, "enrollment must be positive for " + e.district_id);
      }
      if (e.visited != 0 && e.visited != 1) {
        throw Error(ErrorCode::kTypeMismatch, "visited must be 0/1 for " + e.district_id);
      }
      if (!seen.emplace(e.district_id, e.year).second) {
        throw Error(ErrorCode::kInvalidArgument,
                    "duplicate (district, year) " + e.district_id + "/" + std::to_string(e.year));
      }
    }
  }

  const std::vector<VisitEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

 private:
  std::vector<VisitEntry> entries_;
};

inline VisitLog load_visit_log(const std::string& path) {
  auto t = csv::read_file(path);
  int cd = t.require_column("district_id");
  int cy = t.require_column("year");
  int cv = t.require_column("visited");
  int ce = t.require_column("enrollment");
  std::vector<VisitEntry> entries;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    long long year = 0, visited = 0, enrollment = 0;
    if (!csv::parse_int(row[cy], year) || !csv::parse_int(row[cv], visited) ||
        !csv::parse_int(row[ce], enrollment)) {
      throw Error(ErrorCode::kTypeMismatch, path + ": row " + std::to_string(i + 1));
    }
    entries.push_back({row[cd], static_cast<int>(year), static_cast<int>(visited), enrollment});
  }
  return VisitLog(std::move(entries));
}

inline void write_visit_log(const VisitLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  csv::write_row(out, {"district_id", "year", "visited", "enrollment"});
  for (const auto& e : log.entries()) {
    csv::write_row(out, {e.district_id, std::to_string(e.year), std::to_string(e.visited),
                         std::to_string(e.enrollment)});
  }
}

}  // namespace ewslab
