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

// File formats shared by the CLI and the pipeline: score, band and outcome
// CSVs keyed by student_id, plus JSON renderings of every report type.

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "ewslab/csv.hpp"
#include "ewslab/error.hpp"
#include "ewslab/ews.hpp"
#include "ewslab/indeptest.hpp"
#include "ewslab/learner.hpp"
#include "ewslab/metrics.hpp"
#include "ewslab/rdd.hpp"
#include "ewslab/targeting.hpp"

namespace ewslab::io {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Keyed CSV files

struct KeyedValues {
  std::vector<std::string> ids;
  std::vector<double> values;
};

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  return out;
}

inline void write_scores(const std::string& path, std::span<const std::string> ids,
                         std::span<const double> scores) {
  check_lengths(ids.size(), scores.size(), "score ids");
  auto out = open_out(path);
  csv::write_row(out, {"student_id", "score"});
  for (std::size_t i = 0; i < ids.size(); ++i) csv::write_row(out, {ids[i], csv::format_double(scores[i])});
}

inline double parse_number(const std::string& cell, const std::string& where) {
  double v = 0;
  if (!csv::parse_double(cell, v) || !std::isfinite(v)) {
    throw Error(ErrorCode::kTypeMismatch, where + ": '" + cell + "' is not a finite number");
  }
  return v;
}

// Reads student_id plus one numeric column (first of `columns` present).
inline KeyedValues read_keyed(const std::string& path, std::initializer_list<std::string_view> columns) {
  auto t = csv::read_file(path);
  int id = t.require_column("student_id");
  int col = -1;
  for (auto c : columns) {
    if ((col = t.column(c)) >= 0) break;
  }
  if (col < 0) throw Error(ErrorCode::kMissingColumn, path + ": no '" + std::string(*columns.begin()) + "' column");
  KeyedValues kv;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    kv.ids.push_back(t.rows[r][id]);
    kv.values.push_back(parse_number(t.rows[r][col], path + " row " + std::to_string(r + 1)));
  }
  return kv;
}

inline KeyedValues read_scores(const std::string& path) { return read_keyed(path, {"score", "p"}); }

struct Outcomes {
  std::vector<std::string> ids;
  std::vector<int> y;
};

inline Outcomes read_outcomes(const std::string& path) {
  auto t = csv::read_file(path);
  int id = t.require_column("student_id");
  int col = t.require_column("outcome");
  Outcomes o;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& cell = t.rows[r][col];
    if (cell != "0" && cell != "1") {
      throw Error(ErrorCode::kTypeMismatch, path + " row " + std::to_string(r + 1) + ": outcome '" + cell + "'");
    }
    o.ids.push_back(t.rows[r][id]);
    o.y.push_back(cell == "1" ? 1 : 0);
  }
  return o;
}

inline void write_outcomes(const std::string& path, std::span<const std::string> ids, std::span<const int> y) {
  auto out = open_out(path);
  csv::write_row(out, {"student_id", "outcome"});
  for (std::size_t i = 0; i < ids.size(); ++i) csv::write_row(out, {ids[i], std::to_string(y[i])});
}

// Reorders `values` keyed by `from` into the order of `to`; every id must match.
// Reorders `values` (keyed by `from`) to the order of `to`. With allow_extra,
// `to` may name a subset of `from`.
template <typename T>
std::vector<T> align(std::span<const std::string> from, std::span<const T> values,
                     std::span<const std::string> to, const std::string& what, bool allow_extra = false) {
  check_lengths(from.size(), values.size(), what.c_str());
  std::unordered_map<std::string_view, std::size_t> pos;
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (!pos.emplace(from[i], i).second) {
      throw Error(ErrorCode::kInvalidArgument, what + ": duplicate student_id " + from[i]);
    }
  }
  if (allow_extra ? from.size() < to.size() : from.size() != to.size()) {
    throw Error(ErrorCode::kLengthMismatch, what + ": " + std::to_string(from.size()) + " rows for " +
                                                std::to_string(to.size()) + " students");
  }
  std::vector<T> out;
  out.reserve(to.size());
  for (const auto& id : to) {
    auto it = pos.find(id);
    if (it == pos.end()) throw Error(ErrorCode::kLengthMismatch, what + ": no row for student " + id);
    out.push_back(values[it->second]);
  }
  return out;
}

struct BandsFile {
  std::vector<std::string> ids;
  std::vector<ScoreBand> bands;

  PriorOutputs prior() const {
    PriorOutputs p;
    for (const auto& b : bands) {
      p.scores.push_back(b.p);
      p.categories.push_back(b.category);
    }
    return p;
  }
};

inline void write_bands(const std::string& path, std::span<const std::string> ids,
                        std::span<const ScoreBand> bands) {
  check_lengths(ids.size(), bands.size(), "band ids");
  auto out = open_out(path);
  csv::write_row(out, {"student_id", "p", "e", "lower", "upper", "category"});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& b = bands[i];
    csv::write_row(out, {ids[i], csv::format_double(b.p), csv::format_double(b.e), csv::format_double(b.lower),
                         csv::format_double(b.upper), std::string(to_string(b.category))});
  }
}

inline BandsFile read_bands(const std::string& path) {
  auto t = csv::read_file(path);
  int id = t.require_column("student_id");
  int cp = t.require_column("p"), ce = t.require_column("e"), cl = t.require_column("lower");
  int cu = t.require_column("upper"), cc = t.require_column("category");
  BandsFile f;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    auto where = path + " row " + std::to_string(r + 1);
    ScoreBand b{parse_number(row[cp], where), parse_number(row[ce], where), parse_number(row[cl], where),
                parse_number(row[cu], where), parse_category(row[cc])};
    f.ids.push_back(row[id]);
    f.bands.push_back(b);
  }
  return f;
}

inline void write_calibration_csv(const std::string& path, const CalibrationCurve& c) {
  auto out = open_out(path);
  csv::write_row(out, {"lo", "hi", "mean_pred", "empirical_rate", "n"});
  for (const auto& b : c.bins) {
    csv::write_row(out, {csv::format_double(b.lo), csv::format_double(b.hi), csv::format_double(b.mean_pred),
                         csv::format_double(b.empirical_rate), std::to_string(b.n)});
  }
}

inline void write_roc_csv(const std::string& path, const RocCurve& c) {
  auto out = open_out(path);
  csv::write_row(out, {"fpr", "tpr"});
  for (const auto& p : c.points) csv::write_row(out, {csv::format_double(p.fpr), csv::format_double(p.tpr)});
}

// Plot data for the quantile panels; test z is negated so lower reads as
// "standard deviations below the mean".
inline void write_quantiles_csv(const std::string& path, const TargetingProfile& env, const TargetingProfile& ind) {
  auto out = open_out(path);
  csv::write_row(out, {"predictor", "q", "size", "grad_rate", "male_fraction", "attendance_mean",
                       "math_z_below_mean"});
  for (const auto& [name, prof] : {std::pair{"environmental", &env}, std::pair{"individual", &ind}}) {
    for (const auto& r : prof->rows) {
      csv::write_row(out, {name, std::to_string(r.q), std::to_string(r.size), csv::format_double(r.grad_rate),
                           csv::format_double(r.male_fraction), csv::format_double(r.attendance_mean),
                           csv::format_double(-r.math_z_mean)});
    }
  }
}

// ---------------------------------------------------------------------------
// JSON renderings. Non-finite values become null with a sibling
// "<key>_undefined" reason.

inline void put(json& j, const std::string& key, double v, std::string_view reason = "not finite") {
  if (std::isfinite(v)) {
    j[key] = v;
  } else {
    j[key] = nullptr;
    j[key + "_undefined"] = std::string(reason);
  }
}

inline void put(json& j, const std::string& key, const std::optional<double>& v, std::string_view reason) {
  if (v) put(j, key, *v, reason);
  else put(j, key, std::numeric_limits<double>::quiet_NaN(), reason);
}

inline json interval(const Interval& i) { return json::array({i.lo, i.hi}); }

inline json to_json(const MetricEstimate& m, std::string_view reason = "needs both outcome classes") {
  json j = json::object();
  put(j, "value", m.value, reason);
  if (std::isfinite(m.ci.lo) && std::isfinite(m.ci.hi)) j["ci95"] = interval(m.ci);
  else put(j, "ci95", std::numeric_limits<double>::quiet_NaN(), reason);
  return j;
}

inline json to_json(const LossReport& r) {
  return {{"squared", to_json(r.squared)},
          {"log", to_json(r.log)},
          {"zero_one", to_json(r.zero_one)},
          {"auc", to_json(r.auc)}};
}

inline json to_json(const MetricValues& m) {
  json j = json::object();
  put(j, "squared", m.squared, "base loss is zero");
  put(j, "log", m.log, "base loss is zero");
  put(j, "zero_one", m.zero_one, "base loss is zero");
  put(j, "auc", m.auc, "needs both outcome classes");
  return j;
}

inline json to_json(const PartitionComparison& c) {
  return {{"base", to_json(c.base)},
          {"augmented", to_json(c.augmented)},
          {"absolute_delta", to_json(c.absolute_delta)},
          {"relative_delta", to_json(c.relative_delta)}};
}

inline json to_json(const RddEstimate& e) {
  json j = {{"tau_hat", e.tau},
            {"alpha", e.alpha},
            {"beta", e.beta},
            {"gamma", e.gamma},
            {"se", e.se},
            {"ci_normal_95", interval(e.ci_normal_95)},
            {"p_value", e.p_value},
            {"n_in_bandwidth", e.n},
            {"n_treated", e.n_treated},
            {"h", e.h}};
  if (e.ci_boot_95) {
    j["ci_boot_95"] = interval(*e.ci_boot_95);
    j["ci_boot_75"] = interval(*e.ci_boot_75);
  } else {
    j["ci_boot_95"] = nullptr;
    j["ci_boot_75"] = nullptr;
    j["ci_boot_undefined"] = "bootstrap disabled";
  }
  return j;
}

inline json to_json(const SweepEntry& s) {
  json j = {{"h", s.h}};
  if (s.estimate) {
    j["estimate"] = to_json(*s.estimate);
  } else {
    j["estimate"] = nullptr;
    j["error"] = {{"code", std::string(to_string(*s.error))}, {"message", s.message}};
  }
  return j;
}

inline json to_json(const DiagnosticsReport& d) {
  json balance = json::array();
  for (const auto& b : d.balance) {
    balance.push_back({{"feature", b.feature}, {"mean_left", b.mean_left}, {"mean_right", b.mean_right},
                       {"smd", b.smd}});
  }
  return {{"density",
           {{"left_n", d.density.left_n},
            {"right_n", d.density.right_n},
            {"bin_counts", d.density.bin_counts},
            {"chi2_stat", d.density.chi2_stat},
            {"chi2_dof", d.density.chi2_dof},
            {"chi2_pvalue", d.density.chi2_pvalue}}},
          {"balance", balance}};
}

inline json to_json(const CategoryOutcomes& c) {
  json j = json::object();
  for (auto cat : kAllCategories) {
    const auto& r = c[cat];
    json e = {{"n", r.n}, {"graduated", r.graduated}};
    put(e, "rate", r.rate, "empty category");
    j[std::string(to_string(cat))] = e;
  }
  return j;
}

inline json to_json(const BandedCohort& b) {
  json j = json::object();
  for (auto cat : kAllCategories) {
    j[std::string(to_string(cat))] = {{"n", b.count(cat)}, {"fraction", b.fraction(cat)}};
  }
  return j;
}

inline json to_json(const CalibrationCurve& c) {
  json bins = json::array();
  for (const auto& b : c.bins) {
    bins.push_back({{"lo", b.lo}, {"hi", b.hi}, {"mean_pred", b.mean_pred}, {"empirical_rate", b.empirical_rate},
                    {"n", b.n}});
  }
  return bins;
}

inline json to_json(const Composition& c) {
  return {{"male_fraction", c.male_fraction}, {"attendance_mean", c.attendance_mean}, {"math_z_mean", c.math_z_mean}};
}

inline json to_json(const CompareReport& r) {
  return {{"budget_fraction", r.budget_fraction},
          {"budget_size", r.budget_size},
          {"env_bottom_rate", r.env_bottom_rate},
          {"ind_bottom_rate", r.ind_bottom_rate},
          {"overlap_jaccard", r.overlap_jaccard},
          {"env_flagged_with_high_ind_score", r.env_flagged_with_high_ind_score},
          {"unflagged_low_ind_score", r.unflagged_low_ind_score},
          {"composition", {{"environmental", to_json(r.env)}, {"individual", to_json(r.ind)}, {"delta", to_json(r.delta)}}}};
}

inline json to_json(const ImpactReport& r) {
  return {{"tau", r.tau},
          {"targeted", r.targeted},
          {"expected_extra_graduates", r.expected_extra_graduates},
          {"per_capita", r.per_capita},
          {"efficiency", r.efficiency}};
}

inline json to_json(const SpreadReport& s) {
  json j = {{"schools", s.schools.size()}, {"singletons", s.singletons}, {"histogram", s.histogram},
            {"bin_width", kSpreadBinWidth}};
  put(j, "median_sd", s.median_sd(), "no school has two students");
  return j;
}

inline json to_json(const VarianceComparison& v) {
  return {{"schools", v.schools}, {"below", v.below}, {"fraction", v.fraction}, {"statewide_variance", v.statewide}};
}

inline json to_json(const IndepReport& r) {
  return {{"performative", to_json(r.performative)},
          {"non_performative", to_json(r.non_performative)},
          {"delta", to_json(r.delta)},
          {"delta_convention", "non-performative loss minus performative loss; AUC performative minus non-performative"},
          {"verdict", std::string(to_string(r.verdict))},
          {"base_columns", r.base_columns},
          {"performative_columns", r.performative_columns},
          {"caveat", r.caveat},
          {"multiplicity", "per-metric 95% intervals, no multiplicity correction"}};
}

inline json to_json(const std::vector<UsageYear>& years) {
  json j = json::array();
  for (const auto& y : years) {
    j.push_back({{"year", y.year}, {"districts", y.districts}, {"raw_fraction", y.raw_fraction},
                 {"weighted_fraction", y.weighted_fraction}});
  }
  return j;
}

inline void write_json(const std::string& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path);
}

inline json read_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, path + ": " + e.what());
  }
}

}  // namespace ewslab::io
