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

// Quantile targeting: bottom-q% profiles of a score vector, environmental vs
// individual comparisons at a fixed budget, capped additive impact, and
// within-school homogeneity statistics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ewslab/dataset.hpp"
#include "ewslab/error.hpp"
#include "ewslab/stats.hpp"

namespace ewslab {

// Ascending by score, ties by student_id.
inline std::vector<std::size_t> rank_ascending(std::span<const double> scores,
                                               std::span<const std::string> ids) {
  check_lengths(scores.size(), ids.size(), "scores vs records");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] < scores[b];
    return ids[a] < ids[b];
  });
  return order;
}

// ceil(fraction * n) without floating-point spill (0.11 * 100 must give 11).
inline std::size_t budget_size(double fraction, std::size_t n) {
  double x = fraction * static_cast<double>(n);
  double k = std::ceil(x);
  if (k - 1.0 >= x - 1e-9 * std::max(1.0, x)) k -= 1.0;
  return static_cast<std::size_t>(std::clamp(k, 0.0, static_cast<double>(n)));
}

inline std::size_t quantile_size(std::size_t q, std::size_t n) { return (q * n + 99) / 100; }

struct ProfileFeatures {
  std::string male = "male";
  std::string attendance = "attendance_rate";
  std::string math_z = "math_z";
};

struct QuantileRow {
  std::size_t q = 0;
  std::size_t size = 0;
  double grad_rate = 0;
  double male_fraction = 0;
  double attendance_mean = 0;
  double math_z_mean = 0;
};

struct TargetingProfile {
  std::vector<QuantileRow> rows;  // q = 1..100
};

inline TargetingProfile quantile_profile(std::span<const double> scores, const Cohort& c,
                                         const ProfileFeatures& names = {}) {
  auto ids = c.student_ids();
  check_lengths(scores.size(), c.size(), "quantile_profile");
  if (c.empty()) throw Error(ErrorCode::kEmptyCohort, "quantile_profile on empty cohort");
  auto y = c.outcomes();
  auto male = c.numeric(names.male);
  auto att = c.numeric(names.attendance);
  auto math = c.numeric(names.math_z);
  auto order = rank_ascending(scores, ids);

  const std::size_t n = c.size();
  std::vector<double> cy(n + 1, 0.0), cm(n + 1, 0.0), ca(n + 1, 0.0), cz(n + 1, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t i = order[k];
    cy[k + 1] = cy[k] + y[i];
    cm[k + 1] = cm[k] + male[i];
    ca[k + 1] = ca[k] + att[i];
    cz[k + 1] = cz[k] + math[i];
  }
  TargetingProfile p;
  for (std::size_t q = 1; q <= 100; ++q) {
    std::size_t k = std::max<std::size_t>(1, quantile_size(q, n));
    double kk = static_cast<double>(k);
    p.rows.push_back({q, k, cy[k] / kk, cm[k] / kk, ca[k] / kk, cz[k] / kk});
  }
  return p;
}

struct Composition {
  double male_fraction = 0;
  double attendance_mean = 0;
  double math_z_mean = 0;
};

struct CompareReport {
  double budget_fraction = 0;
  std::size_t budget_size = 0;
  double env_bottom_rate = 0;
  double ind_bottom_rate = 0;
  double overlap_jaccard = 0;
  double env_flagged_with_high_ind_score = 0;  // share of the env set
  double unflagged_low_ind_score = 0;          // share of all students
  Composition env;
  Composition ind;
  Composition delta;  // env minus ind
  std::vector<std::size_t> env_set;
  std::vector<std::size_t> ind_set;
};

struct CompareOptions {
  double budget_fraction = 0.11;
  double safe_cutoff = 0.85;
  double need_cutoff = 0.90;
  ProfileFeatures features;
};

inline CompareReport compare(std::span<const double> env_scores, std::span<const double> ind_scores,
                             const Cohort& c, const CompareOptions& opt = {}) {
  check_lengths(env_scores.size(), c.size(), "env scores");
  check_lengths(ind_scores.size(), c.size(), "ind scores");
  if (!(opt.budget_fraction > 0.0 && opt.budget_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "budget_fraction must lie in (0,1)");
  }
  if (c.empty()) throw Error(ErrorCode::kEmptyCohort, "compare on empty cohort");
  const std::size_t n = c.size();
  auto ids = c.student_ids();
  auto y = c.outcomes();
  auto male = c.numeric(opt.features.male);
  auto att = c.numeric(opt.features.attendance);
  auto math = c.numeric(opt.features.math_z);

  CompareReport r;
  r.budget_fraction = opt.budget_fraction;
  r.budget_size = std::max<std::size_t>(1, budget_size(opt.budget_fraction, n));
  auto env_order = rank_ascending(env_scores, ids);
  auto ind_order = rank_ascending(ind_scores, ids);
  r.env_set.assign(env_order.begin(), env_order.begin() + static_cast<std::ptrdiff_t>(r.budget_size));
  r.ind_set.assign(ind_order.begin(), ind_order.begin() + static_cast<std::ptrdiff_t>(r.budget_size));

  std::vector<char> in_env(n, 0), in_ind(n, 0);
  for (auto i : r.env_set) in_env[i] = 1;
  for (auto i : r.ind_set) in_ind[i] = 1;

  auto summarize = [&](const std::vector<std::size_t>& set, double& rate, Composition& comp) {
    double sy = 0, sm = 0, sa = 0, sz = 0;
    for (auto i : set) {
      sy += y[i];
      sm += male[i];
      sa += att[i];
      sz += math[i];
    }
    double k = static_cast<double>(set.size());
    rate = sy / k;
    comp = {sm / k, sa / k, sz / k};
  };
  summarize(r.env_set, r.env_bottom_rate, r.env);
  summarize(r.ind_set, r.ind_bottom_rate, r.ind);
  r.delta = {r.env.male_fraction - r.ind.male_fraction, r.env.attendance_mean - r.ind.attendance_mean,
             r.env.math_z_mean - r.ind.math_z_mean};

  std::size_t both = 0, either = 0, safe = 0, missed = 0;
  for (std::size_t i = 0; i < n; ++i) {
    both += in_env[i] && in_ind[i];
    either += in_env[i] || in_ind[i];
    if (in_env[i] && ind_scores[i] > opt.safe_cutoff) ++safe;
    if (!in_env[i] && ind_scores[i] < opt.need_cutoff) ++missed;
  }
  r.overlap_jaccard = static_cast<double>(both) / static_cast<double>(either);
  r.env_flagged_with_high_ind_score = static_cast<double>(safe) / static_cast<double>(r.budget_size);
  r.unflagged_low_ind_score = static_cast<double>(missed) / static_cast<double>(n);
  return r;
}

struct ImpactReport {
  double tau = 0;
  double expected_extra_graduates = 0;
  double per_capita = 0;
  double efficiency = 0;  // share of targeted with base_prob <= 1 - tau
  std::size_t targeted = 0;
};

inline ImpactReport aggregate_impact(std::span<const double> base_probs,
                                     std::span<const std::size_t> targeted, double tau) {
  if (!(tau >= -1.0 && tau <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "tau must lie in [-1,1]");
  ImpactReport r;
  r.tau = tau;
  r.targeted = targeted.size();
  std::size_t efficient = 0;
  for (auto i : targeted) {
    if (i >= base_probs.size()) throw Error(ErrorCode::kInvalidArgument, "targeted index out of range");
    double p = base_probs[i];
    r.expected_extra_graduates += clamp01(p + tau) - p;
    efficient += p <= 1.0 - tau;
  }
  if (!targeted.empty()) {
    r.per_capita = r.expected_extra_graduates / static_cast<double>(targeted.size());
    r.efficiency = static_cast<double>(efficient) / static_cast<double>(targeted.size());
  }
  return r;
}

// ---------------------------------------------------------------------------
// Within-school homogeneity

struct SchoolSpread {
  std::string school_id;
  std::size_t n = 0;
  std::optional<double> sd;  // undefined for single-student schools
};

inline constexpr std::size_t kSpreadBins = 50;
inline constexpr double kSpreadBinWidth = 0.01;

struct SpreadReport {
  std::vector<SchoolSpread> schools;  // sorted by school_id
  std::vector<std::size_t> histogram;  // bins of width 0.01 on [0, 0.5]
  std::size_t singletons = 0;

  std::optional<double> median_sd() const {
    std::vector<double> v;
    for (const auto& s : schools) {
      if (s.sd) v.push_back(*s.sd);
    }
    if (v.empty()) return std::nullopt;
    return median(std::move(v));
  }
};

inline SpreadReport within_school_spread(std::span<const double> predictions,
                                         std::span<const std::string> school_ids) {
  check_lengths(predictions.size(), school_ids.size(), "within_school_spread");
  std::map<std::string, std::vector<double>> by_school;
  for (std::size_t i = 0; i < predictions.size(); ++i) by_school[school_ids[i]].push_back(predictions[i]);
  SpreadReport r;
  r.histogram.assign(kSpreadBins, 0);
  for (const auto& [id, v] : by_school) {
    SchoolSpread s{id, v.size(), std::nullopt};
    if (v.size() >= 2) {
      s.sd = std::sqrt(population_variance(v));
      auto b = static_cast<std::size_t>(*s.sd / kSpreadBinWidth);
      ++r.histogram[std::min(b, kSpreadBins - 1)];
    } else {
      ++r.singletons;
    }
    r.schools.push_back(std::move(s));
  }
  return r;
}

struct FullVector {};

using VarianceTarget = std::variant<std::string, FullVector>;

struct VarianceComparison {
  std::size_t schools = 0;  // schools with >= 2 students
  std::size_t below = 0;
  double fraction = 0;
  double statewide = 0;
};

// Share of schools whose within-school variance is below the statewide one.
// FullVector uses E||x - E x||^2 over the individual non-categorical features,
// each standardized to unit statewide variance.
inline VarianceComparison variance_comparison(const Cohort& c, const VarianceTarget& target) {
  std::vector<std::vector<double>> cols;
  if (const auto* name = std::get_if<std::string>(&target)) {
    cols.push_back(c.numeric(*name));
  } else {
    for (const auto& f : c.manifest().entries()) {
      if (f.kind != FeatureKind::kIndividual || f.vtype == ValueType::kCategorical) continue;
      auto v = c.numeric(f.name);
      double m = mean(v), sd = std::sqrt(population_variance(v));
      if (!(sd > 0)) continue;
      for (double& x : v) x = (x - m) / sd;
      cols.push_back(std::move(v));
    }
    if (cols.empty()) throw Error(ErrorCode::kNotNumeric, "no non-constant numeric individual features");
  }
  std::map<std::string, std::vector<std::size_t>> by_school;
  for (std::size_t i = 0; i < c.size(); ++i) by_school[c[i].school_id].push_back(i);
  if (by_school.size() < 2) throw Error(ErrorCode::kInvalidArgument, "need at least two schools");

  VarianceComparison r;
  for (const auto& col : cols) r.statewide += population_variance(col);
  for (const auto& [id, rows] : by_school) {
    if (rows.size() < 2) continue;
    double within = 0;
    for (const auto& col : cols) {
      std::vector<double> v;
      v.reserve(rows.size());
      for (auto i : rows) v.push_back(col[i]);
      within += population_variance(v);
    }
    ++r.schools;
    r.below += within < r.statewide;
  }
  if (r.schools == 0) throw Error(ErrorCode::kInvalidArgument, "no school has two students");
  r.fraction = static_cast<double>(r.below) / static_cast<double>(r.schools);
  return r;
}

}  // namespace ewslab
