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

// Calibration curves, ROC/AUC, subgroup calibration and portal-usage
// statistics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ewslab/dataset.hpp"
#include "ewslab/error.hpp"

namespace ewslab {

struct CalibrationBin {
  double lo = 0;
  double hi = 0;
  double mean_pred = 0;
  double empirical_rate = 0;
  std::size_t n = 0;
};

struct CalibrationCurve {
  std::vector<CalibrationBin> bins;
};

inline void check_scored(std::span<const double> scores, std::span<const int> outcomes) {
  check_lengths(scores.size(), outcomes.size(), "scores vs outcomes");
  if (scores.empty()) throw Error(ErrorCode::kEmptyInput, "no scores");
}

inline constexpr std::size_t kDefaultCalibrationBins = 20;

// Equal-width bins on [0,1]; empty bins are omitted.
inline CalibrationCurve calibration(std::span<const double> scores, std::span<const int> outcomes,
                                    std::size_t n_bins = kDefaultCalibrationBins) {
  check_scored(scores, outcomes);
  if (n_bins < 2) throw Error(ErrorCode::kInvalidArgument, "n_bins must be >= 2");
  std::vector<double> sum_pred(n_bins, 0.0), sum_y(n_bins, 0.0);
  std::vector<std::size_t> count(n_bins, 0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    double s = scores[i];
    if (!(s >= 0.0 && s <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "score outside [0,1]");
    auto b = std::min(static_cast<std::size_t>(s * static_cast<double>(n_bins)), n_bins - 1);
    sum_pred[b] += s;
    sum_y[b] += outcomes[i];
    ++count[b];
  }
  CalibrationCurve curve;
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (count[b] == 0) continue;
    double nb = static_cast<double>(count[b]);
    curve.bins.push_back({static_cast<double>(b) / static_cast<double>(n_bins),
                          static_cast<double>(b + 1) / static_cast<double>(n_bins),
                          sum_pred[b] / nb, sum_y[b] / nb, count[b]});
  }
  return curve;
}

struct RocPoint {
  double fpr = 0;
  double tpr = 0;
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0;
};

// Positive class = outcome 1, ranked by descending score. Equal scores form a
// single step, which gives tied pairs half credit in the trapezoidal area.
inline RocCurve roc(std::span<const double> scores, std::span<const int> outcomes) {
  check_scored(scores, outcomes);
  std::size_t pos = 0;
  for (int y : outcomes) pos += y == 1;
  const std::size_t neg = outcomes.size() - pos;
  if (pos == 0 || neg == 0) throw Error(ErrorCode::kOneClassOnly, "ROC needs both classes");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  double area = 0.0;
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    std::size_t tp_before = tp, fp_before = fp;
    for (; k < order.size() && scores[order[k]] == s; ++k) {
      (outcomes[order[k]] == 1 ? tp : fp) += 1;
    }
    area += static_cast<double>(fp - fp_before) * static_cast<double>(tp + tp_before) / 2.0;
    curve.points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                            static_cast<double>(tp) / static_cast<double>(pos)});
  }
  curve.auc = area / (static_cast<double>(pos) * static_cast<double>(neg));
  return curve;
}

// Mann-Whitney form of AUC from average ranks: the probability that a random
// positive outranks a random negative, ties counting one half.
inline double auc_concordance(std::span<const double> scores, std::span<const int> outcomes) {
  check_scored(scores, outcomes);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  std::size_t pos = 0;
  for (std::size_t k = 0; k < order.size();) {
    std::size_t j = k;
    while (j < order.size() && scores[order[j]] == scores[order[k]]) ++j;
    double avg_rank = (static_cast<double>(k + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t m = k; m < j; ++m) {
      if (outcomes[order[m]] == 1) {
        rank_sum_pos += avg_rank;
        ++pos;
      }
    }
    k = j;
  }
  const std::size_t neg = outcomes.size() - pos;
  if (pos == 0 || neg == 0) throw Error(ErrorCode::kOneClassOnly, "AUC needs both classes");
  double np = static_cast<double>(pos);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * static_cast<double>(neg));
}

enum class Dominance { kInBelow, kOutBelow, kMixed };

inline std::string_view to_string(Dominance d) {
  switch (d) {
    case Dominance::kInBelow: return "in_below";
    case Dominance::kOutBelow: return "out_below";
    case Dominance::kMixed: return "mixed";
  }
  return "?";
}

struct SubgroupCalibration {
  CalibrationCurve curve_in;
  CalibrationCurve curve_out;
  Dominance dominance = Dominance::kMixed;
};

// group[i] == 1 marks the in-group. Dominance is judged over bins populated in
// both curves; identical curves count as Mixed.
inline SubgroupCalibration subgroup_calibration(std::span<const double> scores,
                                                std::span<const int> outcomes,
                                                std::span<const int> group,
                                                std::size_t n_bins = kDefaultCalibrationBins) {
  check_scored(scores, outcomes);
  check_lengths(scores.size(), group.size(), "scores vs group");
  std::vector<double> s_in, s_out;
  std::vector<int> y_in, y_out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (group[i] == 1) {
      s_in.push_back(scores[i]);
      y_in.push_back(outcomes[i]);
    } else {
      s_out.push_back(scores[i]);
      y_out.push_back(outcomes[i]);
    }
  }
  if (s_in.empty() || s_out.empty()) throw Error(ErrorCode::kEmptyGroup, "both groups must be nonempty");
  SubgroupCalibration out;
  out.curve_in = calibration(s_in, y_in, n_bins);
  out.curve_out = calibration(s_out, y_out, n_bins);

  bool in_le = true, out_le = true, any_strict = false;
  std::size_t shared = 0;
  for (const auto& bi : out.curve_in.bins) {
    for (const auto& bo : out.curve_out.bins) {
      if (bi.lo != bo.lo) continue;
      ++shared;
      if (bi.empirical_rate > bo.empirical_rate) in_le = false;
      if (bo.empirical_rate > bi.empirical_rate) out_le = false;
      if (bi.empirical_rate != bo.empirical_rate) any_strict = true;
    }
  }
  if (shared > 0 && any_strict) {
    if (in_le) out.dominance = Dominance::kInBelow;
    else if (out_le) out.dominance = Dominance::kOutBelow;
  }
  return out;
}

struct UsageYear {
  int year = 0;
  std::size_t districts = 0;
  double raw_fraction = 0;
  double weighted_fraction = 0;
};

// Per-year share of districts that used the portal, raw and weighted by
// enrollment: (sum_i d_ij n_i) / sum_i n_i with n_i the district's
// first-observed enrollment.
inline std::vector<UsageYear> usage_weighted_visits(const VisitLog& log) {
  if (log.empty()) throw Error(ErrorCode::kEmptyInput, "empty visit log");
  std::map<std::string, std::pair<int, long long>> first_enrollment;
  for (const auto& e : log.entries()) {
    auto [it, fresh] = first_enrollment.emplace(e.district_id, std::make_pair(e.year, e.enrollment));
    if (!fresh && e.year < it->second.first) it->second = {e.year, e.enrollment};
  }
  struct Acc {
    std::size_t n = 0, visited = 0;
    double weight = 0, weighted_visits = 0;
  };
  std::map<int, Acc> by_year;
  for (const auto& e : log.entries()) {
    auto& a = by_year[e.year];
    double w = static_cast<double>(first_enrollment.at(e.district_id).second);
    ++a.n;
    a.visited += static_cast<std::size_t>(e.visited);
    a.weight += w;
    a.weighted_visits += w * e.visited;
  }
  std::vector<UsageYear> out;
  for (const auto& [year, a] : by_year) {
    out.push_back({year, a.n, static_cast<double>(a.visited) / static_cast<double>(a.n),
                   a.weighted_visits / a.weight});
  }
  return out;
}

// Fraction of observed years in which each district visited the portal.
inline std::map<std::string, double> district_visit_fraction(const VisitLog& log) {
  std::map<std::string, std::pair<int, int>> acc;
  for (const auto& e : log.entries()) {
    auto& a = acc[e.district_id];
    a.first += e.visited;
    a.second += 1;
  }
  std::map<std::string, double> out;
  for (const auto& [d, a] : acc) out[d] = static_cast<double>(a.first) / a.second;
  return out;
}

}  // namespace ewslab
