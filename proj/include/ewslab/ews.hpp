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

// Risk banding: adjusted scores (p - e, p + e) clipped to [0,1], compared
// against the department threshold t*.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ewslab/error.hpp"
#include "ewslab/stats.hpp"

namespace ewslab {

enum class RiskCategory { kLow = 0, kModerate = 1, kHigh = 2 };

inline constexpr std::array<RiskCategory, 3> kAllCategories = {
    RiskCategory::kLow, RiskCategory::kModerate, RiskCategory::kHigh};

inline std::string_view to_string(RiskCategory c) {
  switch (c) {
    case RiskCategory::kLow: return "low";
    case RiskCategory::kModerate: return "moderate";
    case RiskCategory::kHigh: return "high";
  }
  return "?";
}

inline RiskCategory parse_category(std::string_view s) {
  if (s == "low") return RiskCategory::kLow;
  if (s == "moderate") return RiskCategory::kModerate;
  if (s == "high") return RiskCategory::kHigh;
  throw Error(ErrorCode::kTypeMismatch, "unknown risk category '" + std::string(s) + "'");
}

struct EwsConfig {
  double t_star = 0.785;
  double default_error = 0.03;

  void validate() const {
    if (!(t_star > 0.0 && t_star < 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "t_star must lie in (0,1)");
    }
    if (!(default_error >= 0.0 && default_error <= 0.5)) {
      throw Error(ErrorCode::kInvalidArgument, "default_error must lie in [0,0.5]");
    }
  }
};

struct ScoreBand {
  double p = 0;
  double e = 0;
  double lower = 0;
  double upper = 0;
  RiskCategory category = RiskCategory::kModerate;
};

// High iff upper < t*, Low iff lower > t*, Moderate otherwise (ties included).
inline RiskCategory categorize(double lower, double upper, double t_star) {
  if (upper < t_star) return RiskCategory::kHigh;
  if (lower > t_star) return RiskCategory::kLow;
  return RiskCategory::kModerate;
}

inline ScoreBand band(double p, double e, const EwsConfig& cfg) {
  ScoreBand b;
  b.p = p;
  b.e = e;
  b.lower = clamp01(p - e);
  b.upper = clamp01(p + e);
  b.category = categorize(b.lower, b.upper, cfg.t_star);
  return b;
}

struct BandedCohort {
  std::vector<ScoreBand> bands;
  std::array<std::size_t, 3> counts{};  // indexed by RiskCategory

  std::size_t count(RiskCategory c) const { return counts[static_cast<std::size_t>(c)]; }

  double fraction(RiskCategory c) const {
    return bands.empty() ? 0.0
                         : static_cast<double>(count(c)) / static_cast<double>(bands.size());
  }

  std::vector<RiskCategory> categories() const {
    std::vector<RiskCategory> out;
    out.reserve(bands.size());
    for (const auto& b : bands) out.push_back(b.category);
    return out;
  }
};

inline BandedCohort band_cohort(std::span<const double> scores, std::span<const double> errors,
                                const EwsConfig& cfg) {
  if (errors.size() != 1) check_lengths(scores.size(), errors.size(), "band_cohort");
  BandedCohort out;
  out.bands.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    double e = errors.size() == 1 ? errors[0] : errors[i];
    out.bands.push_back(band(scores[i], e, cfg));
    ++out.counts[static_cast<std::size_t>(out.bands.back().category)];
  }
  return out;
}

// Scalar-error overload (cfg.default_error for every student).
inline BandedCohort band_cohort(std::span<const double> scores, const EwsConfig& cfg) {
  const double e[] = {cfg.default_error};
  return band_cohort(scores, e, cfg);
}

struct CategoryRate {
  std::size_t n = 0;
  std::size_t graduated = 0;
  std::optional<double> rate;  // undefined for an empty category
};

struct CategoryOutcomes {
  std::array<CategoryRate, 3> by_category;

  const CategoryRate& operator[](RiskCategory c) const {
    return by_category[static_cast<std::size_t>(c)];
  }
};

inline CategoryOutcomes category_outcomes(std::span<const ScoreBand> bands,
                                          std::span<const int> outcomes) {
  check_lengths(bands.size(), outcomes.size(), "category_outcomes");
  CategoryOutcomes out;
  for (std::size_t i = 0; i < bands.size(); ++i) {
    auto& slot = out.by_category[static_cast<std::size_t>(bands[i].category)];
    ++slot.n;
    slot.graduated += outcomes[i] == 1 ? 1 : 0;
  }
  for (auto& slot : out.by_category) {
    if (slot.n > 0) slot.rate = static_cast<double>(slot.graduated) / static_cast<double>(slot.n);
  }
  return out;
}

}  // namespace ewslab
