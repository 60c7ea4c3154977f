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

// Synthetic hierarchical cohorts with known graduation probabilities.
//
// District quality q_d ~ N(0,1); student latent
//   a_i = sqrt(segregation) q_d + sqrt(1 - segregation) eps_i.
// Individual features are noisy monotone transforms of a_i (binary
// demographics through logistic links), environmental features are school
// aggregates of them plus district covariates driven by q_d, and
//   base_prob_i = logistic(c0 + latent_slope * a_i)
// with c0 bisected so the cohort mean equals base_grad_rate.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "json.hpp"

#include "ewslab/dataset.hpp"
#include "ewslab/error.hpp"
#include "ewslab/ews.hpp"
#include "ewslab/random.hpp"
#include "ewslab/stats.hpp"

namespace ewslab {

struct SynthConfig {
  std::size_t n_students = 50000;
  std::size_t n_districts = 50;
  std::size_t schools_per_district = 10;
  double segregation = 0.93;
  double base_grad_rate = 0.9;
  std::array<double, 3> label_effect{};  // indexed by RiskCategory
  double feature_noise = 1.2;
  std::uint64_t seed = 1;

  // Generator shape; defaults reproduce the documented summary statistics.
  double latent_slope = 1.5;
  double school_noise_dispersion = 0.6;  // lognormal sd of per-school test noise
  double test_score_curvature = 0.2;     // cubic term of the test-score transform
  int cohort_year = 2013;

  double effect(RiskCategory c) const { return label_effect[static_cast<std::size_t>(c)]; }

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::kInvalidArgument, m); };
    if (n_districts == 0 || schools_per_district == 0) fail("need at least one school");
    if (n_students < n_districts * schools_per_district) {
      fail("n_students must be >= n_districts * schools_per_district");
    }
    if (!(segregation >= 0.0 && segregation <= 1.0)) fail("segregation must lie in [0,1]");
    if (!(base_grad_rate >= 0.0 && base_grad_rate <= 1.0)) fail("base_grad_rate must lie in [0,1]");
    for (double e : label_effect) {
      if (!(e >= -1.0 && e <= 1.0)) fail("label_effect shifts must lie in [-1,1]");
    }
    if (!(feature_noise >= 0.0)) fail("feature_noise must be >= 0");
    if (!(school_noise_dispersion >= 0.0)) fail("school_noise_dispersion must be >= 0");
    if (!(test_score_curvature >= 0.0)) fail("test_score_curvature must be >= 0");
    if (!std::isfinite(latent_slope)) fail("latent_slope must be finite");
  }

  nlohmann::json to_json() const {
    return {{"n_students", n_students},
            {"n_districts", n_districts},
            {"schools_per_district", schools_per_district},
            {"segregation", segregation},
            {"base_grad_rate", base_grad_rate},
            {"label_effect",
             {{"low", label_effect[0]}, {"moderate", label_effect[1]}, {"high", label_effect[2]}}},
            {"feature_noise", feature_noise},
            {"seed", seed},
            {"latent_slope", latent_slope},
            {"school_noise_dispersion", school_noise_dispersion},
            {"test_score_curvature", test_score_curvature},
            {"cohort_year", cohort_year}};
  }

  static SynthConfig from_json(const nlohmann::json& j) {
    SynthConfig c;
    static constexpr std::string_view kKeys[] = {
        "n_students",    "n_districts", "schools_per_district", "segregation",
        "base_grad_rate", "label_effect", "feature_noise",       "seed",
        "latent_slope",  "school_noise_dispersion", "test_score_curvature", "cohort_year"};
    if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "synth config must be an object");
    for (const auto& [k, v] : j.items()) {
      if (std::find(std::begin(kKeys), std::end(kKeys), k) == std::end(kKeys)) {
        throw Error(ErrorCode::kInvalidArgument, "synth config: unknown key '" + k + "'");
      }
    }
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("n_students", c.n_students);
    get("n_districts", c.n_districts);
    get("schools_per_district", c.schools_per_district);
    get("segregation", c.segregation);
    get("base_grad_rate", c.base_grad_rate);
    get("feature_noise", c.feature_noise);
    get("seed", c.seed);
    get("latent_slope", c.latent_slope);
    get("school_noise_dispersion", c.school_noise_dispersion);
    get("test_score_curvature", c.test_score_curvature);
    get("cohort_year", c.cohort_year);
    if (j.contains("label_effect")) {
      const auto& e = j.at("label_effect");
      if (!e.is_object()) {
        throw Error(ErrorCode::kInvalidArgument, "label_effect must map low/moderate/high to shifts");
      }
      for (const auto& [k, v] : e.items()) {
        if (k != "low" && k != "moderate" && k != "high") {
          throw Error(ErrorCode::kInvalidArgument, "label_effect: unknown category '" + k + "'");
        }
      }
      for (auto cat : kAllCategories) {
        auto key = std::string(to_string(cat));
        if (e.contains(key)) c.label_effect[static_cast<std::size_t>(cat)] = e.at(key).get<double>();
      }
    }
    c.validate();
    return c;
  }
};

struct GroundTruth {
  std::vector<std::string> student_ids;
  std::vector<double> base_prob;         // graduation probability absent any label
  std::vector<double> district_quality;  // q_d of the student's district
  std::vector<double> latent;            // a_i
  double intercept = 0;                  // calibrated c0
};

struct SynthCohort {
  Cohort cohort;
  GroundTruth truth;
};

namespace synth_detail {

inline std::string id(const char* prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, i);
  return buf;
}

inline double normal(Stream& s) { return std::normal_distribution<double>(0.0, 1.0)(s); }

inline bool bernoulli(Stream& s, double p) { return s.uniform() < p; }

// c0 such that mean(logistic(c0 + slope * a)) == rate.
inline double calibrate_intercept(std::span<const double> latent, double slope, double rate) {
  auto excess = [&](double c) {
    double s = 0.0;
    for (double a : latent) s += logistic(c + slope * a);
    return s / static_cast<double>(latent.size()) - rate;
  };
  double lo = -60.0, hi = 60.0;
  if (!(excess(lo) < 0.0 && excess(hi) > 0.0)) {
    throw Error(ErrorCode::kInfeasibleConfig,
                "cannot bracket intercept for base_grad_rate " + std::to_string(rate));
  }
  while (hi - lo > 1e-10) {
    double mid = 0.5 * (lo + hi);
    (excess(mid) < 0.0 ? lo : hi) = mid;
  }
  double c = 0.5 * (lo + hi);
  if (std::fabs(excess(c)) > 1e-6) {
    throw Error(ErrorCode::kInfeasibleConfig, "intercept bisection did not reach 1e-6");
  }
  return c;
}

}  // namespace synth_detail

inline FeatureManifest synth_manifest() {
  using K = FeatureKind;
  using V = ValueType;
  return FeatureManifest({
      {"attendance_rate", K::kIndividual, V::kNumeric},
      {"math_z", K::kIndividual, V::kNumeric},
      {"reading_z", K::kIndividual, V::kNumeric},
      {"male", K::kIndividual, V::kBinary},
      {"nonwhite", K::kIndividual, V::kBinary},
      {"frl", K::kIndividual, V::kBinary},
      {"disability", K::kIndividual, V::kBinary},
      {"discipline_count", K::kIndividual, V::kNumeric},
      {"school_math_mean", K::kEnvironmental, V::kNumeric},
      {"school_math_sd", K::kEnvironmental, V::kNumeric},
      {"school_attendance_mean", K::kEnvironmental, V::kNumeric},
      {"school_frl_rate", K::kEnvironmental, V::kNumeric},
      {"school_nonwhite_rate", K::kEnvironmental, V::kNumeric},
      {"cohort_size", K::kEnvironmental, V::kNumeric},
      {"district_income", K::kEnvironmental, V::kNumeric},
      {"district_expenditure", K::kEnvironmental, V::kNumeric},
      {"district_locale", K::kEnvironmental, V::kCategorical},
  });
}

// Success probability clip(base + effect[label], 0, 1); no effect without labels.
inline std::vector<double> success_probabilities(const GroundTruth& gt,
                                                 std::optional<std::span<const RiskCategory>> labels,
                                                 const SynthConfig& cfg) {
  const std::size_t n = gt.base_prob.size();
  if (labels) check_lengths(labels->size(), n, "labels");
  std::vector<double> p(n);
  for (std::size_t i = 0; i < n; ++i) {
    double shift = labels ? cfg.effect((*labels)[i]) : 0.0;
    p[i] = clamp01(gt.base_prob[i] + shift);
  }
  return p;
}

// One uniform per student, keyed by (seed, student_id), so outcomes with and
// without labels are a coupled comparison.
inline std::vector<int> realize_outcomes(const GroundTruth& gt,
                                         std::optional<std::span<const RiskCategory>> labels,
                                         const SynthConfig& cfg, std::uint64_t seed) {
  auto p = success_probabilities(gt, labels, cfg);
  const std::uint64_t stream_seed = derive_seed(seed, "outcome");
  std::vector<int> y(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    Stream s(stream_seed, fnv1a(gt.student_ids[i]));
    y[i] = s.uniform() < p[i] ? 1 : 0;
  }
  return y;
}

inline SynthCohort generate(const SynthConfig& cfg) {
  using namespace synth_detail;
  cfg.validate();
  const std::size_t n = cfg.n_students;
  const std::size_t n_districts = cfg.n_districts;
  const std::size_t n_schools = n_districts * cfg.schools_per_district;

  struct District {
    double quality, income, expenditure;
    std::string locale;
  };
  // District quality takes stratified normal quantiles in a seeded order.
  std::vector<std::size_t> rank(n_districts);
  std::iota(rank.begin(), rank.end(), 0);
  Stream order(derive_seed(cfg.seed, "district-order"));
  for (std::size_t d = n_districts; d > 1; --d) std::swap(rank[d - 1], rank[order.below(d)]);
  const boost::math::normal_distribution<double> std_normal;
  std::vector<District> districts(n_districts);
  for (std::size_t d = 0; d < n_districts; ++d) {
    Stream s(derive_seed(cfg.seed, "district"), d);
    double q = boost::math::quantile(
        std_normal, (static_cast<double>(rank[d]) + 0.5) / static_cast<double>(n_districts));
    double income = 60000.0 + 15000.0 * (q + 0.3 * normal(s));
    double expenditure = 12000.0 + 1500.0 * (0.5 * q + 0.5 * normal(s));
    double loc = q + normal(s);
    const char* locale = loc < -0.7 ? "city" : loc < 0.0 ? "town" : loc < 0.7 ? "rural" : "suburb";
    districts[d] = {q, income, expenditure, locale};
  }

  std::vector<double> cumulative(n_schools), noise_scale(n_schools);
  double total = 0.0;
  for (std::size_t k = 0; k < n_schools; ++k) {
    Stream s(derive_seed(cfg.seed, "school"), k);
    total += std::exp(0.5 * normal(s));
    cumulative[k] = total;
    noise_scale[k] = std::exp(cfg.school_noise_dispersion * normal(s));
  }

  GroundTruth gt;
  gt.student_ids.resize(n);
  gt.latent.resize(n);
  gt.district_quality.resize(n);
  std::vector<std::size_t> school(n);
  std::vector<double> eps(n), attendance(n), math(n), reading(n), discipline(n);
  std::vector<double> male(n), nonwhite(n), frl(n), disability(n);

  const double w_between = std::sqrt(cfg.segregation);
  const double w_within = std::sqrt(1.0 - cfg.segregation);
  const double kappa = cfg.test_score_curvature;
  for (std::size_t i = 0; i < n; ++i) {
    Stream s(derive_seed(cfg.seed, "student"), i);
    gt.student_ids[i] = id("S", i, 7);
    if (i < n_schools) {
      school[i] = i;  // every school gets at least one student
    } else {
      double u = s.uniform() * total;
      school[i] = static_cast<std::size_t>(
          std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
      school[i] = std::min(school[i], n_schools - 1);
    }
    const auto& dist = districts[school[i] / cfg.schools_per_district];
    eps[i] = normal(s);
    double a = w_between * dist.quality + w_within * eps[i];
    gt.latent[i] = a;
    gt.district_quality[i] = dist.quality;

    const double sigma = cfg.feature_noise;
    attendance[i] = logistic(2.5 + 0.8 * a + 0.5 * sigma * normal(s));
    math[i] = a + kappa * a * a * a + sigma * noise_scale[school[i]] * normal(s);
    reading[i] = a + kappa * a * a * a + sigma * noise_scale[school[i]] * normal(s);
    male[i] = bernoulli(s, logistic(-0.5 * eps[i]));
    nonwhite[i] = bernoulli(s, logistic(-1.5 - 1.5 * dist.quality));
    frl[i] = bernoulli(s, logistic(-0.8 - 1.2 * a));
    disability[i] = bernoulli(s, logistic(-2.0 - 0.5 * a));
    discipline[i] = static_cast<double>(
        std::poisson_distribution<int>(std::exp(-0.5 - 0.8 * a))(s));
  }

  gt.intercept = calibrate_intercept(gt.latent, cfg.latent_slope, cfg.base_grad_rate);
  gt.base_prob.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    gt.base_prob[i] = logistic(gt.intercept + cfg.latent_slope * gt.latent[i]);
  }

  // Test scores are reported as statewide z-scores.
  for (auto* v : {&math, &reading}) {
    double m = mean(*v);
    double sd = std::sqrt(population_variance(*v));
    for (double& x : *v) x = sd > 0 ? (x - m) / sd : 0.0;
  }

  struct Agg {
    double n = 0, math = 0, math2 = 0, att = 0, frl = 0, nonwhite = 0;
  };
  std::vector<Agg> agg(n_schools);
  for (std::size_t i = 0; i < n; ++i) {
    auto& g = agg[school[i]];
    g.n += 1;
    g.math += math[i];
    g.math2 += math[i] * math[i];
    g.att += attendance[i];
    g.frl += frl[i];
    g.nonwhite += nonwhite[i];
  }

  auto manifest = synth_manifest();
  std::vector<StudentRecord> records(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = school[i];
    const std::size_t d = k / cfg.schools_per_district;
    const auto& g = agg[k];
    const auto& dist = districts[d];
    double math_mean = g.math / g.n;
    double math_sd = std::sqrt(std::max(0.0, g.math2 / g.n - math_mean * math_mean));
    auto& r = records[i];
    r.student_id = gt.student_ids[i];
    r.cohort_year = cfg.cohort_year;
    r.district_id = id("D", d, 3);
    r.school_id = r.district_id + "-K" + id("", k % cfg.schools_per_district, 2);
    r.features = {attendance[i],
                  math[i],
                  reading[i],
                  male[i],
                  nonwhite[i],
                  frl[i],
                  disability[i],
                  discipline[i],
                  math_mean,
                  math_sd,
                  g.att / g.n,
                  g.frl / g.n,
                  g.nonwhite / g.n,
                  g.n,
                  dist.income,
                  dist.expenditure,
                  dist.locale};
  }

  auto y = realize_outcomes(gt, std::nullopt, cfg, cfg.seed);
  for (std::size_t i = 0; i < n; ++i) records[i].outcome = y[i];
  return {Cohort(std::move(manifest), std::move(records)), std::move(gt)};
}

inline void write_truth(const GroundTruth& gt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  csv::write_row(out, {"student_id", "base_prob", "district_quality", "latent"});
  for (std::size_t i = 0; i < gt.student_ids.size(); ++i) {
    csv::write_row(out, {gt.student_ids[i], csv::format_double(gt.base_prob[i]),
                         csv::format_double(gt.district_quality[i]),
                         csv::format_double(gt.latent[i])});
  }
}

}  // namespace ewslab
