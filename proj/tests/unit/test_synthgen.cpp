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

#include <map>
#include <sstream>

#include "test_support.hpp"

namespace ewslab {
namespace {

using testing::error_code_of;

SynthConfig small(std::size_t n = 5000, std::uint64_t seed = 1) {
  SynthConfig cfg;
  cfg.n_students = n;
  cfg.seed = seed;
  return cfg;
}

std::string csv_of(const Cohort& c) {
  std::ostringstream ss;
  write_cohort(c, ss);
  return ss.str();
}

// Between-school share of the latent variance.
double intraclass(const SynthCohort& sc) {
  std::map<std::string, std::vector<double>> by_school;
  for (std::size_t i = 0; i < sc.cohort.size(); ++i) by_school[sc.cohort[i].school_id].push_back(sc.truth.latent[i]);
  double total = population_variance(sc.truth.latent);
  double within = 0;
  for (const auto& [id, v] : by_school) within += population_variance(v) * static_cast<double>(v.size());
  within /= static_cast<double>(sc.cohort.size());
  return 1.0 - within / total;
}

TEST(Generate, DeterministicInSeed) {
  auto a = generate(small(3000, 5)), b = generate(small(3000, 5)), c = generate(small(3000, 6));
  EXPECT_EQ(csv_of(a.cohort), csv_of(b.cohort));
  EXPECT_EQ(a.truth.base_prob, b.truth.base_prob);
  EXPECT_NE(csv_of(a.cohort), csv_of(c.cohort));
}

TEST(Generate, ShapeAndManifest) {
  auto sc = generate(small(4000));
  EXPECT_EQ(sc.cohort.size(), 4000u);
  EXPECT_EQ(sc.cohort.manifest(), synth_manifest());
  EXPECT_TRUE(sc.cohort.has_all_outcomes());
  std::set<std::string> schools;
  for (const auto& r : sc.cohort.records()) schools.insert(r.school_id);
  EXPECT_EQ(schools.size(), 500u);
  for (double p : sc.truth.base_prob) ASSERT_TRUE(p >= 0.0 && p <= 1.0);
}

TEST(Generate, MeanBaseProbCalibrated) {
  for (double rate : {0.9, 0.75}) {
    auto cfg = small(50000, 3);
    cfg.base_grad_rate = rate;
    auto sc = generate(cfg);
    EXPECT_NEAR(mean(sc.truth.base_prob), rate, 0.01);
  }
}

TEST(Generate, FullSegregationNoNoiseSharesProbWithinSchool) {
  auto cfg = small(3000);
  cfg.segregation = 1.0;
  cfg.feature_noise = 0.0;
  auto sc = generate(cfg);
  std::map<std::string, double> first;
  for (std::size_t i = 0; i < sc.cohort.size(); ++i) {
    auto [it, fresh] = first.emplace(sc.cohort[i].school_id, sc.truth.base_prob[i]);
    if (!fresh) {
      ASSERT_EQ(it->second, sc.truth.base_prob[i]) << sc.cohort[i].school_id;
    }
  }
}

TEST(Generate, NoSegregationOneDistrict) {
  auto cfg = small(20000);
  cfg.segregation = 0.0;
  cfg.n_districts = 1;
  cfg.schools_per_district = 20;
  auto sc = generate(cfg);
  EXPECT_NEAR(intraclass(sc), 0.0, 0.01);
}

TEST(Generate, SegregationRaisesIntraclassCorrelation) {
  double prev = -1.0;
  for (double s : {0.0, 0.3, 0.7, 1.0}) {
    auto cfg = small(20000, 2);
    cfg.segregation = s;
    double icc = intraclass(generate(cfg));
    EXPECT_GT(icc, prev) << "segregation " << s;
    prev = icc;
  }
}

TEST(Generate, SchoolVarianceMostlyBelowStatewide) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto cfg = small(50000, seed);
    cfg.segregation = 0.7;
    auto v = variance_comparison(generate(cfg).cohort, std::string("math_z"));
    EXPECT_GE(v.fraction, 0.75) << "seed " << seed;
  }
}

TEST(Generate, InfeasibleRates) {
  for (double rate : {0.0, 1.0}) {
    auto cfg = small(1000);
    cfg.base_grad_rate = rate;
    EXPECT_EQ(error_code_of([&] { generate(cfg); }), ErrorCode::kInfeasibleConfig);
  }
}

TEST(SynthConfigTest, Validation) {
  auto cfg = small(100);
  EXPECT_EQ(error_code_of([&] { cfg.validate(); }), ErrorCode::kInvalidArgument);
  cfg = small();
  cfg.segregation = 1.5;
  EXPECT_EQ(error_code_of([&] { cfg.validate(); }), ErrorCode::kInvalidArgument);
  cfg = small();
  cfg.label_effect[2] = 1.5;
  EXPECT_EQ(error_code_of([&] { cfg.validate(); }), ErrorCode::kInvalidArgument);
}

TEST(SynthConfigTest, JsonRoundTripAndStrictKeys) {
  auto cfg = small(12345, 9);
  cfg.label_effect = {0.0, 0.01, 0.05};
  auto back = SynthConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.to_json(), cfg.to_json());
  EXPECT_EQ(error_code_of([] { SynthConfig::from_json({{"n_studnets", 10}}); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(error_code_of([] { SynthConfig::from_json({{"label_effect", {0, 0, 0.05}}}); }),
            ErrorCode::kInvalidArgument);
}

GroundTruth flat_truth(std::vector<double> p) {
  GroundTruth gt;
  for (std::size_t i = 0; i < p.size(); ++i) gt.student_ids.push_back("s" + std::to_string(i));
  gt.base_prob = std::move(p);
  return gt;
}

TEST(RealizeOutcomes, EffectIsCappedAtOne) {
  auto gt = flat_truth({0.97, 0.5});
  SynthConfig cfg;
  cfg.label_effect = {0.0, 0.0, 0.05};
  std::vector<RiskCategory> labels{RiskCategory::kHigh, RiskCategory::kHigh};
  auto p = success_probabilities(gt, labels, cfg);
  EXPECT_DOUBLE_EQ(p[0], 1.0);
  EXPECT_NEAR(p[0] - gt.base_prob[0], 0.03, 1e-12);
  EXPECT_DOUBLE_EQ(p[1], 0.55);
}

TEST(RealizeOutcomes, CertainGraduation) {
  auto gt = flat_truth(std::vector<double>(1000, 1.0));
  for (int y : realize_outcomes(gt, std::nullopt, SynthConfig{}, 4)) ASSERT_EQ(y, 1);
}

TEST(RealizeOutcomes, MeanMatchesProbabilities) {
  for (std::size_t n : {1000u, 10000u, 100000u}) {
    std::vector<double> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = 0.2 + 0.6 * static_cast<double>(i % 97) / 96.0;
    auto gt = flat_truth(p);
    auto y = realize_outcomes(gt, std::nullopt, SynthConfig{}, 11);
    double var = 0;
    for (double q : p) var += q * (1 - q);
    double sd = std::sqrt(var) / static_cast<double>(n);
    double ybar = 0;
    for (int v : y) ybar += v;
    ybar /= static_cast<double>(n);
    EXPECT_LE(std::abs(ybar - mean(p)), 3 * sd) << n;
  }
}

TEST(RealizeOutcomes, CoupledAndMonotoneInEffect) {
  auto sc = generate(small(5000, 8));
  std::vector<RiskCategory> labels(sc.cohort.size(), RiskCategory::kHigh);
  std::vector<int> prev_y;
  std::vector<double> prev_p;
  for (double effect : {-0.05, 0.0, 0.02, 0.1}) {
    SynthConfig cfg;
    cfg.label_effect = {0.0, 0.0, effect};
    auto p = success_probabilities(sc.truth, labels, cfg);
    auto y = realize_outcomes(sc.truth, labels, cfg, 21);
    for (std::size_t i = 0; i < p.size() && !prev_p.empty(); ++i) {
      ASSERT_GE(p[i], prev_p[i]);
      ASSERT_GE(y[i], prev_y[i]);
    }
    prev_p = p;
    prev_y = y;
  }
  SynthConfig none;
  EXPECT_EQ(realize_outcomes(sc.truth, std::nullopt, none, 21), realize_outcomes(sc.truth, labels, none, 21));
}

TEST(History, PriorScoresVaryGivenFeatures) {
  HistoryConfig hc;
  hc.synth = small(8000, 4);
  hc.pilot_students = 8000;
  auto a = simulate_history(hc), b = simulate_history(hc);
  EXPECT_EQ(a.prior.scores, b.prior.scores);
  ASSERT_EQ(a.prior.scores.size(), 8000u);
  for (double p : a.prior.scores) ASSERT_TRUE(p >= 0.0 && p <= 1.0);
  EXPECT_EQ(a.bands.bands.size(), 8000u);

  hc.logit_noise = 0.0;
  auto quiet = simulate_history(hc);
  double diff = 0;
  for (std::size_t i = 0; i < 8000; ++i) diff += std::abs(quiet.prior.scores[i] - a.prior.scores[i]);
  EXPECT_GT(diff / 8000, 0.01);
}

}  // namespace
}  // namespace ewslab
