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

#include "test_support.hpp"

namespace ewslab {
namespace {

using testing::error_code_of;

const ProfileFeatures kNames{"x0", "x1", "x2"};
CompareOptions opts(double budget = 0.11) {
  CompareOptions o;
  o.budget_fraction = budget;
  o.features = kNames;
  return o;
}

// Columns male, attendance, math_z with random outcomes.
Cohort profile_cohort(std::size_t n, std::uint64_t seed) {
  Stream s(seed, 0);
  std::vector<std::vector<double>> rows;
  std::vector<int> y;
  for (std::size_t i = 0; i < n; ++i) {
    rows.push_back({s.uniform() < 0.5 ? 1.0 : 0.0, 0.8 + 0.2 * s.uniform(), std::normal_distribution<double>()(s)});
    y.push_back(s.uniform() < 0.8 ? 1 : 0);
  }
  return testing::numeric_cohort(rows, y);
}

std::vector<double> random_scores(std::size_t n, std::uint64_t seed) {
  Stream s(seed, 1);
  std::vector<double> v(n);
  for (auto& x : v) x = s.uniform();
  return v;
}

TEST(Ranking, SizesAndTies) {
  EXPECT_EQ(budget_size(0.11, 100), 11u);
  EXPECT_EQ(budget_size(0.11, 101), 12u);
  EXPECT_EQ(budget_size(0.5, 3), 2u);
  EXPECT_EQ(quantile_size(1, 250), 3u);
  EXPECT_EQ(quantile_size(100, 250), 250u);
  std::vector<std::string> ids{"b", "a", "c"};
  std::vector<double> s{0.5, 0.5, 0.1};
  EXPECT_EQ(rank_ascending(s, ids), (std::vector<std::size_t>{2, 1, 0}));
}

TEST(QuantileProfile, FullQuantileMatchesPopulation) {
  auto c = profile_cohort(997, 1);
  auto p = quantile_profile(random_scores(c.size(), 2), c, kNames);
  ASSERT_EQ(p.rows.size(), 100u);
  const auto& last = p.rows.back();
  EXPECT_EQ(last.size, c.size());
  auto y = c.outcomes();
  EXPECT_NEAR(last.grad_rate, mean(std::vector<double>(y.begin(), y.end())), 1e-12);
  EXPECT_NEAR(last.male_fraction, mean(c.numeric("x0")), 1e-12);
  EXPECT_NEAR(last.attendance_mean, mean(c.numeric("x1")), 1e-12);
  EXPECT_NEAR(last.math_z_mean, mean(c.numeric("x2")), 1e-12);
  for (std::size_t q = 1; q <= 100; ++q) EXPECT_EQ(p.rows[q - 1].size, quantile_size(q, c.size()));
}

TEST(QuantileProfile, ConstantScoresFollowIdOrder) {
  auto c = profile_cohort(400, 3);
  auto p = quantile_profile(std::vector<double>(c.size(), 0.3), c, kNames);
  // ids s0, s1, s10, s100, ... ordered as strings
  auto ids = c.student_ids();
  auto order = rank_ascending(std::vector<double>(c.size(), 0.3), ids);
  auto y = c.outcomes();
  double first = 0;
  for (std::size_t k = 0; k < 4; ++k) first += y[order[k]];
  EXPECT_DOUBLE_EQ(p.rows[0].grad_rate, first / 4);
}

TEST(QuantileProfile, ScoresEqualOutcomes) {
  auto c = profile_cohort(1000, 4);
  auto y = c.outcomes();
  std::vector<double> s(y.begin(), y.end());
  double dropout = 1.0 - mean(s);
  auto p = quantile_profile(s, c, kNames);
  for (const auto& row : p.rows) {
    if (static_cast<double>(row.size) <= dropout * 1000) EXPECT_EQ(row.grad_rate, 0.0) << row.q;
    else EXPECT_GT(row.grad_rate, 0.0) << row.q;
  }
}

TEST(QuantileProfile, Errors) {
  auto c = profile_cohort(10, 5);
  EXPECT_EQ(error_code_of([&] { quantile_profile(std::vector<double>(9, 0.1), c, kNames); }),
            ErrorCode::kLengthMismatch);
}

TEST(TargetingProperties, NestedBottomSets) {
  auto c = profile_cohort(777, 6);
  auto s = random_scores(c.size(), 7);
  auto order = rank_ascending(s, c.student_ids());
  for (std::size_t q = 1; q < 100; ++q) {
    std::set<std::size_t> a(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(quantile_size(q, c.size())));
    std::set<std::size_t> b(order.begin(),
                            order.begin() + static_cast<std::ptrdiff_t>(quantile_size(q + 1, c.size())));
    EXPECT_TRUE(std::includes(b.begin(), b.end(), a.begin(), a.end()));
  }
}

TEST(TargetingProperties, RankInvariance) {
  auto c = profile_cohort(1500, 8);
  auto env = random_scores(c.size(), 9), ind = random_scores(c.size(), 10);
  // ties survive a strictly increasing map
  for (std::size_t i = 0; i < env.size(); i += 5) env[i] = 0.25;
  auto cube = [](std::vector<double> v) {
    for (auto& x : v) x = std::exp(3 * x) + x * x * x;
    return v;
  };
  auto a = compare(env, ind, c, opts());
  auto b = compare(cube(env), cube(ind), c, opts());
  EXPECT_EQ(a.env_set, b.env_set);
  EXPECT_EQ(a.ind_set, b.ind_set);
  EXPECT_EQ(a.env_bottom_rate, b.env_bottom_rate);
  EXPECT_EQ(a.overlap_jaccard, b.overlap_jaccard);
  EXPECT_EQ(a.delta.math_z_mean, b.delta.math_z_mean);
  auto pa = quantile_profile(env, c, kNames), pb = quantile_profile(cube(env), c, kNames);
  for (std::size_t q = 0; q < 100; ++q) {
    EXPECT_EQ(pa.rows[q].grad_rate, pb.rows[q].grad_rate);
    EXPECT_EQ(pa.rows[q].math_z_mean, pb.rows[q].math_z_mean);
  }
}

TEST(Compare, IdenticalScores) {
  auto c = profile_cohort(1000, 11);
  auto s = random_scores(c.size(), 12);
  auto r = compare(s, s, c, opts());
  EXPECT_EQ(r.budget_size, 110u);
  EXPECT_EQ(r.overlap_jaccard, 1.0);
  EXPECT_EQ(r.env_bottom_rate, r.ind_bottom_rate);
  EXPECT_EQ(r.delta.male_fraction, 0.0);
}

TEST(Compare, BadSchoolAbsorbsBudget) {
  auto c = profile_cohort(700, 13);
  auto schools = c.school_ids();
  std::vector<double> env(c.size()), ind = random_scores(c.size(), 14);
  for (std::size_t i = 0; i < c.size(); ++i) env[i] = schools[i] == "sch3" ? 0.1 : 0.5 + 0.01 * (i % 7);
  auto r = compare(env, ind, c, opts());
  for (auto i : r.env_set) EXPECT_EQ(schools[i], "sch3");
}

TEST(Compare, CutoffCounts) {
  auto c = profile_cohort(100, 15);
  std::vector<double> env(100), ind(100);
  for (std::size_t i = 0; i < 100; ++i) {
    env[i] = static_cast<double>(i) / 100;
    ind[i] = i < 5 ? 0.95 : 0.5;  // 5 of the 11 flagged look safe to the individual model
  }
  auto r = compare(env, ind, c, opts());
  EXPECT_EQ(r.budget_size, 11u);
  EXPECT_DOUBLE_EQ(r.env_flagged_with_high_ind_score, 5.0 / 11);
  EXPECT_DOUBLE_EQ(r.unflagged_low_ind_score, 89.0 / 100);
}

TEST(Compare, Errors) {
  auto c = profile_cohort(50, 16);
  auto s = random_scores(50, 17);
  EXPECT_EQ(error_code_of([&] { compare(s, random_scores(49, 1), c, opts()); }), ErrorCode::kLengthMismatch);
  EXPECT_EQ(error_code_of([&] { compare(s, s, c, opts(1.0)); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(error_code_of([&] { compare(s, s, c, opts(0.0)); }), ErrorCode::kInvalidArgument);
}

TEST(AggregateImpact, Examples) {
  std::vector<double> p(100, 0.61);
  std::vector<std::size_t> all(100);
  std::iota(all.begin(), all.end(), 0);
  auto r = aggregate_impact(p, all, 0.05);
  EXPECT_NEAR(r.expected_extra_graduates, 5.0, 1e-12);
  EXPECT_NEAR(r.per_capita, 0.05, 1e-12);
  EXPECT_EQ(r.efficiency, 1.0);

  std::vector<double> hi{0.97};
  std::vector<std::size_t> one{0};
  auto capped = aggregate_impact(hi, one, 0.05);
  EXPECT_NEAR(capped.expected_extra_graduates, 0.03, 1e-12);
  EXPECT_EQ(capped.efficiency, 0.0);

  EXPECT_NEAR(aggregate_impact(std::vector<double>{0.01}, one, -0.02).expected_extra_graduates, -0.01, 1e-12);
  EXPECT_EQ(error_code_of([&] { aggregate_impact(hi, one, 1.5); }), ErrorCode::kInvalidArgument);
}

TEST(AggregateImpact, MonotoneAndAdditive) {
  auto p = random_scores(500, 18);
  std::vector<std::size_t> a, b, ab;
  for (std::size_t i = 0; i < 500; ++i) {
    (i % 3 == 0 ? a : b).push_back(i);
    ab.push_back(i);
  }
  double prev = -1;
  for (double tau = 0; tau <= 1.0; tau += 0.01) {
    double v = aggregate_impact(p, ab, tau).expected_extra_graduates;
    EXPECT_GE(v, prev);
    prev = v;
    double split = aggregate_impact(p, a, tau).expected_extra_graduates + aggregate_impact(p, b, tau).expected_extra_graduates;
    EXPECT_NEAR(v, split, 1e-9);
  }
}

TEST(Spread, Examples) {
  std::vector<double> pred{0.2, 0.2, 0.2, 0.0, 1.0, 0.7};
  std::vector<std::string> school{"a", "a", "a", "b", "b", "c"};
  auto r = within_school_spread(pred, school);
  ASSERT_EQ(r.schools.size(), 3u);
  EXPECT_EQ(*r.schools[0].sd, 0.0);
  EXPECT_DOUBLE_EQ(*r.schools[1].sd, 0.5);
  EXPECT_FALSE(r.schools[2].sd.has_value());
  EXPECT_EQ(r.singletons, 1u);
  EXPECT_EQ(r.histogram.size(), 50u);
  EXPECT_EQ(r.histogram[0], 1u);
  EXPECT_EQ(r.histogram[49], 1u);
  EXPECT_DOUBLE_EQ(*r.median_sd(), 0.25);
}

TEST(Spread, EnvironmentalModelIsHomogeneous) {
  SynthConfig sc;
  sc.n_students = 20000;
  sc.n_districts = 20;
  sc.schools_per_district = 10;
  sc.segregation = 0.7;
  sc.seed = 21;
  auto c = generate(sc).cohort;
  auto [tr, te] = split_cohort(c, 0.8, 3);
  ModelSpec env;
  env.partition = PartitionSelector::environmental_only();
  auto pred = train(env, tr).predict(te);
  auto r = within_school_spread(pred, te.school_ids());
  EXPECT_LE(*r.median_sd(), 0.10);
}

TEST(VarianceComparison, NullAndDegenerate) {
  // i.i.d. schools: about half fall below
  std::vector<std::vector<double>> rows;
  Stream s(22, 0);
  for (int i = 0; i < 7 * 3000; ++i) rows.push_back({std::normal_distribution<double>()(s)});
  std::vector<int> y(rows.size(), 1);
  auto c = testing::numeric_cohort(rows, y);
  auto v = variance_comparison(c, std::string("x0"));
  EXPECT_EQ(v.schools, 7u);
  EXPECT_NEAR(v.statewide, 1.0, 0.05);

  std::size_t below = 0, total = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    SynthConfig sc;
    sc.n_students = 20000;
    sc.n_districts = 20;
    sc.segregation = 0.0;
    sc.school_noise_dispersion = 0.0;
    sc.seed = seed;
    auto r = variance_comparison(generate(sc).cohort, std::string("attendance_rate"));
    below += r.below;
    total += r.schools;
  }
  EXPECT_NEAR(static_cast<double>(below) / static_cast<double>(total), 0.5, 0.1);

  SynthConfig seg;
  seg.n_students = 5000;
  seg.n_districts = 5;
  seg.segregation = 1.0;
  seg.feature_noise = 0.0;
  seg.school_noise_dispersion = 0.0;
  seg.seed = 4;
  auto cohort = generate(seg).cohort;
  EXPECT_EQ(variance_comparison(cohort, FullVector{}).fraction, 1.0);
}

TEST(VarianceComparison, Errors) {
  auto c = profile_cohort(100, 23);
  EXPECT_EQ(error_code_of([&] { variance_comparison(c, std::string("nope")); }), ErrorCode::kUnknownFeature);
  std::vector<std::vector<double>> rows(10, std::vector<double>{1.0});
  auto flat = testing::numeric_cohort(rows, std::vector<int>(10, 1));
  EXPECT_EQ(error_code_of([&] { variance_comparison(flat, FullVector{}); }), ErrorCode::kNotNumeric);
}

}  // namespace
}  // namespace ewslab
