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

#include <set>

#include "test_support.hpp"

namespace ewslab {
namespace {

using testing::data_path;
using testing::error_code_of;

Cohort load_fixture(const std::string& name, LoadOptions opts = {}) {
  return load_cohort(data_path("manifest.json"), data_path(name), opts);
}

TEST(LoadCohort, ThreeRowFileParses) {
  auto c = load_fixture("three_rows.csv");
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c[0].student_id, "s1");
  EXPECT_EQ(c[2].school_id, "B");
  EXPECT_EQ(*c[1].outcome, 0);
  EXPECT_FALSE(c[2].outcome.has_value());
  EXPECT_DOUBLE_EQ(c.numeric("attendance_rate")[1], 0.62);
  EXPECT_DOUBLE_EQ(c.numeric("school_size")[2], 340.0);
}

TEST(LoadCohort, UnknownColumnRejected) {
  EXPECT_EQ(error_code_of([] { load_fixture("unknown_column.csv"); }), ErrorCode::kUnknownFeature);
}

TEST(LoadCohort, NonBinaryOutcomeRejected) {
  EXPECT_EQ(error_code_of([] { load_fixture("bad_outcome.csv"); }), ErrorCode::kTypeMismatch);
}

TEST(LoadCohort, NonNumericFeatureRejected) {
  EXPECT_EQ(error_code_of([] { load_fixture("bad_numeric.csv"); }), ErrorCode::kTypeMismatch);
}

TEST(LoadCohort, MissingIdColumn) {
  EXPECT_EQ(error_code_of([] { load_fixture("missing_district.csv"); }), ErrorCode::kMissingColumn);
  LoadOptions lax;
  lax.require_ids = false;
  EXPECT_EQ(load_fixture("missing_district.csv", lax).size(), 1u);
}

TEST(LoadCohort, OutcomeColumnDemanded) {
  testing::TempDir dir;
  testing::spit(dir.file("c.csv"),
                "student_id,cohort_year,school_id,district_id,attendance_rate,school_size\ns1,2013,A,D1,0.9,10\n");
  LoadOptions opts;
  opts.require_outcome = true;
  EXPECT_EQ(error_code_of([&] { load_cohort(data_path("manifest.json"), dir.file("c.csv"), opts); }),
            ErrorCode::kMissingColumn);
}

TEST(LoadCohort, MissingNumericCell) {
  testing::TempDir dir;
  testing::spit(dir.file("c.csv"),
                "student_id,cohort_year,school_id,district_id,outcome,attendance_rate,school_size\n"
                "s1,2013,A,D1,1,,10\n");
  EXPECT_EQ(error_code_of([&] { load_cohort(data_path("manifest.json"), dir.file("c.csv")); }),
            ErrorCode::kMissingValue);
}

TEST(LoadCohort, SchoolInTwoDistricts) {
  testing::TempDir dir;
  testing::spit(dir.file("c.csv"),
                "student_id,cohort_year,school_id,district_id,outcome,attendance_rate,school_size\n"
                "s1,2013,A,D1,1,0.9,10\ns2,2013,A,D2,1,0.8,10\n");
  EXPECT_EQ(error_code_of([&] { load_cohort(data_path("manifest.json"), dir.file("c.csv")); }),
            ErrorCode::kInvalidArgument);
}

TEST(Manifest, DuplicateNamesRejected) {
  EXPECT_EQ(error_code_of([] {
              FeatureManifest({{"a", FeatureKind::kIndividual, ValueType::kNumeric},
                               {"a", FeatureKind::kEnvironmental, ValueType::kNumeric}});
            }),
            ErrorCode::kDuplicateFeature);
}

TEST(Manifest, JsonRoundTrip) {
  auto m = synth_manifest();
  EXPECT_EQ(FeatureManifest::from_json(m.to_json()), m);
  EXPECT_GE(m.count(FeatureKind::kEnvironmental), 1u);
  EXPECT_GE(m.count(FeatureKind::kIndividual), 1u);
}

TEST(CohortRoundTrip, WriteReproducesFileBytes) {
  testing::TempDir dir;
  SynthConfig cfg;
  cfg.n_students = 500;
  cfg.n_districts = 5;
  cfg.schools_per_district = 4;
  auto sc = generate(cfg);
  sc.cohort.manifest().save(dir.file("m.json"));
  write_cohort(sc.cohort, dir.file("a.csv"));
  auto back = load_cohort(dir.file("m.json"), dir.file("a.csv"));
  write_cohort(back, dir.file("b.csv"));
  EXPECT_EQ(testing::slurp(dir.file("a.csv")), testing::slurp(dir.file("b.csv")));
  ASSERT_EQ(back.size(), sc.cohort.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    ASSERT_EQ(back[i].features, sc.cohort[i].features) << i;
  }
}

Cohort ids_only(std::size_t n) {
  std::vector<std::vector<double>> rows(n, std::vector<double>{0.0});
  for (std::size_t i = 0; i < n; ++i) rows[i][0] = static_cast<double>(i);
  return testing::numeric_cohort(rows, {});
}

TEST(SplitCohort, TenRowsGiveEightTwo) {
  auto [tr, te] = split_cohort(ids_only(10), 0.8, 3);
  EXPECT_EQ(tr.size(), 8u);
  EXPECT_EQ(te.size(), 2u);
}

TEST(SplitCohort, FullScaleSizes) {
  auto [tr, te] = split_cohort(ids_only(200000), 0.8, 1);
  EXPECT_EQ(tr.size(), 160000u);
  EXPECT_EQ(te.size(), 40000u);
}

TEST(SplitCohort, DeterministicAndPartition) {
  auto c = ids_only(1000);
  auto [a1, b1] = split_cohort(c, 0.7, 42);
  auto [a2, b2] = split_cohort(c, 0.7, 42);
  EXPECT_EQ(a1.student_ids(), a2.student_ids());
  EXPECT_EQ(b1.student_ids(), b2.student_ids());

  std::multiset<std::string> seen;
  for (const auto& id : a1.student_ids()) seen.insert(id);
  for (const auto& id : b1.student_ids()) seen.insert(id);
  ASSERT_EQ(seen.size(), c.size());
  for (const auto& id : c.student_ids()) EXPECT_EQ(seen.count(id), 1u);

  auto [a3, b3] = split_cohort(c, 0.7, 43);
  EXPECT_NE(a1.student_ids(), a3.student_ids());
}

TEST(SplitCohort, StableUnderRowReordering) {
  auto c = ids_only(300);
  std::vector<std::size_t> rev(c.size());
  for (std::size_t i = 0; i < rev.size(); ++i) rev[i] = rev.size() - 1 - i;
  auto shuffled = c.subset(rev);
  auto ids = split_cohort(c, 0.5, 9).first.student_ids();
  auto ids_rev = split_cohort(shuffled, 0.5, 9).first.student_ids();
  std::set<std::string> a(ids.begin(), ids.end()), b(ids_rev.begin(), ids_rev.end());
  EXPECT_EQ(a, b);
}

TEST(SplitCohort, Errors) {
  EXPECT_EQ(error_code_of([] { split_cohort(Cohort{}, 0.8, 1); }), ErrorCode::kEmptyCohort);
  EXPECT_EQ(error_code_of([] { split_cohort(ids_only(5), 1.0, 1); }), ErrorCode::kInvalidArgument);
}

Cohort five_feature_cohort() {
  using K = FeatureKind;
  using V = ValueType;
  FeatureManifest m({{"attendance_rate", K::kIndividual, V::kNumeric},
                     {"school_mean", K::kEnvironmental, V::kNumeric},
                     {"male", K::kIndividual, V::kBinary},
                     {"cohort_size", K::kEnvironmental, V::kNumeric},
                     {"income", K::kEnvironmental, V::kNumeric}});
  std::vector<StudentRecord> recs;
  for (int i = 0; i < 4; ++i) {
    StudentRecord r{"s" + std::to_string(i), 2013, "A", "D", 1, {}};
    r.features = {0.9 - 0.1 * i, 1.0 * i, static_cast<double>(i % 2), 50.0, 3.0};
    recs.push_back(r);
  }
  return Cohort(m, recs);
}

TEST(ProjectFeatures, PartitionColumnCounts) {
  auto c = five_feature_cohort();
  auto env = project_features(c, PartitionSelector::environmental_only());
  EXPECT_EQ(env.cols, 3u);
  EXPECT_EQ(env.columns, (std::vector<std::string>{"school_mean", "cohort_size", "income"}));
  auto all = project_features(c, PartitionSelector::all());
  EXPECT_EQ(all.cols, 5u);
  EXPECT_EQ(all.cols, c.manifest().count(FeatureKind::kEnvironmental) + c.manifest().count(FeatureKind::kIndividual));
  auto plus = project_features(c, PartitionSelector::environmental_plus({"attendance_rate"}));
  EXPECT_EQ(plus.cols, 4u);
  EXPECT_EQ(plus.columns.front(), "attendance_rate");  // manifest order
  EXPECT_DOUBLE_EQ(plus(2, 0), 0.7);
}

TEST(ProjectFeatures, UnknownName) {
  EXPECT_EQ(error_code_of([] {
              project_features(five_feature_cohort(), PartitionSelector::environmental_plus({"nope"}));
            }),
            ErrorCode::kUnknownFeature);
}

TEST(ProjectFeatures, CategoricalOneOfK) {
  FeatureManifest m({{"locale", FeatureKind::kEnvironmental, ValueType::kCategorical},
                     {"x", FeatureKind::kIndividual, ValueType::kNumeric}});
  auto rec = [](std::string id, std::string loc) {
    return StudentRecord{id, 2013, "A" + loc, "D" + loc, 1, {loc, 1.0}};
  };
  Cohort train(m, {rec("a", "urban"), rec("b", "rural"), rec("c", "town")});
  auto schema = make_schema(train, PartitionSelector::all());
  EXPECT_EQ(schema.column_names(),
            (std::vector<std::string>{"locale=rural", "locale=town", "locale=urban", "x"}));
  auto mat = project(train, schema);
  EXPECT_EQ(mat.row(0)[2], 1.0);
  EXPECT_EQ(mat.row(1)[0], 1.0);

  Cohort other(m, {rec("z", "suburb")});
  auto unseen = project(other, schema);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(unseen(0, k), 0.0);
}

TEST(VisitLog, Validation) {
  auto log = load_visit_log(data_path("visits.csv"));
  EXPECT_EQ(log.entries().size(), 2u);
  EXPECT_EQ(error_code_of([] { VisitLog({{"D1", 2015, 1, 0}}); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(error_code_of([] { VisitLog({{"D1", 2015, 1, 5}, {"D1", 2015, 0, 5}}); }),
            ErrorCode::kInvalidArgument);
}

}  // namespace
}  // namespace ewslab
