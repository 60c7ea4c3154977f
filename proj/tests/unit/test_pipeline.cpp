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

using pipeline::json;
using testing::error_code_of;
using testing::slurp;
using testing::spit;
using testing::TempDir;

json small_config() {
  return json::parse(R"({
    "seed": 3,
    "synth": {"config": {"n_students": 8000, "n_districts": 10, "schools_per_district": 6,
                         "label_effect": {"high": 0.05}},
              "pilot_students": 8000},
    "train": {"boot_reps": 1000},
    "rdd": {"h": 0.03, "boot_reps": 1000, "bandwidths": [0.0001, 0.03]},
    "indep": {"boot_reps": 1000},
    "usage": {"years": 2}
  })");
}

std::string write_config(const TempDir& dir, const json& j) {
  auto p = dir.file("config.json");
  spit(p, j.dump(2));
  return p;
}

std::map<std::string, std::string> digests(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == "run.json") continue;
    out[std::filesystem::relative(e.path(), root).string()] = sha256_file(e.path().string());
  }
  return out;
}

TEST(Digest, KnownVectors) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  TempDir d;
  spit(d.file("x"), "abc");
  EXPECT_EQ(sha256_file(d.file("x")), sha256_hex("abc"));
  EXPECT_EQ(error_code_of([&] { sha256_file(d.file("missing")); }), ErrorCode::kIo);
}

TEST(Io, ScoresAndBandsRoundTrip) {
  TempDir d;
  std::vector<std::string> ids{"a", "b", "c"};
  std::vector<double> s{0.1, 0.123456789012345, 1.0};
  io::write_scores(d.file("s.csv"), ids, s);
  auto back = io::read_scores(d.file("s.csv"));
  EXPECT_EQ(back.ids, ids);
  EXPECT_EQ(back.values, s);

  auto bands = band_cohort(s, EwsConfig{});
  io::write_bands(d.file("b.csv"), ids, bands.bands);
  auto bf = io::read_bands(d.file("b.csv"));
  ASSERT_EQ(bf.bands.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(bf.bands[i].upper, bands.bands[i].upper);
    EXPECT_EQ(bf.bands[i].category, bands.bands[i].category);
  }
  EXPECT_EQ(bf.prior().scores, s);
}

TEST(Io, Align) {
  std::vector<std::string> from{"a", "b", "c"}, to{"c", "a", "b"}, sub{"b"};
  std::vector<int> v{1, 2, 3};
  EXPECT_EQ(io::align<int>(from, v, to, "v"), (std::vector<int>{3, 1, 2}));
  EXPECT_EQ(io::align<int>(from, v, sub, "v", true), (std::vector<int>{2}));
  EXPECT_EQ(error_code_of([&] { io::align<int>(from, v, sub, "v"); }), ErrorCode::kLengthMismatch);
  std::vector<std::string> other{"a", "b", "z"};
  EXPECT_EQ(error_code_of([&] { io::align<int>(from, v, other, "v"); }), ErrorCode::kLengthMismatch);
  std::vector<std::string> dup{"a", "a", "b"};
  EXPECT_EQ(error_code_of([&] { io::align<int>(dup, v, to, "v"); }), ErrorCode::kInvalidArgument);
}

TEST(Io, OutcomesRejectNonBinary) {
  TempDir d;
  spit(d.file("o.csv"), "student_id,outcome\ns1,1\ns2,yes\n");
  EXPECT_EQ(error_code_of([&] { io::read_outcomes(d.file("o.csv")); }), ErrorCode::kTypeMismatch);
}

TEST(PipelineConfig, RejectsBeforeWriting) {
  TempDir d;
  auto bad = small_config();
  bad["rdd"]["bandwith"] = 0.01;
  auto out = d.path() / "out";
  auto r = pipeline::run_pipeline(write_config(d, bad), out.string());
  EXPECT_EQ(r.exit_code, pipeline::kExitValidation);
  EXPECT_FALSE(std::filesystem::exists(out));

  auto no_train = small_config();
  no_train["train"]["enabled"] = false;
  EXPECT_EQ(pipeline::run_pipeline(write_config(d, no_train), out.string()).exit_code, pipeline::kExitValidation);

  auto few = small_config();
  few["indep"]["boot_reps"] = 100;
  EXPECT_EQ(pipeline::run_pipeline(write_config(d, few), out.string()).exit_code, pipeline::kExitValidation);

  spit(d.file("broken.json"), "{");
  EXPECT_EQ(pipeline::run_pipeline(d.file("broken.json"), out.string()).exit_code, pipeline::kExitValidation);
  EXPECT_FALSE(std::filesystem::exists(out));
}

TEST(Pipeline, RunsAllStagesDeterministically) {
  TempDir d;
  auto cfg = write_config(d, small_config());
  pipeline::RunResult a, b;
  {
    testing::ThreadsEnv env(1);
    a = pipeline::run_pipeline(cfg, (d.path() / "t1").string());
  }
  {
    testing::ThreadsEnv env(4);
    b = pipeline::run_pipeline(cfg, (d.path() / "t4").string());
  }
  ASSERT_EQ(a.exit_code, 0) << (a.errors.empty() ? "" : a.errors[0].message);
  EXPECT_EQ(a.completed,
            (std::vector<std::string>{"synth", "train", "label", "eval", "rdd", "target", "indep", "usage"}));
  auto da = digests(d.path() / "t1"), db = digests(d.path() / "t4");
  EXPECT_GE(da.size(), 20u);
  EXPECT_EQ(da, db);
  for (const char* f : {"rdd.json", "compare.json", "indep.json", "models/env.bin", "quantiles.csv", "bands.csv"}) {
    EXPECT_TRUE(da.count(f)) << f;
  }

  auto rdd = io::read_json((d.path() / "t1/rdd.json").string());
  EXPECT_TRUE(rdd["bandwidth_sweep"][0]["estimate"].is_null());
  EXPECT_EQ(rdd["run"]["seed"], 3);

  auto report = pipeline::build_report((d.path() / "t1").string());
  EXPECT_TRUE(report.merged["sections"].contains("indep"));
  EXPECT_NE(report.summary.find("Effect of the risk label"), std::string::npos);

  auto tampered = d.path() / "t4/compare.json";
  spit(tampered.string(), slurp(tampered.string()) + " ");
  EXPECT_EQ(error_code_of([&] { pipeline::build_report((d.path() / "t4").string()); }),
            ErrorCode::kCorruptArtifact);
}

TEST(Pipeline, EstimationFailureIsIsolated) {
  TempDir d;
  auto j = small_config();
  j["rdd"]["h"] = 0.0002;
  j["rdd"]["boot_reps"] = 0;
  j["train"]["enabled"] = false;
  j["target"]["enabled"] = false;
  j["indep"]["enabled"] = false;
  auto out = d.path() / "out";
  auto r = pipeline::run_pipeline(write_config(d, j), out.string());
  EXPECT_EQ(r.exit_code, pipeline::kExitEstimation);
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_EQ(r.errors[0].stage, "rdd");
  EXPECT_TRUE(is_estimation_error(r.errors[0].code));
  EXPECT_EQ(r.completed, (std::vector<std::string>{"synth", "label", "eval", "usage"}));
  EXPECT_TRUE(std::filesystem::exists(out / "errors.json"));
  EXPECT_FALSE(std::filesystem::exists(out / "rdd.json"));
}

TEST(Pipeline, StageSeedsDiffer) {
  EXPECT_NE(pipeline::stage_seed(1, "rdd"), pipeline::stage_seed(1, "indep"));
  EXPECT_NE(pipeline::stage_seed(1, "rdd"), pipeline::stage_seed(2, "rdd"));
  EXPECT_EQ(pipeline::stage_seed(5, "rdd"), pipeline::stage_seed(5, "rdd"));
}

}  // namespace
}  // namespace ewslab
