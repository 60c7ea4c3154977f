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

// Minimal end-to-end use of the library: simulate a cohort scored by a legacy
// system, compare environmental and full-feature predictors, estimate the
// label effect at the high-risk cutoff.

#include <cstdio>

#include "ewslab/history.hpp"
#include "ewslab/learner.hpp"
#include "ewslab/rdd.hpp"
#include "ewslab/targeting.hpp"

int main() {
  using namespace ewslab;

  HistoryConfig hc;
  hc.synth.n_students = 30000;
  hc.synth.label_effect = {0.0, 0.0, 0.05};
  hc.synth.seed = 42;
  auto h = simulate_history(hc);
  const Cohort& cohort = h.synth.cohort;
  std::printf("students %zu, high-risk share %.3f\n", cohort.size(), h.bands.fraction(RiskCategory::kHigh));

  auto [train_set, test_set] = split_cohort(cohort, 0.8, 7);
  ModelSpec env_spec;
  env_spec.partition = PartitionSelector::environmental_only();
  ModelSpec all_spec;
  auto env = train(env_spec, train_set);
  auto all = train(all_spec, train_set);
  auto cmp = compare_partitions(env, all, test_set, 1000, 7);
  std::printf("squared loss: env %.4f, all %.4f (relative gap %.3f)\n", cmp.base.squared.value,
              cmp.augmented.squared.value, cmp.relative_delta.squared);

  auto pe = env.predict(test_set), pa = all.predict(test_set);
  auto report = compare(pe, pa, test_set);
  std::printf("bottom 11%%: env grad rate %.3f, ind grad rate %.3f, overlap %.3f\n", report.env_bottom_rate,
              report.ind_bottom_rate, report.overlap_jaccard);

  std::vector<double> upper;
  for (const auto& b : h.bands.bands) upper.push_back(b.upper);
  RddConfig rc;
  rc.seed = 7;
  auto est = estimate(upper, cohort.outcomes(), rc);
  std::printf("label effect %.4f (se %.4f, %zu students in bandwidth)\n", est.tau, est.se, est.n);
  return 0;
}
