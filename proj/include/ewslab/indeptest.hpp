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

// Predicting from predictions: a model on features alone against one that also
// sees the prior system output (score plus one-of-k category).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ewslab/dataset.hpp"
#include "ewslab/error.hpp"
#include "ewslab/ews.hpp"
#include "ewslab/learner.hpp"

namespace ewslab {

struct PriorOutputs {
  std::vector<double> scores;
  std::vector<RiskCategory> categories;

  std::size_t size() const { return scores.size(); }
};

enum class Verdict { kNoEvidenceOfDependence, kEvidenceOfDependence };

inline std::string_view to_string(Verdict v) {
  return v == Verdict::kEvidenceOfDependence ? "evidence_of_dependence" : "no_evidence_of_dependence";
}

inline constexpr std::string_view kPositivityCaveat =
    "A null result is one-directional evidence: outcomes may still depend on prior outputs if "
    "prior categories are nearly determined by the features, leaving no overlap to learn from.";

struct IndepReport {
  LossReport performative;
  LossReport non_performative;
  LossReport delta;  // non-performative minus performative loss (AUC: performative minus non-performative)
  Verdict verdict = Verdict::kNoEvidenceOfDependence;
  std::size_t base_columns = 0;
  std::size_t performative_columns = 0;
  std::string caveat{kPositivityCaveat};
};

// Columns [prior_score, prior=low, prior=moderate, prior=high].
inline FeatureMatrix prior_columns(const PriorOutputs& prior) {
  check_lengths(prior.scores.size(), prior.categories.size(), "prior scores vs categories");
  FeatureMatrix m({"prior_score", "prior=low", "prior=moderate", "prior=high"}, prior.size());
  for (std::size_t r = 0; r < prior.size(); ++r) {
    m(r, 0) = prior.scores[r];
    m(r, 1 + static_cast<std::size_t>(prior.categories[r])) = 1.0;
  }
  return m;
}

// EvidenceOfDependence iff some loss delta has its 95% CI strictly above 0.
inline Verdict verdict_of(const LossReport& delta) {
  for (const auto* m : {&delta.squared, &delta.log, &delta.zero_one}) {
    if (m->ci.lo > 0.0) return Verdict::kEvidenceOfDependence;
  }
  return Verdict::kNoEvidenceOfDependence;
}

inline IndepReport run_indep(const Cohort& train, const Cohort& test, const PriorOutputs& prior_train,
                             const PriorOutputs& prior_test, const ModelSpec& spec, std::size_t boot_reps,
                             std::uint64_t seed) {
  spec.validate();
  check_lengths(prior_train.size(), train.size(), "prior outputs vs train");
  check_lengths(prior_test.size(), test.size(), "prior outputs vs test");
  if (train.size() < kMinTrainingRecords) {
    throw Error(ErrorCode::kInvalidArgument, "need at least " + std::to_string(kMinTrainingRecords) +
                                                 " training records");
  }
  auto schema = make_schema(train, spec.partition);
  auto x_train = project(train, schema);
  auto x_test = project(test, schema);
  auto y_train = train.outcomes();
  auto y_test = test.outcomes();

  auto xp_train = FeatureMatrix::hstack(x_train, prior_columns(prior_train));
  auto xp_test = FeatureMatrix::hstack(x_test, prior_columns(prior_test));

  auto base = fit_matrix(spec, x_train, y_train);
  auto perf = fit_matrix(spec, xp_train, y_train);
  auto cmp = compare_predictions(base.predict(x_test), perf.predict(xp_test), y_test, boot_reps, seed);

  IndepReport r;
  r.non_performative = cmp.base;
  r.performative = cmp.augmented;
  r.delta = cmp.absolute_delta;
  r.verdict = verdict_of(r.delta);
  r.base_columns = x_train.cols;
  r.performative_columns = xp_train.cols;
  return r;
}

}  // namespace ewslab
