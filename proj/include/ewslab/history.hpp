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

// Simulated deployment history: a legacy scorer, fitted on an earlier pilot
// cohort, scores the current cohort; year-to-year model variation enters as
// logit-scale noise. The resulting bands drive realized outcomes through the
// configured label effects.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "ewslab/ews.hpp"
#include "ewslab/indeptest.hpp"
#include "ewslab/learner.hpp"
#include "ewslab/random.hpp"
#include "ewslab/synthgen.hpp"

namespace ewslab {

struct HistoryConfig {
  SynthConfig synth;
  EwsConfig ews;
  double logit_noise = 0.5;  // sd of the per-student logit perturbation
  std::size_t pilot_students = 50000;

  void validate() const {
    synth.validate();
    ews.validate();
    if (!(logit_noise >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "logit_noise must be >= 0");
    if (pilot_students == 0) throw Error(ErrorCode::kInvalidArgument, "pilot_students must be >= 1");
  }
};

struct History {
  SynthCohort synth;     // outcomes realized under the prior labels
  PriorOutputs prior;    // legacy scores and their categories
  BandedCohort bands;
};

// Logistic regression on all features, fitted on a label-free pilot cohort of
// at most `pilot_students` students.
inline TrainedModel legacy_scorer(const SynthConfig& cfg, std::size_t pilot_students) {
  SynthConfig pilot = cfg;
  pilot.seed = derive_seed(cfg.seed, "legacy");
  pilot.label_effect = {};
  pilot.n_students = std::max(std::min(cfg.n_students, pilot_students),
                              cfg.n_districts * cfg.schools_per_district);
  auto sc = generate(pilot);
  ModelSpec spec;
  spec.algorithm = Algorithm::kLogisticRegression;
  spec.partition = PartitionSelector::all();
  return train(spec, sc.cohort);
}

inline std::vector<double> perturb_scores(std::span<const double> scores, std::span<const std::string> ids,
                                          double logit_noise, std::uint64_t seed) {
  check_lengths(scores.size(), ids.size(), "scores vs ids");
  std::vector<double> out(scores.size());
  const std::uint64_t base = derive_seed(seed, "prior-noise");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    Stream s(base, fnv1a(ids[i]));
    double z = logit(clamp_prob(scores[i])) + logit_noise * std::normal_distribution<double>(0.0, 1.0)(s);
    out[i] = clamp_prob(logistic(z));
  }
  return out;
}

inline History simulate_history(const HistoryConfig& cfg) {
  cfg.validate();
  History h;
  h.synth = generate(cfg.synth);
  auto scorer = legacy_scorer(cfg.synth, cfg.pilot_students);
  auto ids = h.synth.cohort.student_ids();
  h.prior.scores = perturb_scores(scorer.predict(h.synth.cohort), ids, cfg.logit_noise, cfg.synth.seed);
  h.bands = band_cohort(h.prior.scores, cfg.ews);
  h.prior.categories = h.bands.categories();
  auto y = realize_outcomes(h.synth.truth, std::span<const RiskCategory>(h.prior.categories), cfg.synth,
                            cfg.synth.seed);
  h.synth.cohort = std::move(h.synth.cohort).with_outcomes(y);
  return h;
}

}  // namespace ewslab
