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

// Acceptance harness: prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "ewslab/pipeline.hpp"

using namespace ewslab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome rdd_exactness() {
  const double t = 0.785, h = 0.01;
  const std::size_t n = 10000;
  std::vector<double> d(n), y(n);
  std::vector<char> treated(n);
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = -h + 2 * h * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    treated[i] = d[i] < 0;
    y[i] = 0.80 + 0.30 * d[i] + 0.05 * treated[i];
  }
  RddConfig cfg;
  cfg.t_star = t;
  cfg.h = h;
  auto t0 = std::chrono::steady_clock::now();
  auto est = estimate_window(d, y, treated, cfg);
  double secs = seconds_since(t0);
  double err = std::fabs(est.tau - 0.05);
  return {err <= 1e-10 && secs < 1.0,
          fmt("|tau_hat - 0.05| = %.2e, %.3f s for n = %zu with %zu bootstrap reps", err, secs, n, cfg.boot_reps)};
}

Outcome rdd_coverage() {
  const int seeds = 200;
  auto t0 = std::chrono::steady_clock::now();
  int cover = 0, width_ok = 0;
  double sum_tau = 0, sum_n = 0, worst = 0;
  for (int s = 1; s <= seeds; ++s) {
    HistoryConfig hc;
    hc.synth.n_students = 200000;
    hc.synth.label_effect = {0.0, 0.0, 0.05};
    hc.synth.seed = static_cast<std::uint64_t>(s);
    auto h = simulate_history(hc);
    std::vector<double> upper;
    for (const auto& b : h.bands.bands) upper.push_back(b.upper);
    RddConfig rc;
    rc.h = 0.01;
    rc.boot_reps = 10000;
    rc.seed = derive_seed(static_cast<std::uint64_t>(s), "rdd");
    auto est = estimate(upper, h.synth.cohort.outcomes(), rc);
    cover += est.ci_normal_95.contains(0.05);
    double ratio = est.ci_boot_95->width() / est.ci_normal_95.width();
    width_ok += std::fabs(ratio - 1.0) <= 0.15;
    worst = std::max(worst, std::fabs(ratio - 1.0));
    sum_tau += est.tau;
    sum_n += static_cast<double>(est.n);
  }
  double secs = seconds_since(t0);
  bool pass = cover >= 186 && cover <= 194 && width_ok == seeds && secs < 600;
  return {pass, fmt("coverage %d/%d, mean tau_hat %.4f, mean in-band n %.0f, boot/normal width within 15%% in "
                    "%d/%d (worst %.1f%%), %.0f s",
                    cover, seeds, sum_tau / seeds, sum_n / seeds, width_ok, seeds, 100 * worst, secs)};
}

Outcome banding() {
  EwsConfig cfg;
  std::size_t violations = 0, cells = 0;
  for (double e : {0.0, 0.01, 0.03, 0.05}) {
    RiskCategory prev = RiskCategory::kHigh;
    for (int k = 0; k <= 10000; ++k) {
      double p = k / 10000.0;
      auto b = band(p, e, cfg);
      ++cells;
      int hits = (b.category == RiskCategory::kHigh) + (b.category == RiskCategory::kModerate) +
                 (b.category == RiskCategory::kLow);
      violations += hits != 1;
      violations += (b.category == RiskCategory::kHigh) != (b.upper < cfg.t_star);
      violations += (b.category == RiskCategory::kLow) != (b.lower > cfg.t_star);
      violations += static_cast<int>(b.category) > static_cast<int>(prev);
      violations += b.lower != std::clamp(p - e, 0.0, 1.0) || b.upper != std::clamp(p + e, 0.0, 1.0);
      violations += !(b.lower <= b.p && b.p <= b.upper);
      prev = b.category;
    }
  }
  HistoryConfig hc;
  auto h = simulate_history(hc);
  double high = h.bands.fraction(RiskCategory::kHigh);
  return {violations == 0 && high >= 0.08 && high <= 0.14,
          fmt("%zu violations over %zu grid cells, High fraction %.4f on the default cohort", violations, cells, high)};
}

Outcome metrics_oracles() {
  Stream s(2024, 0);
  double worst_auc = 0;
  for (int inst = 0; inst < 100; ++inst) {
    std::size_t n = 2 + static_cast<std::size_t>(s.uniform() * 1999);
    bool coarse = inst % 2 == 0;
    std::vector<double> p(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = coarse ? std::floor(s.uniform() * 20) / 20 : s.uniform();
      y[i] = s.uniform() < 0.3 + 0.4 * p[i];
    }
    y[0] = 0;
    y[1] = 1;
    double conc = 0;
    std::size_t pos = 0, neg = 0;
    for (std::size_t i = 0; i < n; ++i) (y[i] ? pos : neg) += 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (y[i] != 1) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (y[j] != 0) continue;
        conc += p[i] > p[j] ? 1.0 : p[i] == p[j] ? 0.5 : 0.0;
      }
    }
    conc /= static_cast<double>(pos) * static_cast<double>(neg);
    worst_auc = std::max({worst_auc, std::fabs(roc(p, y).auc - conc), std::fabs(auc_concordance(p, y) - conc)});
  }

  std::vector<double> p(200000);
  std::vector<int> y(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = s.uniform();
    y[i] = s.uniform() < p[i];
  }
  double worst_cal = 0;
  std::size_t bins = 0;
  for (const auto& b : calibration(p, y).bins) {
    if (b.n < 500) continue;
    ++bins;
    worst_cal = std::max(worst_cal, std::fabs(b.empirical_rate - b.mean_pred));
  }
  return {worst_auc <= 1e-9 && worst_cal <= 0.02 && bins > 0,
          fmt("max AUC gap %.1e over 100 instances, max calibration gap %.4f over %zu bins", worst_auc, worst_cal,
              bins)};
}

struct PartitionRun {
  double varcmp = 0, rate_gap = 0, flagged_high = 0, impact_gap = 0, rel_sq = 0, nested = 0;
};

PartitionRun partition_run(std::uint64_t seed) {
  SynthConfig sc;
  sc.seed = seed;
  auto synth = generate(sc);
  PartitionRun r;
  r.varcmp = variance_comparison(synth.cohort, std::string("math_z")).fraction;
  auto [tr, te] = split_cohort(synth.cohort, 0.8, seed);

  ModelSpec env, all;
  env.partition = PartitionSelector::environmental_only();
  all.partition = PartitionSelector::all();
  auto m_env = train(env, tr), m_all = train(all, tr);
  auto pe = m_env.predict(te), pa = m_all.predict(te);
  auto cmp = compare(pe, pa, te);
  r.rate_gap = std::fabs(cmp.env_bottom_rate - cmp.ind_bottom_rate);
  r.flagged_high = cmp.env_flagged_with_high_ind_score;
  auto base = io::align<double>(synth.truth.student_ids, synth.truth.base_prob, te.student_ids(), "truth", true);
  for (double tau : {-0.02, 0.0, 0.05, 0.12}) {
    double a = aggregate_impact(base, cmp.env_set, tau).expected_extra_graduates;
    double b = aggregate_impact(base, cmp.ind_set, tau).expected_extra_graduates;
    double denom = std::max(std::fabs(a), std::fabs(b));
    if (denom > 0) r.impact_gap = std::max(r.impact_gap, std::fabs(a - b) / denom);
  }
  r.rel_sq = compare_partitions(m_env, m_all, te, 1000, derive_seed(seed, "partition")).relative_delta.squared;

  ModelSpec lr_env = env, lr_all = all;
  lr_env.algorithm = lr_all.algorithm = Algorithm::kLogisticRegression;
  lr_env.hyperparams.l2 = lr_all.hyperparams.l2 = 0.0;
  auto y = tr.outcomes();
  r.nested = log_loss(train(lr_all, tr).predict(tr), y) - log_loss(train(lr_env, tr).predict(tr), y);
  return r;
}

std::vector<PartitionRun>& partition_runs() {
  static std::vector<PartitionRun> runs = [] {
    std::vector<PartitionRun> v;
    for (std::uint64_t s = 1; s <= 10; ++s) v.push_back(partition_run(s));
    return v;
  }();
  return runs;
}

Outcome targeting_parity() {
  double lo_var = 1, hi_var = 0, gap = 0, flagged = 0, impact = 0;
  for (const auto& r : partition_runs()) {
    lo_var = std::min(lo_var, r.varcmp);
    hi_var = std::max(hi_var, r.varcmp);
    gap = std::max(gap, r.rate_gap);
    flagged = std::max(flagged, r.flagged_high);
    impact = std::max(impact, r.impact_gap);
  }
  bool pass = lo_var >= 0.7 && hi_var <= 0.9 && gap <= 0.10 && flagged <= 0.01 && impact <= 0.02;
  return {pass, fmt("10 seeds: variance_comparison in [%.3f, %.3f], max rate gap %.4f, max flagged-safe %.4f, "
                    "max impact gap %.2f%%",
                    lo_var, hi_var, gap, flagged, 100 * impact)};
}

Outcome partition_gap() {
  double lo = 1, hi = -1, nested = -1;
  for (const auto& r : partition_runs()) {
    lo = std::min(lo, r.rel_sq);
    hi = std::max(hi, r.rel_sq);
    nested = std::max(nested, r.nested);
  }
  return {lo > 0 && hi <= 0.20 && nested <= 1e-6,
          fmt("10 seeds: relative squared-loss gain in [%.2f%%, %.2f%%], max nested log-loss increase %.1e", 100 * lo,
              100 * hi, nested)};
}

Outcome independence() {
  auto rate = [](double effect, std::uint64_t offset) {
    int hits = 0;
    for (std::uint64_t s = 1; s <= 100; ++s) {
      HistoryConfig hc;
      hc.synth.n_students = 200000;
      hc.synth.label_effect = {0.0, 0.0, effect};
      hc.synth.seed = offset + s;
      auto h = simulate_history(hc);
      const auto& c = h.synth.cohort;
      auto [tr, te] = split_cohort(c, 0.8, hc.synth.seed);
      auto ids = c.student_ids();
      auto pick = [&](const Cohort& part) {
        auto sub = part.student_ids();
        return PriorOutputs{io::align<double>(ids, h.prior.scores, sub, "prior", true),
                            io::align<RiskCategory>(ids, h.prior.categories, sub, "prior", true)};
      };
      ModelSpec spec;
      spec.algorithm = Algorithm::kLogisticRegression;
      auto r = run_indep(tr, te, pick(tr), pick(te), spec, 1000, derive_seed(hc.synth.seed, "indep"));
      hits += r.verdict == Verdict::kEvidenceOfDependence;
    }
    return hits;
  };
  auto t0 = std::chrono::steady_clock::now();
  int null_hits = rate(0.0, 10000), power_hits = rate(0.10, 20000);
  return {null_hits <= 10 && power_hits >= 90,
          fmt("null verdict rate %d/100, power %d/100 at +0.10, %.0f s", null_hits, power_hits, seconds_since(t0))};
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().filename() == "run.json") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    out[fs::relative(e.path(), root).string()] = ss.str();
  }
  return out;
}

Outcome determinism() {
  auto root = fs::temp_directory_path() / ("ewslab_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const std::string config = std::string(EWSLAB_SOURCE_DIR) + "/demo/small_pipeline.json";
  std::vector<std::map<std::string, std::string>> trees;
  std::vector<int> codes;
  for (const char* threads : {"1", "8"}) {
    ::setenv("EWS_LAB_THREADS", threads, 1);
    auto dir = root / (std::string("threads_") + threads);
    codes.push_back(pipeline::run_pipeline(config, dir.string()).exit_code);
    trees.push_back(read_tree(dir));
  }
  ::unsetenv("EWS_LAB_THREADS");
  fs::remove_all(root);
  std::size_t differing = 0;
  for (const auto& [name, body] : trees[0]) {
    auto it = trees[1].find(name);
    differing += it == trees[1].end() || it->second != body;
  }
  differing += trees[1].size() > trees[0].size() ? trees[1].size() - trees[0].size() : 0;
  return {codes[0] == 0 && codes[1] == 0 && differing == 0 && trees[0].size() >= 20,
          fmt("exit codes %d/%d, %zu artifacts, %zu differ between 1 and 8 threads", codes[0], codes[1],
              trees[0].size(), differing)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"RDD exactness", rdd_exactness},
      {"RDD recovery and coverage", rdd_coverage},
      {"Banding invariants", banding},
      {"Metrics oracles", metrics_oracles},
      {"Targeting parity", targeting_parity},
      {"Partition gap", partition_gap},
      {"Independence test size and power", independence},
      {"Determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s criterion %zu (%s): %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
