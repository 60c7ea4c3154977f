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

// End-to-end pipeline over a synthetic (or supplied) cohort: synth, train,
// label, eval, rdd, target, indep and usage stages writing JSON reports and
// CSV plot data into one artifact directory, plus the consolidated report.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ewslab/dataset.hpp"
#include "ewslab/digest.hpp"
#include "ewslab/ews.hpp"
#include "ewslab/history.hpp"
#include "ewslab/indeptest.hpp"
#include "ewslab/io.hpp"
#include "ewslab/learner.hpp"
#include "ewslab/metrics.hpp"
#include "ewslab/rdd.hpp"
#include "ewslab/synthgen.hpp"
#include "ewslab/targeting.hpp"

namespace ewslab::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr std::string_view kToolVersion = "ews-lab 1.0.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitEstimation = 3;

// Provenance embedded in every report. Timestamps live only in run.json so
// reports stay byte-identical across reruns.
struct RunManifest {
  std::string command;
  std::string config_digest;
  std::map<std::string, std::string> input_digests;
  std::uint64_t seed = 0;
  std::string tool_version{kToolVersion};

  json to_json() const {
    return {{"command", command},
            {"config_sha256", config_digest},
            {"input_sha256", input_digests},
            {"seed", seed},
            {"tool_version", tool_version}};
  }
};

inline std::string utc_now() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::uint64_t stage_seed(std::uint64_t master, std::string_view stage) { return derive_seed(master, stage); }

// ---------------------------------------------------------------------------
// Configuration

struct Inputs {
  std::optional<std::string> manifest;
  std::optional<std::string> cohort;
  std::optional<std::string> truth;
  std::optional<std::string> prior;  // scores CSV (student_id,score)
  std::optional<std::string> visit_log;
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  Inputs inputs;

  struct {
    bool enabled = true;
    SynthConfig cfg;
    double logit_noise = 0.5;
    std::size_t pilot_students = 50000;
  } synth;
  struct {
    bool enabled = true;
    double train_fraction = 0.8;
    ModelSpec env_spec;
    ModelSpec ind_spec;
    std::size_t boot_reps = 1000;
  } train;
  struct {
    bool enabled = true;
    EwsConfig ews;
  } label;
  struct {
    bool enabled = true;
    std::size_t n_bins = kDefaultCalibrationBins;
    std::string subgroup = "nonwhite";
  } eval;
  struct {
    bool enabled = true;
    RddSide side = RddSide::kUpperScore;
    double h = 0.01;
    std::size_t boot_reps = 10000;
    std::vector<double> bandwidths = kDefaultBandwidths;
    std::size_t k = 5;
    std::vector<std::string> subgroups = {"male"};
  } rdd;
  struct {
    bool enabled = true;
    CompareOptions options;
    std::vector<double> taus = {-0.02, 0.0, 0.05, 0.12};
  } target;
  struct {
    bool enabled = true;
    ModelSpec spec;
    std::size_t boot_reps = 1000;
  } indep;
  struct {
    bool enabled = true;
    int first_year = 2015;
    int years = 5;
  } usage;

  PipelineConfig() {
    env_defaults();
  }

  void env_defaults() {
    train.env_spec.partition = PartitionSelector::environmental_only();
    train.ind_spec.partition = PartitionSelector::all();
    indep.spec.algorithm = Algorithm::kLogisticRegression;
  }
};

namespace config_detail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || k == a;
    if (!ok) throw Error(ErrorCode::kInvalidArgument, where + ": unknown key '" + k + "'");
  }
}

template <typename T>
void get(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

}  // namespace config_detail

inline PipelineConfig parse_config(const json& j, const fs::path& base_dir) {
  using namespace config_detail;
  PipelineConfig c;
  try {
    check_keys(j, "config", {"seed", "inputs", "synth", "train", "label", "eval", "rdd", "target", "indep", "usage"});
    get(j, "seed", c.seed);
    auto resolve = [&](const json& obj, const char* key, std::optional<std::string>& out) {
      if (!obj.contains(key)) return;
      fs::path p = obj.at(key).get<std::string>();
      out = (p.is_absolute() ? p : base_dir / p).lexically_normal().string();
    };
    if (j.contains("inputs")) {
      const auto& in = j.at("inputs");
      check_keys(in, "inputs", {"manifest", "cohort", "truth", "prior", "visit_log"});
      resolve(in, "manifest", c.inputs.manifest);
      resolve(in, "cohort", c.inputs.cohort);
      resolve(in, "truth", c.inputs.truth);
      resolve(in, "prior", c.inputs.prior);
      resolve(in, "visit_log", c.inputs.visit_log);
    }
    if (j.contains("synth")) {
      const auto& s = j.at("synth");
      check_keys(s, "synth", {"enabled", "config", "logit_noise", "pilot_students"});
      get(s, "enabled", c.synth.enabled);
      if (s.contains("config")) c.synth.cfg = SynthConfig::from_json(s.at("config"));
      get(s, "logit_noise", c.synth.logit_noise);
      get(s, "pilot_students", c.synth.pilot_students);
    }
    if (j.contains("train")) {
      const auto& s = j.at("train");
      check_keys(s, "train", {"enabled", "train_fraction", "env_spec", "ind_spec", "boot_reps"});
      get(s, "enabled", c.train.enabled);
      get(s, "train_fraction", c.train.train_fraction);
      get(s, "boot_reps", c.train.boot_reps);
      if (s.contains("env_spec")) c.train.env_spec = ModelSpec::from_json(s.at("env_spec"));
      if (s.contains("ind_spec")) c.train.ind_spec = ModelSpec::from_json(s.at("ind_spec"));
    }
    if (j.contains("label")) {
      const auto& s = j.at("label");
      check_keys(s, "label", {"enabled", "t_star", "error"});
      get(s, "enabled", c.label.enabled);
      get(s, "t_star", c.label.ews.t_star);
      get(s, "error", c.label.ews.default_error);
    }
    if (j.contains("eval")) {
      const auto& s = j.at("eval");
      check_keys(s, "eval", {"enabled", "n_bins", "subgroup"});
      get(s, "enabled", c.eval.enabled);
      get(s, "n_bins", c.eval.n_bins);
      get(s, "subgroup", c.eval.subgroup);
    }
    if (j.contains("rdd")) {
      const auto& s = j.at("rdd");
      check_keys(s, "rdd", {"enabled", "side", "h", "boot_reps", "bandwidths", "k", "subgroups"});
      get(s, "enabled", c.rdd.enabled);
      if (s.contains("side")) c.rdd.side = parse_side(s.at("side").get<std::string>());
      get(s, "h", c.rdd.h);
      get(s, "boot_reps", c.rdd.boot_reps);
      get(s, "bandwidths", c.rdd.bandwidths);
      get(s, "k", c.rdd.k);
      get(s, "subgroups", c.rdd.subgroups);
    }
    if (j.contains("target")) {
      const auto& s = j.at("target");
      check_keys(s, "target", {"enabled", "budget", "safe_cutoff", "need_cutoff", "taus"});
      get(s, "enabled", c.target.enabled);
      get(s, "budget", c.target.options.budget_fraction);
      get(s, "safe_cutoff", c.target.options.safe_cutoff);
      get(s, "need_cutoff", c.target.options.need_cutoff);
      get(s, "taus", c.target.taus);
    }
    if (j.contains("indep")) {
      const auto& s = j.at("indep");
      check_keys(s, "indep", {"enabled", "spec", "boot_reps"});
      get(s, "enabled", c.indep.enabled);
      get(s, "boot_reps", c.indep.boot_reps);
      if (s.contains("spec")) c.indep.spec = ModelSpec::from_json(s.at("spec"));
    }
    if (j.contains("usage")) {
      const auto& s = j.at("usage");
      check_keys(s, "usage", {"enabled", "first_year", "years"});
      get(s, "enabled", c.usage.enabled);
      get(s, "first_year", c.usage.first_year);
      get(s, "years", c.usage.years);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("config: ") + e.what());
  }
  c.synth.cfg.seed = stage_seed(c.seed, "synth");
  return c;
}

// Static checks that need no data.
inline void validate_config(const PipelineConfig& c) {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kInvalidArgument, m); };
  if (c.synth.enabled) {
    HistoryConfig{c.synth.cfg, c.label.ews, c.synth.logit_noise, c.synth.pilot_students}.validate();
    if (c.inputs.cohort) fail("inputs.cohort conflicts with an enabled synth stage");
  }
  bool have_cohort = c.synth.enabled || c.inputs.cohort.has_value();
  bool have_prior = c.synth.enabled || c.inputs.prior.has_value();
  if (c.inputs.cohort && !c.inputs.manifest) fail("inputs.cohort needs inputs.manifest");
  if (c.train.enabled) {
    if (!have_cohort) fail("train stage needs a cohort (synth stage or inputs.cohort)");
    if (!(c.train.train_fraction > 0.0 && c.train.train_fraction < 1.0)) fail("train_fraction must lie in (0,1)");
    if (c.train.boot_reps < kMinBootstrapReps) fail("train.boot_reps must be >= 1000");
    c.train.env_spec.validate();
    c.train.ind_spec.validate();
  }
  c.label.ews.validate();
  if (c.label.enabled && !have_prior) fail("label stage needs prior scores (synth stage or inputs.prior)");
  auto need_label = [&](const char* stage) {
    if (!c.label.enabled) fail(std::string(stage) + " stage needs the label stage");
    if (!have_cohort) fail(std::string(stage) + " stage needs a cohort");
  };
  if (c.eval.enabled) {
    need_label("eval");
    if (c.eval.n_bins < 2) fail("eval.n_bins must be >= 2");
  }
  if (c.rdd.enabled) {
    need_label("rdd");
    RddConfig{c.label.ews.t_star, c.rdd.h, c.rdd.side, c.rdd.boot_reps, 0}.validate();
    for (double h : c.rdd.bandwidths) RddConfig{c.label.ews.t_star, h, c.rdd.side, 0, 0}.validate();
    if (c.rdd.k < 3) fail("rdd.k must be >= 3");
  }
  if (c.target.enabled) {
    if (!c.train.enabled) fail("target stage needs the train stage");
    if (!(c.target.options.budget_fraction > 0.0 && c.target.options.budget_fraction < 1.0)) {
      fail("target.budget must lie in (0,1)");
    }
    for (double t : c.target.taus) {
      if (!(t >= -1.0 && t <= 1.0)) fail("target.taus must lie in [-1,1]");
    }
  }
  if (c.indep.enabled) {
    need_label("indep");
    if (c.indep.boot_reps < kMinBootstrapReps) fail("indep.boot_reps must be >= 1000");
    c.indep.spec.validate();
  }
  if (c.usage.enabled) {
    if (!have_cohort && !c.inputs.visit_log) fail("usage stage needs a cohort or inputs.visit_log");
    if (c.usage.years < 1) fail("usage.years must be >= 1");
  }
}

// ---------------------------------------------------------------------------
// Run state

struct StageError {
  std::string stage;
  ErrorCode code;
  std::string message;
};

struct RunResult {
  int exit_code = kExitOk;
  std::vector<std::string> completed;
  std::vector<std::string> skipped;
  std::vector<StageError> errors;
};

namespace detail {

struct Data {
  std::optional<Cohort> cohort;
  std::optional<GroundTruth> truth;  // from synth, or base_prob from inputs.truth
  std::optional<std::vector<double>> truth_base_prob;
  std::optional<std::vector<double>> prior_scores;
  std::optional<BandedCohort> bands;
  std::optional<Cohort> train, test;
  std::optional<TrainedModel> env_model, ind_model;
  std::optional<VisitLog> visit_log;
};

inline std::vector<double> truth_for(const Data& d, const Cohort& c) {
  auto ids = c.student_ids();
  auto all_ids = d.cohort->student_ids();
  return io::align<double>(all_ids, *d.truth_base_prob, ids, "truth", true);
}

// District portal visits: probability rises with district quality proxies.
inline VisitLog synth_visit_log(const Cohort& c, int first_year, int years, std::uint64_t seed) {
  std::map<std::string, std::pair<long long, double>> districts;  // enrollment, income
  auto income = c.manifest().index_of("district_income");
  for (const auto& r : c.records()) {
    auto& d = districts[r.district_id];
    d.first += 1;
    if (income) d.second = std::get<double>(r.features[*income]);
  }
  double mu = 0, sd = 0;
  for (const auto& [id, d] : districts) mu += d.second;
  mu /= static_cast<double>(districts.size());
  for (const auto& [id, d] : districts) sd += (d.second - mu) * (d.second - mu);
  sd = std::sqrt(sd / static_cast<double>(districts.size()));
  std::vector<VisitEntry> entries;
  for (const auto& [id, d] : districts) {
    double z = sd > 0 ? (d.second - mu) / sd : 0.0;
    Stream s(seed, fnv1a(id));
    double propensity = logistic(0.4 + 0.8 * z + 0.5 * std::normal_distribution<double>(0.0, 1.0)(s));
    for (int y = 0; y < years; ++y) {
      entries.push_back({id, first_year + y, s.uniform() < propensity ? 1 : 0, d.first});
    }
  }
  return VisitLog(std::move(entries));
}

inline json district_covariates(const Cohort& c) {
  std::map<std::string, std::map<std::string, std::pair<double, double>>> acc;
  std::vector<std::pair<std::size_t, std::string>> cols;
  for (std::size_t f = 0; f < c.manifest().size(); ++f) {
    const auto& spec = c.manifest().entries()[f];
    if (spec.vtype != ValueType::kCategorical) cols.emplace_back(f, spec.name);
  }
  for (const auto& r : c.records()) {
    auto& d = acc[r.district_id];
    for (const auto& [f, name] : cols) {
      auto& a = d[name];
      a.first += std::get<double>(r.features[f]);
      a.second += 1;
    }
  }
  json out = json::object();
  for (const auto& [id, feats] : acc) {
    json j = json::object();
    for (const auto& [name, a] : feats) j[name] = a.first / a.second;
    out[id] = j;
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pipeline

class Pipeline {
 public:
  Pipeline(PipelineConfig cfg, std::string config_text, fs::path out_dir)
      : cfg_(std::move(cfg)), config_text_(std::move(config_text)), out_(std::move(out_dir)) {}

  // Loads and validates every input. Throws before anything is written.
  void prepare() {
    validate_config(cfg_);
    manifest_.command = "pipeline";
    manifest_.seed = cfg_.seed;
    manifest_.config_digest = sha256_hex(config_text_);
    auto digest_input = [&](const char* name, const std::optional<std::string>& path) {
      if (!path) return;
      if (!fs::is_regular_file(*path)) throw Error(ErrorCode::kIo, std::string("inputs.") + name + ": no file " + *path);
      manifest_.input_digests[name] = sha256_file(*path);
    };
    digest_input("manifest", cfg_.inputs.manifest);
    digest_input("cohort", cfg_.inputs.cohort);
    digest_input("truth", cfg_.inputs.truth);
    digest_input("prior", cfg_.inputs.prior);
    digest_input("visit_log", cfg_.inputs.visit_log);

    if (cfg_.inputs.cohort) {
      LoadOptions opts;
      opts.require_outcome = cfg_.train.enabled || cfg_.label.enabled;
      data_.cohort = load_cohort(*cfg_.inputs.manifest, *cfg_.inputs.cohort, opts);
      if (cfg_.train.enabled && !data_.cohort->has_all_outcomes()) {
        throw Error(ErrorCode::kMissingOutcome, "inputs.cohort lacks outcomes");
      }
      auto ids = data_.cohort->student_ids();
      if (cfg_.inputs.prior) {
        auto kv = io::read_scores(*cfg_.inputs.prior);
        data_.prior_scores = io::align<double>(kv.ids, kv.values, ids, "inputs.prior");
        for (double p : *data_.prior_scores) {
          if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "prior scores must lie in [0,1]");
        }
      }
      if (cfg_.inputs.truth) {
        auto kv = io::read_keyed(*cfg_.inputs.truth, {"base_prob"});
        data_.truth_base_prob = io::align<double>(kv.ids, kv.values, ids, "inputs.truth");
      }
    }
    if (cfg_.inputs.visit_log) data_.visit_log = load_visit_log(*cfg_.inputs.visit_log);
    if (fs::exists(out_) && !fs::is_directory(out_)) {
      throw Error(ErrorCode::kIo, out_.string() + " exists and is not a directory");
    }
  }

  RunResult run() {
    const std::string started = utc_now();
    fs::create_directories(out_);
    RunResult res;
    std::set<std::string> failed;
    auto stage = [&](const std::string& name, bool enabled, std::initializer_list<const char*> deps, auto&& body) {
      if (!enabled) return;
      for (const char* d : deps) {
        if (failed.count(d)) {
          failed.insert(name);
          res.skipped.push_back(name);
          return;
        }
      }
      try {
        body();
        res.completed.push_back(name);
      } catch (const Error& e) {
        failed.insert(name);
        res.errors.push_back({name, e.code(), e.what()});
      } catch (const std::exception& e) {
        failed.insert(name);
        res.errors.push_back({name, ErrorCode::kIo, e.what()});
      }
    };
    stage("synth", cfg_.synth.enabled, {}, [&] { run_synth(); });
    stage("train", cfg_.train.enabled, {"synth"}, [&] { run_train(); });
    stage("label", cfg_.label.enabled, {"synth"}, [&] { run_label(); });
    stage("eval", cfg_.eval.enabled, {"label"}, [&] { run_eval(); });
    stage("rdd", cfg_.rdd.enabled, {"label"}, [&] { run_rdd(); });
    stage("target", cfg_.target.enabled, {"train"}, [&] { run_target(); });
    stage("indep", cfg_.indep.enabled, {"label", "train"}, [&] { run_indep_stage(); });
    stage("usage", cfg_.usage.enabled, {"synth"}, [&] { run_usage(); });

    if (!res.errors.empty()) {
      json errs = json::array();
      bool estimation = false, other = false;
      for (const auto& e : res.errors) {
        errs.push_back({{"stage", e.stage}, {"code", std::string(to_string(e.code))}, {"message", e.message}});
        (is_estimation_error(e.code) ? estimation : other) = true;
      }
      write("errors.json", {{"run", manifest_.to_json()}, {"errors", errs}, {"skipped", res.skipped}});
      res.exit_code = other ? kExitFailure : estimation ? kExitEstimation : kExitOk;
    }
    json digests = json::object();
    for (const auto& name : written_) digests[name] = sha256_file((out_ / name).string());
    io::write_json((out_ / "artifacts.json").string(), {{"run", manifest_.to_json()}, {"sha256", digests}});
    io::write_json((out_ / "run.json").string(), {{"run", manifest_.to_json()},
                                                  {"started_utc", started},
                                                  {"finished_utc", utc_now()},
                                                  {"completed", res.completed},
                                                  {"skipped", res.skipped},
                                                  {"exit_code", res.exit_code}});
    return res;
  }

 private:
  std::string path(const std::string& name) {
    written_.insert(name);
    auto p = out_ / name;
    fs::create_directories(p.parent_path());
    return p.string();
  }

  void write(const std::string& name, json body) {
    body["run"] = manifest_.to_json();
    io::write_json(path(name), body);
  }

  void run_synth() {
    HistoryConfig hc{cfg_.synth.cfg, cfg_.label.ews, cfg_.synth.logit_noise, cfg_.synth.pilot_students};
    auto h = simulate_history(hc);
    data_.cohort = h.synth.cohort;
    data_.truth_base_prob = h.synth.truth.base_prob;
    data_.prior_scores = h.prior.scores;
    data_.truth = std::move(h.synth.truth);
    const auto& c = *data_.cohort;
    c.manifest().save(path("manifest.json"));
    write_cohort(c, path("cohort.csv"));
    write_truth(*data_.truth, path("truth.csv"));
    io::write_scores(path("prior_scores.csv"), c.student_ids(), *data_.prior_scores);
    auto y = c.outcomes();
    double rate = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    auto base_mean = mean(*data_.truth_base_prob);
    write("synth.json", {{"config", cfg_.synth.cfg.to_json()},
                         {"logit_noise", cfg_.synth.logit_noise},
                         {"pilot_students", cfg_.synth.pilot_students},
                         {"n_students", c.size()},
                         {"realized_grad_rate", rate},
                         {"mean_base_prob", base_mean},
                         {"intercept", data_.truth->intercept},
                         {"variance_comparison",
                          {{"math_z", io::to_json(variance_comparison(c, std::string("math_z")))},
                           {"full_vector", io::to_json(variance_comparison(c, FullVector{}))}}}});
  }

  void run_train() {
    auto [tr, te] = split_cohort(*data_.cohort, cfg_.train.train_fraction, stage_seed(cfg_.seed, "split"));
    ModelSpec env = cfg_.train.env_spec, ind = cfg_.train.ind_spec;
    env.seed = ind.seed = stage_seed(cfg_.seed, "train");
    data_.env_model = train(env, tr);
    data_.ind_model = train(ind, tr);
    data_.env_model->save(path("models/env.bin"));
    data_.ind_model->save(path("models/ind.bin"));
    auto pe = data_.env_model->predict(te), pi = data_.ind_model->predict(te);
    auto te_ids = te.student_ids();
    io::write_scores(path("env_scores.csv"), te_ids, pe);
    io::write_scores(path("ind_scores.csv"), te_ids, pi);
    auto cmp = compare_predictions(pe, pi, te.outcomes(), cfg_.train.boot_reps, stage_seed(cfg_.seed, "train-boot"));
    json split = {{"train", tr.size()}, {"test", te.size()}, {"fraction", cfg_.train.train_fraction}};
    json models = {{"environmental", {{"spec", env.to_json()}, {"columns", data_.env_model->schema().column_names()},
                                      {"degenerate", data_.env_model->degenerate()}}},
                   {"individual", {{"spec", ind.to_json()}, {"columns", data_.ind_model->schema().column_names()},
                                   {"degenerate", data_.ind_model->degenerate()}}}};
    auto env_spread = within_school_spread(pe, te.school_ids());
    auto ind_spread = within_school_spread(pi, te.school_ids());
    json recovery = json::object();
    for (const char* f : {"nonwhite", "frl"}) {
      auto idx = tr.manifest().index_of(f);
      if (!idx) continue;
      const auto& spec = tr.manifest().entries()[*idx];
      if (spec.vtype != ValueType::kBinary || spec.kind != FeatureKind::kIndividual) continue;
      ModelSpec rs = env;
      auto g = env_group_recovery(tr, te, f, rs);
      recovery[f] = {{"zero_one", g.zero_one}, {"base_rate", g.base_rate}};
    }
    write("models.json", {{"split", split},
                          {"models", models},
                          {"comparison", io::to_json(cmp)},
                          {"within_school_spread", {{"environmental", io::to_json(env_spread)},
                                                    {"individual", io::to_json(ind_spread)}}},
                          {"env_group_recovery", recovery}});
    data_.train = std::move(tr);
    data_.test = std::move(te);
  }

  void run_label() {
    data_.bands = band_cohort(*data_.prior_scores, cfg_.label.ews);
    io::write_bands(path("bands.csv"), data_.cohort->student_ids(), data_.bands->bands);
    write("label.json", {{"t_star", cfg_.label.ews.t_star},
                         {"error", cfg_.label.ews.default_error},
                         {"counts", io::to_json(*data_.bands)}});
  }

  void run_eval() {
    const auto& c = *data_.cohort;
    auto y = c.outcomes();
    const auto& p = *data_.prior_scores;
    auto cal = calibration(p, y, cfg_.eval.n_bins);
    auto curve = roc(p, y);
    io::write_calibration_csv(path("calibration.csv"), cal);
    io::write_roc_csv(path("roc.csv"), curve);
    json j = {{"n", c.size()},
              {"auc", curve.auc},
              {"calibration", io::to_json(cal)},
              {"category_outcomes", io::to_json(category_outcomes(data_.bands->bands, y))}};
    if (auto idx = c.manifest().index_of(cfg_.eval.subgroup);
        idx && c.manifest().entries()[*idx].vtype == ValueType::kBinary) {
      auto g = c.numeric(cfg_.eval.subgroup);
      std::vector<int> group(g.begin(), g.end());
      auto sub = subgroup_calibration(p, y, group, cfg_.eval.n_bins);
      j["subgroup_calibration"] = {{"feature", cfg_.eval.subgroup},
                                   {"in_group", io::to_json(sub.curve_in)},
                                   {"out_group", io::to_json(sub.curve_out)},
                                   {"dominance", std::string(to_string(sub.dominance))}};
    }
    write("eval.json", j);
  }

  void run_rdd() {
    const auto& c = *data_.cohort;
    auto y = c.outcomes();
    std::vector<double> running;
    for (const auto& b : data_.bands->bands) {
      running.push_back(cfg_.rdd.side == RddSide::kUpperScore ? b.upper : b.lower);
    }
    RddConfig rc{cfg_.label.ews.t_star, cfg_.rdd.h, cfg_.rdd.side, cfg_.rdd.boot_reps, stage_seed(cfg_.seed, "rdd")};
    auto est = estimate(running, y, rc);
    json sweep = json::array();
    RddConfig sweep_cfg = rc;
    sweep_cfg.boot_reps = 0;
    for (const auto& e : bandwidth_sweep(running, y, sweep_cfg, cfg_.rdd.bandwidths)) sweep.push_back(io::to_json(e));
    json subgroups = json::array();
    for (const auto& name : cfg_.rdd.subgroups) {
      auto v = c.numeric(name);
      for (int level : {1, 0}) {
        std::vector<int> mask;
        for (double x : v) mask.push_back(x == level ? 1 : 0);
        json s = {{"feature", name}, {"value", level}};
        try {
          s["estimate"] = io::to_json(subgroup_estimate(running, y, mask, sweep_cfg));
        } catch (const Error& e) {
          if (!is_estimation_error(e.code())) throw;
          s["estimate"] = nullptr;
          s["error"] = {{"code", std::string(to_string(e.code()))}, {"message", e.what()}};
        }
        subgroups.push_back(s);
      }
    }
    write("rdd.json", {{"side", std::string(to_string(cfg_.rdd.side))},
                       {"t_star", rc.t_star},
                       {"boot_reps", rc.boot_reps},
                       {"estimate", io::to_json(est)},
                       {"bandwidth_sweep", sweep},
                       {"subgroups", subgroups}});
    std::vector<NamedColumn> cols;
    for (const auto& f : c.manifest().entries()) {
      if (f.vtype != ValueType::kCategorical) cols.push_back({f.name, c.numeric(f.name)});
    }
    write("diagnostics.json", io::to_json(diagnostics(running, cols, rc, cfg_.rdd.k)));
  }

  void run_target() {
    const auto& te = *data_.test;
    auto pe = data_.env_model->predict(te), pi = data_.ind_model->predict(te);
    auto report = compare(pe, pi, te, cfg_.target.options);
    std::vector<double> base;
    std::string base_source;
    if (data_.truth_base_prob) {
      base = detail::truth_for(data_, te);
      base_source = "ground_truth";
    } else {
      base = pi;
      base_source = "individual_model";
    }
    json impact = json::array();
    for (double tau : cfg_.target.taus) {
      auto a = aggregate_impact(base, report.env_set, tau);
      auto b = aggregate_impact(base, report.ind_set, tau);
      json row = {{"tau", tau}, {"environmental", io::to_json(a)}, {"individual", io::to_json(b)}};
      double denom = std::max(std::fabs(a.expected_extra_graduates), std::fabs(b.expected_extra_graduates));
      io::put(row, "relative_gap",
              denom > 0 ? std::fabs(a.expected_extra_graduates - b.expected_extra_graduates) / denom
                        : std::numeric_limits<double>::quiet_NaN(),
              "both impacts are zero");
      impact.push_back(row);
    }
    auto env_prof = quantile_profile(pe, te, cfg_.target.options.features);
    auto ind_prof = quantile_profile(pi, te, cfg_.target.options.features);
    io::write_quantiles_csv(path("quantiles.csv"), env_prof, ind_prof);
    write("compare.json", {{"compare", io::to_json(report)},
                           {"safe_cutoff", cfg_.target.options.safe_cutoff},
                           {"need_cutoff", cfg_.target.options.need_cutoff},
                           {"impact_base", base_source},
                           {"aggregate_impact", impact}});
  }

  void run_indep_stage() {
    const auto& all = *data_.cohort;
    auto ids = all.student_ids();
    PriorOutputs prior{*data_.prior_scores, data_.bands->categories()};
    auto pick = [&](const Cohort& part) {
      auto part_ids = part.student_ids();
      PriorOutputs p;
      p.scores = io::align<double>(ids, prior.scores, part_ids, "prior", true);
      p.categories = io::align<RiskCategory>(ids, prior.categories, part_ids, "prior", true);
      return p;
    };
    ModelSpec spec = cfg_.indep.spec;
    spec.seed = stage_seed(cfg_.seed, "indep");
    auto r = run_indep(*data_.train, *data_.test, pick(*data_.train), pick(*data_.test), spec, cfg_.indep.boot_reps,
                       stage_seed(cfg_.seed, "indep-boot"));
    json j = io::to_json(r);
    j["spec"] = spec.to_json();
    j["prior_source"] = cfg_.synth.enabled ? "simulated legacy scorer with logit noise" : "supplied prior scores";
    write("indep.json", j);
  }

  void run_usage() {
    if (!data_.visit_log) {
      data_.visit_log = detail::synth_visit_log(*data_.cohort, cfg_.usage.first_year, cfg_.usage.years,
                                                stage_seed(cfg_.seed, "usage"));
      write_visit_log(*data_.visit_log, path("visit_log.csv"));
    }
    auto years = usage_weighted_visits(*data_.visit_log);
    auto frac = district_visit_fraction(*data_.visit_log);
    json districts = json::array();
    json cov = data_.cohort ? detail::district_covariates(*data_.cohort) : json::object();
    for (const auto& [id, f] : frac) {
      json d = {{"district_id", id}, {"visit_fraction", f}};
      if (cov.contains(id)) d["covariates"] = cov[id];
      districts.push_back(d);
    }
    write("usage.json", {{"years", io::to_json(years)}, {"districts", districts}});
  }

  PipelineConfig cfg_;
  std::string config_text_;
  fs::path out_;
  RunManifest manifest_;
  detail::Data data_;
  std::set<std::string> written_;
};

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs the pipeline described by `config_path` into `out_dir`. Validation
// failures return kExitValidation before anything is written.
inline RunResult run_pipeline(const std::string& config_path, const std::string& out_dir,
                              std::ostream* log = nullptr) {
  std::optional<Pipeline> p;
  try {
    auto text = read_text(config_path);
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kInvalidArgument, config_path + ": " + e.what());
    }
    auto cfg = parse_config(j, fs::path(config_path).parent_path());
    p.emplace(std::move(cfg), std::move(text), out_dir);
    p->prepare();
  } catch (const Error& e) {
    if (log) *log << "validation error: " << e.what() << '\n';
    RunResult r;
    r.exit_code = kExitValidation;
    r.errors.push_back({"validate", e.code(), e.what()});
    return r;
  }
  auto r = p->run();
  if (log) {
    for (const auto& e : r.errors) *log << e.stage << " failed: " << e.message << '\n';
  }
  return r;
}

// ---------------------------------------------------------------------------
// Consolidated report

inline const std::vector<std::string> kReportSections = {"synth",  "eval",    "label", "rdd",   "diagnostics",
                                                         "compare", "models", "indep", "usage"};

struct Report {
  json merged;
  std::string summary;
};

namespace detail {

inline std::string fmt(double v, int prec = 4) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(prec);
  ss << v;
  return ss.str();
}

inline std::string fmt(const json& v, int prec = 4) {
  if (v.is_number()) return fmt(v.get<double>(), prec);
  if (v.is_null()) return "undefined";
  return v.dump();
}

inline std::string fmt_interval(const json& v) {
  if (!v.is_array()) return "undefined";
  return "(" + fmt(v[0]) + ", " + fmt(v[1]) + ")";
}

// Correlation of per-district visit fractions with each district covariate.
inline json usage_correlations(const json& usage) {
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> cols;
  for (const auto& d : usage.at("districts")) {
    if (!d.contains("covariates")) continue;
    for (const auto& [name, v] : d.at("covariates").items()) {
      cols[name].first.push_back(d.at("visit_fraction").get<double>());
      cols[name].second.push_back(v.get<double>());
    }
  }
  json out = json::object();
  for (const auto& [name, xy] : cols) out[name] = pearson(xy.first, xy.second);
  return out;
}

inline std::string summarize(const json& m) {
  std::ostringstream s;
  auto has = [&](const char* k) { return m.contains(k); };
  s << "EWS lab report\n";
  if (has("synth")) {
    const auto& j = m["synth"];
    s << "\n== Cohort ==\n"
      << "students: " << j["n_students"] << "\n"
      << "realized graduation rate: " << fmt(j["realized_grad_rate"]) << "\n"
      << "schools with math variance below statewide: " << fmt(j["variance_comparison"]["math_z"]["fraction"])
      << "\n";
  }
  if (has("eval") || has("label")) {
    s << "\n== Accuracy of the risk scores ==\n";
    if (has("label")) {
      for (const char* c : {"low", "moderate", "high"}) {
        s << c << " risk share: " << fmt(m["label"]["counts"][c]["fraction"]) << "\n";
      }
    }
    if (has("eval")) {
      const auto& j = m["eval"];
      s << "AUC: " << fmt(j["auc"]) << "\n";
      for (const char* c : {"low", "moderate", "high"}) {
        s << c << " risk graduation rate: " << fmt(j["category_outcomes"][c]["rate"]) << "\n";
      }
      if (j.contains("subgroup_calibration")) {
        s << "subgroup calibration (" << j["subgroup_calibration"]["feature"].get<std::string>()
          << "): " << j["subgroup_calibration"]["dominance"].get<std::string>() << "\n";
      }
    }
  }
  if (has("rdd")) {
    const auto& j = m["rdd"];
    const auto& e = j["estimate"];
    s << "\n== Effect of the risk label ==\n"
      << "side: " << j["side"].get<std::string>() << "\n"
      << "tau_hat: " << fmt(e["tau_hat"]) << "  se: " << fmt(e["se"]) << "  p: " << fmt(e["p_value"]) << "\n"
      << "normal 95% CI: " << fmt_interval(e["ci_normal_95"]) << "\n"
      << "bootstrap 95% CI: " << fmt_interval(e["ci_boot_95"]) << "\n"
      << "bootstrap 75% CI: " << fmt_interval(e["ci_boot_75"]) << "\n"
      << "n in bandwidth: " << e["n_in_bandwidth"] << "\n";
    if (j.contains("bandwidth_sweep")) {
      for (const auto& b : j["bandwidth_sweep"]) {
        s << "  h=" << fmt(b["h"], 3) << ": ";
        if (b["estimate"].is_null()) s << "failed (" << b["error"]["code"].get<std::string>() << ")\n";
        else s << "tau_hat " << fmt(b["estimate"]["tau_hat"]) << ", n " << b["estimate"]["n_in_bandwidth"] << "\n";
      }
    }
  }
  if (has("diagnostics")) {
    const auto& d = m["diagnostics"]["density"];
    s << "\n== RDD diagnostics ==\n"
      << "left/right n: " << d["left_n"] << "/" << d["right_n"] << "  chi2 p: " << fmt(d["chi2_pvalue"]) << "\n";
    double worst = 0;
    for (const auto& b : m["diagnostics"]["balance"]) worst = std::max(worst, std::fabs(b["smd"].get<double>()));
    s << "max |SMD|: " << fmt(worst) << "\n";
  }
  if (has("compare")) {
    const auto& c = m["compare"]["compare"];
    s << "\n== Environmental targeting ==\n"
      << "budget: " << fmt(c["budget_fraction"], 2) << " (" << c["budget_size"] << " students)\n"
      << "graduation rate, env bottom set: " << fmt(c["env_bottom_rate"]) << "\n"
      << "graduation rate, ind bottom set: " << fmt(c["ind_bottom_rate"]) << "\n"
      << "overlap (Jaccard): " << fmt(c["overlap_jaccard"]) << "\n"
      << "env-flagged with high individual score: " << fmt(c["env_flagged_with_high_ind_score"]) << "\n"
      << "not env-flagged with low individual score: " << fmt(c["unflagged_low_ind_score"]) << "\n";
    for (const auto& row : m["compare"]["aggregate_impact"]) {
      s << "  tau=" << fmt(row["tau"], 2) << ": env " << fmt(row["environmental"]["expected_extra_graduates"], 2)
        << ", ind " << fmt(row["individual"]["expected_extra_graduates"], 2) << "\n";
    }
  }
  if (has("models")) {
    const auto& c = m["models"]["comparison"];
    s << "\n== Environmental vs individual predictors ==\n";
    for (const char* k : {"squared", "log", "zero_one", "auc"}) {
      s << k << ": env " << fmt(c["base"][k]["value"]) << ", all " << fmt(c["augmented"][k]["value"])
        << ", relative improvement " << fmt(c["relative_delta"][k]) << "\n";
    }
  }
  if (has("indep")) {
    const auto& j = m["indep"];
    s << "\n== Predicting from predictions ==\n";
    for (const char* k : {"squared", "log", "zero_one"}) {
      s << k << " delta: " << fmt(j["delta"][k]["value"], 5) << " " << fmt_interval(j["delta"][k]["ci95"]) << "\n";
    }
    s << "verdict: " << j["verdict"].get<std::string>() << "\n"
      << "note: " << j["caveat"].get<std::string>() << "\n";
  }
  if (has("usage")) {
    s << "\n== Portal usage ==\n";
    for (const auto& y : m["usage"]["years"]) {
      s << y["year"] << ": raw " << fmt(y["raw_fraction"]) << ", weighted " << fmt(y["weighted_fraction"]) << "\n";
    }
    if (m["usage"].contains("correlations")) {
      for (const auto& [k, v] : m["usage"]["correlations"].items()) s << "  corr with " << k << ": " << fmt(v) << "\n";
    }
  }
  return s.str();
}

}  // namespace detail

inline Report build_report(const std::string& dir) {
  fs::path d(dir);
  if (!fs::is_directory(d)) throw Error(ErrorCode::kIo, dir + " is not a directory");
  if (fs::exists(d / "artifacts.json")) {
    auto art = io::read_json((d / "artifacts.json").string());
    for (const auto& [name, digest] : art.at("sha256").items()) {
      auto p = d / name;
      if (!fs::exists(p)) throw Error(ErrorCode::kCorruptArtifact, name + " is listed but missing");
      if (sha256_file(p.string()) != digest.get<std::string>()) {
        throw Error(ErrorCode::kCorruptArtifact, name + " does not match its recorded digest");
      }
    }
  }
  Report r;
  r.merged = json::object();
  json sections = json::object();
  for (const auto& name : kReportSections) {
    auto p = d / (name + ".json");
    if (fs::exists(p)) sections[name] = io::read_json(p.string());
  }
  if (sections.empty()) throw Error(ErrorCode::kEmptyInput, dir + " holds no stage outputs");
  if (sections.contains("usage")) sections["usage"]["correlations"] = detail::usage_correlations(sections["usage"]);
  if (fs::exists(d / "errors.json")) r.merged["errors"] = io::read_json((d / "errors.json").string())["errors"];
  r.merged["sections"] = sections;
  r.summary = detail::summarize(sections);
  return r;
}

}  // namespace ewslab::pipeline
