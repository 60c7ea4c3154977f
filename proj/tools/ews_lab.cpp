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

// ews-lab: command-line front end.
//
// Exit status: 0 success, 2 invalid input or configuration, 3 estimation
// failure (insufficient support, singular design, one-class data), 1 other.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ewslab/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ewslab;

namespace {

struct Invocation {
  std::string command;
  std::vector<std::pair<std::string, std::string>> args;  // recorded in the manifest digest
  std::map<std::string, std::string> inputs;
  std::uint64_t seed = 0;

  void arg(const std::string& k, const std::string& v) { args.emplace_back(k, v); }
  void input(const std::string& k, const std::string& path) {
    arg(k, path);
    inputs[k] = path;
  }

  pipeline::RunManifest manifest() const {
    pipeline::RunManifest m;
    m.command = command;
    m.seed = seed;
    json a = json::array();
    for (const auto& [k, v] : args) a.push_back({k, v});
    m.config_digest = sha256_hex(a.dump());
    for (const auto& [k, p] : inputs) m.input_digests[k] = sha256_file(p);
    return m;
  }

  void write(const std::string& path, json body) const {
    body["run"] = manifest().to_json();
    io::write_json(path, body);
  }
};

std::string default_manifest(const std::string& cohort) {
  return (fs::path(cohort).parent_path() / "manifest.json").string();
}

Cohort load(Invocation& inv, const std::string& key, const std::string& path, const std::string& manifest,
            bool need_outcomes) {
  std::string m = manifest.empty() ? default_manifest(path) : manifest;
  inv.input(key, path);
  inv.input(key + "_manifest", m);
  LoadOptions opts;
  opts.require_outcome = need_outcomes;
  auto c = load_cohort(m, path, opts);
  if (need_outcomes && !c.has_all_outcomes()) throw Error(ErrorCode::kMissingOutcome, path + " lacks outcomes");
  return c;
}

std::vector<int> aligned_outcomes(Invocation& inv, const std::string& path, std::span<const std::string> ids) {
  inv.input("outcomes", path);
  auto o = io::read_outcomes(path);
  return io::align<int>(o.ids, o.y, ids, "outcomes");
}

ModelSpec load_spec(Invocation& inv, const std::string& path) {
  if (path.empty()) return ModelSpec{};
  inv.input("spec", path);
  try {
    return ModelSpec::from_json(io::read_json(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, path + ": " + e.what());
  }
}

std::string sibling(const std::string& out, const std::string& name) {
  return (fs::path(out).parent_path() / name).string();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Early-warning-system analysis lab"};
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);
  Invocation inv;
  std::function<void()> action;

  // synth
  std::string synth_config, synth_out, synth_truth, synth_manifest_out, synth_prior_out;
  double synth_noise = HistoryConfig{}.logit_noise, synth_t_star = 0.785, synth_error = 0.03;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort with ground truth");
  synth->add_option("--config", synth_config, "SynthConfig JSON (defaults when omitted)");
  synth->add_option("--out", synth_out, "Cohort CSV")->required();
  synth->add_option("--truth", synth_truth, "Ground-truth CSV")->required();
  synth->add_option("--manifest-out", synth_manifest_out, "Feature manifest JSON (default: next to --out)");
  synth->add_option("--prior-out", synth_prior_out,
                    "Also simulate a legacy scorer; writes its scores and realizes outcomes under its labels");
  synth->add_option("--logit-noise", synth_noise, "Legacy score logit noise sd");
  synth->add_option("--t-star", synth_t_star, "Threshold for the simulated labels");
  synth->add_option("--error", synth_error, "Band half-width for the simulated labels");
  synth->callback([&] {
    action = [&] {
      SynthConfig cfg;
      if (!synth_config.empty()) {
        inv.input("config", synth_config);
        cfg = SynthConfig::from_json(io::read_json(synth_config));
      }
      inv.command = "synth";
      inv.seed = cfg.seed;
      std::string mpath = synth_manifest_out.empty() ? default_manifest(synth_out) : synth_manifest_out;
      if (synth_prior_out.empty()) {
        auto sc = generate(cfg);
        sc.cohort.manifest().save(mpath);
        write_cohort(sc.cohort, synth_out);
        write_truth(sc.truth, synth_truth);
      } else {
        HistoryConfig hc{cfg, EwsConfig{synth_t_star, synth_error}, synth_noise};
        auto h = simulate_history(hc);
        h.synth.cohort.manifest().save(mpath);
        write_cohort(h.synth.cohort, synth_out);
        write_truth(h.synth.truth, synth_truth);
        io::write_scores(synth_prior_out, h.synth.cohort.student_ids(), h.prior.scores);
      }
    };
  });

  // train
  std::string train_spec, train_data, train_manifest, train_model_out;
  auto* trn = app.add_subcommand("train", "Train a graduation-probability model");
  trn->add_option("--spec", train_spec, "ModelSpec JSON");
  trn->add_option("--train", train_data, "Training cohort CSV")->required();
  trn->add_option("--manifest", train_manifest, "Feature manifest (default: next to the cohort)");
  trn->add_option("--model-out", train_model_out, "Model file")->required();
  trn->callback([&] {
    action = [&] {
      inv.command = "train";
      auto spec = load_spec(inv, train_spec);
      auto c = load(inv, "train", train_data, train_manifest, true);
      train(spec, c).save(train_model_out);
    };
  });

  // score
  std::string score_model, score_cohort, score_manifest, score_out;
  auto* score = app.add_subcommand("score", "Score a cohort with a trained model");
  score->add_option("--model", score_model)->required();
  score->add_option("--cohort", score_cohort)->required();
  score->add_option("--manifest", score_manifest);
  score->add_option("--out", score_out, "Scores CSV (student_id,score)")->required();
  score->callback([&] {
    action = [&] {
      inv.command = "score";
      auto m = TrainedModel::load(score_model);
      auto c = load(inv, "cohort", score_cohort, score_manifest, false);
      io::write_scores(score_out, c.student_ids(), m.predict(c));
    };
  });

  // label
  std::string label_scores, label_out, label_summary;
  double label_t = 0.785, label_e = 0.03;
  auto* label = app.add_subcommand("label", "Band scores into risk categories");
  label->add_option("--scores", label_scores)->required();
  label->add_option("--t-star", label_t);
  label->add_option("--error", label_e);
  label->add_option("--out", label_out, "Bands CSV")->required();
  label->add_option("--summary", label_summary, "Category counts JSON");
  label->callback([&] {
    action = [&] {
      inv.command = "label";
      inv.input("scores", label_scores);
      inv.arg("t_star", csv::format_double(label_t));
      inv.arg("error", csv::format_double(label_e));
      EwsConfig cfg{label_t, label_e};
      cfg.validate();
      auto kv = io::read_scores(label_scores);
      for (double p : kv.values) {
        if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "scores must lie in [0,1]");
      }
      auto b = band_cohort(kv.values, cfg);
      io::write_bands(label_out, kv.ids, b.bands);
      if (!label_summary.empty()) inv.write(label_summary, {{"counts", io::to_json(b)}});
    };
  });

  // eval
  std::string eval_scores, eval_outcomes, eval_out, eval_curves;
  std::size_t eval_bins = kDefaultCalibrationBins;
  auto* ev = app.add_subcommand("eval", "Calibration and ROC of a score vector");
  ev->add_option("--scores", eval_scores)->required();
  ev->add_option("--outcomes", eval_outcomes, "CSV with student_id,outcome")->required();
  ev->add_option("--out", eval_out, "Report JSON")->required();
  ev->add_option("--bins", eval_bins);
  ev->add_option("--curves-prefix", eval_curves, "Prefix for calibration.csv / roc.csv (default: next to --out)");
  ev->callback([&] {
    action = [&] {
      inv.command = "eval";
      inv.input("scores", eval_scores);
      inv.arg("bins", std::to_string(eval_bins));
      auto kv = io::read_scores(eval_scores);
      auto y = aligned_outcomes(inv, eval_outcomes, kv.ids);
      auto cal = calibration(kv.values, y, eval_bins);
      auto curve = roc(kv.values, y);
      std::string prefix = eval_curves.empty() ? sibling(eval_out, "") : eval_curves;
      io::write_calibration_csv(prefix + "calibration.csv", cal);
      io::write_roc_csv(prefix + "roc.csv", curve);
      inv.write(eval_out, {{"n", y.size()}, {"auc", curve.auc}, {"calibration", io::to_json(cal)}});
    };
  });

  // rdd
  std::string rdd_bands, rdd_outcomes, rdd_out, rdd_side = "upper", rdd_cohort, rdd_manifest;
  double rdd_h = 0.01, rdd_t_star = 0.785;
  std::size_t rdd_boot = 10000, rdd_k = 5;
  std::uint64_t rdd_seed = 0;
  auto* rd = app.add_subcommand("rdd", "Sharp RDD estimate of the label effect");
  rd->set_help_flag("--help", "Print this help message and exit");
  rd->add_option("--bands", rdd_bands)->required();
  rd->add_option("--outcomes", rdd_outcomes)->required();
  rd->add_option("--side", rdd_side, "upper (moderate->high) or lower (low->moderate)");
  rd->add_option("--t-star", rdd_t_star, "Cutoff the bands were labelled at");
  rd->add_option("--h", rdd_h);
  rd->add_option("--boot", rdd_boot);
  rd->add_option("--seed", rdd_seed);
  rd->add_option("--k", rdd_k, "Density sub-bins per side");
  rd->add_option("--cohort", rdd_cohort, "Cohort CSV for covariate balance");
  rd->add_option("--manifest", rdd_manifest);
  rd->add_option("--out", rdd_out)->required();
  rd->callback([&] {
    action = [&] {
      inv.command = "rdd";
      inv.seed = rdd_seed;
      inv.input("bands", rdd_bands);
      for (auto [k, v] : {std::pair<std::string, std::string>{"side", rdd_side},
                          {"t_star", csv::format_double(rdd_t_star)}, {"h", csv::format_double(rdd_h)},
                          {"boot", std::to_string(rdd_boot)}, {"k", std::to_string(rdd_k)}}) {
        inv.arg(k, v);
      }
      auto side = parse_side(rdd_side);
      auto bands = io::read_bands(rdd_bands);
      auto y = aligned_outcomes(inv, rdd_outcomes, bands.ids);
      RddConfig cfg{rdd_t_star, rdd_h, side, rdd_boot, rdd_seed};
      std::vector<double> running;
      for (const auto& b : bands.bands) running.push_back(side == RddSide::kUpperScore ? b.upper : b.lower);
      auto est = estimate(running, y, cfg);
      std::vector<NamedColumn> cols;
      if (!rdd_cohort.empty()) {
        auto c = load(inv, "cohort", rdd_cohort, rdd_manifest, false);
        auto ids = c.student_ids();
        for (const auto& f : c.manifest().entries()) {
          if (f.vtype == ValueType::kCategorical) continue;
          auto v = c.numeric(f.name);
          cols.push_back({f.name, io::align<double>(ids, v, bands.ids, "cohort")});
        }
      }
      inv.write(rdd_out, {{"side", rdd_side},
                          {"t_star", cfg.t_star},
                          {"estimate", io::to_json(est)},
                          {"diagnostics", io::to_json(diagnostics(running, cols, cfg, rdd_k))}});
    };
  });

  // target
  std::string tg_env, tg_ind, tg_cohort, tg_manifest, tg_out, tg_quantiles, tg_truth;
  CompareOptions tg_opt;
  std::vector<double> tg_taus = {-0.02, 0.0, 0.05, 0.12};
  auto* tg = app.add_subcommand("target", "Environmental vs individual targeting comparison");
  tg->add_option("--env", tg_env)->required();
  tg->add_option("--ind", tg_ind)->required();
  tg->add_option("--cohort", tg_cohort, "Cohort CSV with outcomes")->required();
  tg->add_option("--manifest", tg_manifest);
  tg->add_option("--budget", tg_opt.budget_fraction);
  tg->add_option("--safe-cutoff", tg_opt.safe_cutoff);
  tg->add_option("--need-cutoff", tg_opt.need_cutoff);
  tg->add_option("--truth", tg_truth, "Ground truth CSV for aggregate impact (default: individual scores)");
  tg->add_option("--tau", tg_taus, "Effect sizes for aggregate impact");
  tg->add_option("--out", tg_out)->required();
  tg->add_option("--quantiles", tg_quantiles, "Quantile plot CSV (default: quantiles.csv next to --out)");
  tg->callback([&] {
    action = [&] {
      inv.command = "target";
      inv.input("env", tg_env);
      inv.input("ind", tg_ind);
      inv.arg("budget", csv::format_double(tg_opt.budget_fraction));
      inv.arg("safe_cutoff", csv::format_double(tg_opt.safe_cutoff));
      inv.arg("need_cutoff", csv::format_double(tg_opt.need_cutoff));
      auto c = load(inv, "cohort", tg_cohort, tg_manifest, true);
      auto ids = c.student_ids();
      auto e = io::read_scores(tg_env), i = io::read_scores(tg_ind);
      auto pe = io::align<double>(e.ids, e.values, ids, "env scores");
      auto pi = io::align<double>(i.ids, i.values, ids, "ind scores");
      auto report = compare(pe, pi, c, tg_opt);
      auto base = pi;
      std::string source = "individual_model";
      if (!tg_truth.empty()) {
        inv.input("truth", tg_truth);
        auto kv = io::read_keyed(tg_truth, {"base_prob"});
        base = io::align<double>(kv.ids, kv.values, ids, "truth", true);
        source = "ground_truth";
      }
      json impact = json::array();
      for (double tau : tg_taus) {
        impact.push_back({{"tau", tau},
                          {"environmental", io::to_json(aggregate_impact(base, report.env_set, tau))},
                          {"individual", io::to_json(aggregate_impact(base, report.ind_set, tau))}});
      }
      io::write_quantiles_csv(tg_quantiles.empty() ? sibling(tg_out, "quantiles.csv") : tg_quantiles,
                              quantile_profile(pe, c), quantile_profile(pi, c));
      inv.write(tg_out, {{"compare", io::to_json(report)}, {"impact_base", source}, {"aggregate_impact", impact}});
    };
  });

  // indep
  std::string in_train, in_test, in_prior, in_spec, in_manifest, in_out;
  std::size_t in_boot = 1000;
  std::uint64_t in_seed = 0;
  auto* ind = app.add_subcommand("indep", "Prediction-outcome independence test");
  ind->add_option("--train", in_train)->required();
  ind->add_option("--test", in_test)->required();
  ind->add_option("--prior", in_prior, "Bands CSV of the prior system output")->required();
  ind->add_option("--spec", in_spec);
  ind->add_option("--manifest", in_manifest);
  ind->add_option("--boot", in_boot);
  ind->add_option("--seed", in_seed);
  ind->add_option("--out", in_out)->required();
  ind->callback([&] {
    action = [&] {
      inv.command = "indep";
      inv.seed = in_seed;
      inv.arg("boot", std::to_string(in_boot));
      auto spec = load_spec(inv, in_spec);
      auto tr = load(inv, "train", in_train, in_manifest, true);
      auto te = load(inv, "test", in_test, in_manifest, true);
      inv.input("prior", in_prior);
      auto bands = io::read_bands(in_prior);
      auto prior = bands.prior();
      auto prior_for = [&](const Cohort& c) {
        auto ids = c.student_ids();
        return PriorOutputs{io::align<double>(bands.ids, prior.scores, ids, "prior", true),
                            io::align<RiskCategory>(bands.ids, prior.categories, ids, "prior", true)};
      };
      auto r = run_indep(tr, te, prior_for(tr), prior_for(te), spec, in_boot, in_seed);
      auto j = io::to_json(r);
      j["spec"] = spec.to_json();
      inv.write(in_out, j);
    };
  });

  // usage
  std::string us_log, us_out;
  auto* us = app.add_subcommand("usage", "Raw and enrollment-weighted portal usage per year");
  us->add_option("--log", us_log, "Visit-log CSV")->required();
  us->add_option("--out", us_out)->required();
  us->callback([&] {
    action = [&] {
      inv.command = "usage";
      inv.input("log", us_log);
      auto log = load_visit_log(us_log);
      json districts = json::array();
      for (const auto& [id, f] : district_visit_fraction(log)) {
        districts.push_back({{"district_id", id}, {"visit_fraction", f}});
      }
      inv.write(us_out, {{"years", io::to_json(usage_weighted_visits(log))}, {"districts", districts}});
    };
  });

  // pipeline
  std::string pl_config, pl_out;
  auto* pl = app.add_subcommand("pipeline", "Run the configured stages into an artifact directory");
  pl->add_option("--config", pl_config)->required();
  pl->add_option("--out", pl_out, "Artifact directory")->required();

  // report
  std::string rp_dir, rp_out, rp_summary;
  auto* rp = app.add_subcommand("report", "Consolidated JSON and text summary of an artifact directory");
  rp->add_option("--dir", rp_dir)->required();
  rp->add_option("--out", rp_out, "Report JSON (default: <dir>/report.json)");
  rp->add_option("--summary", rp_summary, "Summary text (default: <dir>/summary.txt)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : pipeline::kExitValidation;
  }

  if (pl->parsed()) {
    auto r = pipeline::run_pipeline(pl_config, pl_out, &std::cerr);
    return r.exit_code;
  }
  if (rp->parsed()) {
    try {
      auto r = pipeline::build_report(rp_dir);
      io::write_json(rp_out.empty() ? (fs::path(rp_dir) / "report.json").string() : rp_out, r.merged);
      auto path = rp_summary.empty() ? (fs::path(rp_dir) / "summary.txt").string() : rp_summary;
      std::ofstream(path, std::ios::binary) << r.summary;
      std::cout << r.summary;
      return 0;
    } catch (const Error& e) {
      std::cerr << "report failed: " << e.what() << '\n';
      return pipeline::kExitValidation;
    }
  }
  try {
    action();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return is_estimation_error(e.code()) ? pipeline::kExitEstimation : pipeline::kExitValidation;
  } catch (const json::exception& e) {
    std::cerr << "error: malformed JSON input: " << e.what() << '\n';
    return pipeline::kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return pipeline::kExitFailure;
  }
  return 0;
}
