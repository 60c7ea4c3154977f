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

// Probability-of-graduation models over any feature partition: l2-regularized
// logistic regression and gradient-boosted regression trees on the logistic
// loss, plus loss reports and partition comparisons.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "ewslab/bootstrap.hpp"
#include "ewslab/dataset.hpp"
#include "ewslab/error.hpp"
#include "ewslab/metrics.hpp"
#include "ewslab/stats.hpp"

namespace ewslab {

enum class Algorithm { kLogisticRegression, kGradientBoostedTrees };

inline std::string_view to_string(Algorithm a) {
  return a == Algorithm::kLogisticRegression ? "logistic_regression" : "gradient_boosted_trees";
}

struct Hyperparams {
  std::size_t rounds = 200;
  std::size_t max_depth = 3;
  double learning_rate = 0.1;
  double l2 = 1.0;

  bool operator==(const Hyperparams&) const = default;
};

struct ModelSpec {
  Algorithm algorithm = Algorithm::kGradientBoostedTrees;
  PartitionSelector partition = PartitionSelector::all();
  Hyperparams hyperparams;
  std::uint64_t seed = 0;

  bool operator==(const ModelSpec&) const = default;

  void validate() const {
    if (algorithm == Algorithm::kGradientBoostedTrees) {
      if (hyperparams.rounds < 1) throw Error(ErrorCode::kInvalidArgument, "rounds must be >= 1");
      if (hyperparams.max_depth < 1 || hyperparams.max_depth > 8) {
        throw Error(ErrorCode::kInvalidArgument, "max_depth must lie in [1,8]");
      }
      if (!(hyperparams.learning_rate > 0.0 && hyperparams.learning_rate <= 1.0)) {
        throw Error(ErrorCode::kInvalidArgument, "learning_rate must lie in (0,1]");
      }
    }
    if (!(hyperparams.l2 >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "l2 must be >= 0");
  }

  nlohmann::json to_json() const {
    return {{"algorithm", std::string(to_string(algorithm))},
            {"partition", partition.to_json()},
            {"rounds", hyperparams.rounds},
            {"max_depth", hyperparams.max_depth},
            {"learning_rate", hyperparams.learning_rate},
            {"l2", hyperparams.l2},
            {"seed", seed}};
  }

  static ModelSpec from_json(const nlohmann::json& j) {
    ModelSpec s;
    if (j.contains("algorithm")) {
      auto a = j.at("algorithm").get<std::string>();
      if (a == "logistic_regression" || a == "logistic") {
        s.algorithm = Algorithm::kLogisticRegression;
      } else if (a == "gradient_boosted_trees" || a == "gbt") {
        s.algorithm = Algorithm::kGradientBoostedTrees;
      } else {
        throw Error(ErrorCode::kInvalidArgument, "unknown algorithm '" + a + "'");
      }
    }
    if (j.contains("partition")) s.partition = PartitionSelector::from_json(j.at("partition"));
    if (j.contains("rounds")) s.hyperparams.rounds = j.at("rounds").get<std::size_t>();
    if (j.contains("max_depth")) s.hyperparams.max_depth = j.at("max_depth").get<std::size_t>();
    if (j.contains("learning_rate")) s.hyperparams.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("l2")) s.hyperparams.l2 = j.at("l2").get<double>();
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    s.validate();
    return s;
  }
};

// ---------------------------------------------------------------------------
// Fitted parameter sets

struct ConstantParams {
  double prob = 0.5;
};

struct LogisticParams {
  std::vector<double> center;
  std::vector<double> scale;  // 0 marks a constant (dropped) column
  std::vector<double> coef;   // on the standardized scale
  double intercept = 0;

  double raw(std::span<const double> x) const {
    double z = intercept;
    for (std::size_t j = 0; j < coef.size(); ++j) {
      if (scale[j] > 0) z += coef[j] * (x[j] - center[j]) / scale[j];
    }
    return z;
  }
};

struct RegressionTree {
  struct Node {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0;       // x <= threshold goes left
    std::int32_t left = -1;
    std::int32_t right = -1;
    double value = 0;
  };
  std::vector<Node> nodes;

  double eval(std::span<const double> x) const {
    std::int32_t k = 0;
    while (nodes[k].feature >= 0) {
      k = x[nodes[k].feature] <= nodes[k].threshold ? nodes[k].left : nodes[k].right;
    }
    return nodes[k].value;
  }
};

struct BoostedTreesParams {
  double base_score = 0;  // initial log-odds
  double learning_rate = 0.1;
  std::vector<RegressionTree> trees;

  double raw(std::span<const double> x) const {
    double z = base_score;
    for (const auto& t : trees) z += learning_rate * t.eval(x);
    return z;
  }
};

using ModelParams = std::variant<ConstantParams, LogisticParams, BoostedTreesParams>;

struct FittedModel {
  ModelParams params;
  bool degenerate = false;  // all training labels identical

  double predict_row(std::span<const double> x) const {
    return std::visit(
        [&](const auto& p) -> double {
          using P = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<P, ConstantParams>) {
            return clamp_prob(p.prob);
          } else {
            return clamp_prob(logistic(p.raw(x)));
          }
        },
        params);
  }

  std::vector<double> predict(const FeatureMatrix& x) const {
    std::vector<double> out(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) out[r] = predict_row(x.row(r));
    return out;
  }
};

// ---------------------------------------------------------------------------
// Losses

inline double squared_loss(std::span<const double> p, std::span<const int> y) {
  check_lengths(p.size(), y.size(), "squared_loss");
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - y[i]) * (p[i] - y[i]);
  return s / static_cast<double>(p.size());
}

inline double log_loss(std::span<const double> p, std::span<const int> y) {
  check_lengths(p.size(), y.size(), "log_loss");
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    double q = clamp_prob(p[i]);
    s -= y[i] == 1 ? std::log(q) : std::log1p(-q);
  }
  return s / static_cast<double>(p.size());
}

inline constexpr double kDecisionThreshold = 0.5;

inline double zero_one_loss(std::span<const double> p, std::span<const int> y) {
  check_lengths(p.size(), y.size(), "zero_one_loss");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    int guess = p[i] >= kDecisionThreshold ? 1 : 0;
    wrong += guess != y[i];
  }
  return static_cast<double>(wrong) / static_cast<double>(p.size());
}

// ---------------------------------------------------------------------------
// Logistic regression: Newton's method on
//   mean log loss + l2 / (2 n) * ||beta||^2
// over standardized columns, intercept unpenalized.

namespace learner_detail {

inline FittedModel constant_model(std::span<const int> y) {
  double rate = static_cast<double>(std::count(y.begin(), y.end(), 1)) / static_cast<double>(y.size());
  return {ConstantParams{clamp_prob(rate)}, true};
}

inline bool degenerate(std::span<const int> y) {
  return std::all_of(y.begin(), y.end(), [&](int v) { return v == y.front(); });
}

}  // namespace learner_detail

struct LogisticFitInfo {
  std::size_t iterations = 0;
  double gradient_norm = 0;
  double objective = 0;
};

inline FittedModel fit_logistic(const FeatureMatrix& x, std::span<const int> y, double l2,
                                LogisticFitInfo* info = nullptr) {
  check_lengths(x.rows, y.size(), "fit_logistic");
  if (learner_detail::degenerate(y)) return learner_detail::constant_model(y);
  const std::size_t n = x.rows, d = x.cols;
  const double nd = static_cast<double>(n);

  LogisticParams p;
  p.center.assign(d, 0.0);
  p.scale.assign(d, 0.0);
  p.coef.assign(d, 0.0);
  std::vector<std::size_t> active;
  for (std::size_t j = 0; j < d; ++j) {
    auto col = x.column(j);
    p.center[j] = mean(col);
    double sd = std::sqrt(population_variance(col));
    if (sd > 1e-12 * std::max(1.0, std::fabs(p.center[j]))) {
      p.scale[j] = sd;
      active.push_back(j);
    }
  }
  const std::size_t k = active.size();
  Eigen::MatrixXd z(n, k + 1);
  for (std::size_t r = 0; r < n; ++r) {
    z(r, 0) = 1.0;
    for (std::size_t a = 0; a < k; ++a) {
      std::size_t j = active[a];
      z(r, a + 1) = (x(r, j) - p.center[j]) / p.scale[j];
    }
  }
  Eigen::VectorXd yv(n);
  for (std::size_t r = 0; r < n; ++r) yv(r) = y[r];

  Eigen::VectorXd w = Eigen::VectorXd::Zero(k + 1);
  double ybar = yv.mean();
  w(0) = logit(ybar);
  Eigen::VectorXd pen = Eigen::VectorXd::Constant(k + 1, l2 / nd);
  pen(0) = 0.0;

  auto objective = [&](const Eigen::VectorXd& beta) {
    Eigen::VectorXd eta = z * beta;
    double s = 0;
    for (std::size_t r = 0; r < n; ++r) {
      // log(1 + e^eta) - y * eta, computed stably
      double e = eta(r);
      s += (e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e))) - yv(r) * e;
    }
    return s / nd + 0.5 * beta.cwiseProduct(pen).dot(beta);
  };

  double f = objective(w);
  std::size_t it = 0;
  double gnorm = std::numeric_limits<double>::infinity();
  for (; it < 200; ++it) {
    Eigen::VectorXd eta = z * w;
    Eigen::VectorXd prob(n), weight(n);
    for (std::size_t r = 0; r < n; ++r) {
      prob(r) = logistic(eta(r));
      weight(r) = prob(r) * (1.0 - prob(r));
    }
    Eigen::VectorXd grad = z.transpose() * (prob - yv) / nd + pen.cwiseProduct(w);
    gnorm = grad.lpNorm<Eigen::Infinity>();
    if (gnorm <= 1e-8) break;
    Eigen::MatrixXd hess = z.transpose() * weight.asDiagonal() * z / nd;
    hess.diagonal() += pen;
    hess.diagonal().array() += 1e-12;
    Eigen::VectorXd step = hess.ldlt().solve(grad);
    double t = 1.0;
    Eigen::VectorXd next = w - step;
    double fn = objective(next);
    while (fn > f + 1e-4 * t * grad.dot(-step) && t > 1e-10) {
      t *= 0.5;
      next = w - t * step;
      fn = objective(next);
    }
    if (!(fn <= f)) break;  // no further progress at machine precision
    w = next;
    f = fn;
  }

  p.intercept = w(0);
  for (std::size_t a = 0; a < k; ++a) p.coef[active[a]] = w(a + 1);
  if (info) *info = {it, gnorm, f};
  return {std::move(p), false};
}

// ---------------------------------------------------------------------------
// Gradient-boosted trees. Each round fits a depth-limited regression tree to
// the logistic-loss residuals y - p by exact greedy variance reduction over
// presorted columns; leaves take the Newton step sum(r) / (sum(p(1-p)) + l2).
// Candidate splits are scanned feature by feature in ascending value order and
// only a strictly larger gain replaces the incumbent, so ties go to the lower
// feature index and then the lower threshold.

inline FittedModel fit_boosted_trees(const FeatureMatrix& x, std::span<const int> y,
                                     const Hyperparams& hp) {
  check_lengths(x.rows, y.size(), "fit_boosted_trees");
  if (learner_detail::degenerate(y)) return learner_detail::constant_model(y);
  const std::size_t n = x.rows, d = x.cols;

  std::vector<std::vector<std::uint32_t>> sorted(d);
  for (std::size_t j = 0; j < d; ++j) {
    auto& s = sorted[j];
    s.resize(n);
    std::iota(s.begin(), s.end(), 0u);
    std::stable_sort(s.begin(), s.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return x(a, j) < x(b, j); });
  }

  BoostedTreesParams model;
  model.learning_rate = hp.learning_rate;
  double ybar = static_cast<double>(std::count(y.begin(), y.end(), 1)) / static_cast<double>(n);
  model.base_score = logit(ybar);

  std::vector<double> raw(n, model.base_score), resid(n), hess(n);
  std::vector<std::int32_t> node_of(n);

  struct Split {
    double gain = 1e-12;  // minimum useful gain
    std::int32_t feature = -1;
    double threshold = 0;
  };
  struct Accum {
    double sum = 0;
    double count = 0;
    double last = 0;
    bool has_last = false;
  };

  for (std::size_t round = 0; round < hp.rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      double p = logistic(raw[i]);
      resid[i] = y[i] - p;
      hess[i] = p * (1.0 - p);
    }
    RegressionTree tree;
    tree.nodes.emplace_back();
    std::fill(node_of.begin(), node_of.end(), 0);
    std::vector<std::int32_t> frontier = {0};

    for (std::size_t depth = 0; depth < hp.max_depth && !frontier.empty(); ++depth) {
      // slot of each frontier node, -1 for nodes not being split at this level
      std::vector<std::int32_t> slot(tree.nodes.size(), -1);
      for (std::size_t s = 0; s < frontier.size(); ++s) slot[frontier[s]] = static_cast<std::int32_t>(s);
      const std::size_t m = frontier.size();
      std::vector<double> tot_sum(m, 0.0), tot_cnt(m, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        auto s = slot[node_of[i]];
        if (s < 0) continue;
        tot_sum[s] += resid[i];
        tot_cnt[s] += 1.0;
      }
      std::vector<Split> best(m);
      std::vector<Accum> acc(m);
      for (std::size_t j = 0; j < d; ++j) {
        std::fill(acc.begin(), acc.end(), Accum{});
        for (std::uint32_t i : sorted[j]) {
          auto s = slot[node_of[i]];
          if (s < 0) continue;
          auto& a = acc[s];
          double v = x(i, j);
          if (a.has_last && v > a.last) {
            double rs = tot_sum[s] - a.sum, rc = tot_cnt[s] - a.count;
            double gain = a.sum * a.sum / a.count + rs * rs / rc - tot_sum[s] * tot_sum[s] / tot_cnt[s];
            if (gain > best[s].gain) best[s] = {gain, static_cast<std::int32_t>(j), a.last};
          }
          a.sum += resid[i];
          a.count += 1.0;
          a.last = v;
          a.has_last = true;
        }
      }
      std::vector<std::int32_t> next;
      for (std::size_t s = 0; s < m; ++s) {
        if (best[s].feature < 0) continue;
        auto parent = frontier[s];
        auto left = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        auto& node = tree.nodes[parent];
        node.feature = best[s].feature;
        node.threshold = best[s].threshold;
        node.left = left;
        node.right = left + 1;
        next.push_back(left);
        next.push_back(left + 1);
      }
      for (std::size_t i = 0; i < n; ++i) {
        const auto& node = tree.nodes[node_of[i]];
        if (node.feature < 0) continue;
        node_of[i] = x(i, node.feature) <= node.threshold ? node.left : node.right;
      }
      frontier = std::move(next);
    }

    std::vector<double> leaf_sum(tree.nodes.size(), 0.0), leaf_hess(tree.nodes.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      leaf_sum[node_of[i]] += resid[i];
      leaf_hess[node_of[i]] += hess[i];
    }
    for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
      auto& node = tree.nodes[k];
      if (node.feature >= 0) continue;
      double denom = leaf_hess[k] + hp.l2;
      node.value = denom > 0 ? leaf_sum[k] / denom : 0.0;
    }
    for (std::size_t i = 0; i < n; ++i) raw[i] += hp.learning_rate * tree.nodes[node_of[i]].value;
    model.trees.push_back(std::move(tree));
  }
  return {std::move(model), false};
}

inline FittedModel fit_matrix(const ModelSpec& spec, const FeatureMatrix& x, std::span<const int> y) {
  spec.validate();
  if (spec.algorithm == Algorithm::kLogisticRegression) {
    return fit_logistic(x, y, spec.hyperparams.l2);
  }
  return fit_boosted_trees(x, y, spec.hyperparams);
}

// ---------------------------------------------------------------------------
// Trained model bound to a feature schema

inline constexpr std::size_t kMinTrainingRecords = 100;

class TrainedModel {
 public:
  TrainedModel() = default;
  TrainedModel(ModelSpec spec, FeatureSchema schema, FittedModel fitted)
      : spec_(std::move(spec)), schema_(std::move(schema)), fitted_(std::move(fitted)) {}

  const ModelSpec& spec() const { return spec_; }
  const FeatureSchema& schema() const { return schema_; }
  const FittedModel& fitted() const { return fitted_; }
  std::uint64_t fingerprint() const { return schema_.fingerprint(); }
  bool degenerate() const { return fitted_.degenerate; }

  std::vector<double> predict(const FeatureMatrix& x) const {
    if (x.cols != schema_.width()) {
      throw Error(ErrorCode::kSchemaMismatch, "matrix has " + std::to_string(x.cols) +
                                                  " columns, model expects " +
                                                  std::to_string(schema_.width()));
    }
    return fitted_.predict(x);
  }

  // Schema-checked projection of a cohort.
  FeatureMatrix design(const Cohort& c) const {
    FeatureSchema probe;
    try {
      probe.features = select_features(c.manifest(), spec_.partition);
    } catch (const Error& e) {
      throw Error(ErrorCode::kSchemaMismatch, e.what());
    }
    probe.vocab.resize(probe.features.size());
    if (probe.fingerprint() != fingerprint()) {
      throw Error(ErrorCode::kSchemaMismatch, "cohort feature schema differs from the trained one");
    }
    return project(c, schema_);
  }

  std::vector<double> predict(const Cohort& c) const { return fitted_.predict(design(c)); }

  void save(const std::string& path) const;
  static TrainedModel load(const std::string& path);

 private:
  ModelSpec spec_;
  FeatureSchema schema_;
  FittedModel fitted_;
};

inline TrainedModel train(const ModelSpec& spec, const Cohort& cohort) {
  spec.validate();
  if (!cohort.has_all_outcomes()) {
    throw Error(ErrorCode::kMissingOutcome, "every training record needs an outcome");
  }
  if (cohort.size() < kMinTrainingRecords) {
    throw Error(ErrorCode::kInvalidArgument, "need at least " + std::to_string(kMinTrainingRecords) +
                                                 " training records");
  }
  auto schema = make_schema(cohort, spec.partition);
  auto x = project(cohort, schema);
  auto y = cohort.outcomes();
  return TrainedModel(spec, std::move(schema), fit_matrix(spec, x, y));
}

inline std::vector<double> predict(const TrainedModel& m, const Cohort& c) { return m.predict(c); }

// ---------------------------------------------------------------------------
// Binary model container:
//   "EWSLABM\0" | u32 version | u64 schema fingerprint | u64 len | JSON header
//   | u8 params tag | params payload
// Integers and doubles are stored in host (little-endian) byte order.

namespace model_io {

inline constexpr char kMagic[8] = {'E', 'W', 'S', 'L', 'A', 'B', 'M', '\0'};
inline constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void doubles(const std::vector<double>& v) {
    pod<std::uint64_t>(v.size());
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  void bytes(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in_) throw Error(ErrorCode::kCorruptArtifact, "truncated model file");
    return v;
  }
  std::uint64_t length() {
    auto n = pod<std::uint64_t>();
    if (n > (1ULL << 32)) throw Error(ErrorCode::kCorruptArtifact, "implausible length in model file");
    return n;
  }
  std::vector<double> doubles() {
    std::vector<double> v(length());
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!in_) throw Error(ErrorCode::kCorruptArtifact, "truncated model file");
    return v;
  }
  std::string bytes() {
    std::string s(length(), '\0');
    in_.read(s.data(), static_cast<std::streamsize>(s.size()));
    if (!in_) throw Error(ErrorCode::kCorruptArtifact, "truncated model file");
    return s;
  }

 private:
  std::istream& in_;
};

inline nlohmann::json schema_json(const FeatureSchema& s) {
  nlohmann::json features = nlohmann::json::array();
  for (std::size_t f = 0; f < s.features.size(); ++f) {
    features.push_back({{"name", s.features[f].name},
                        {"kind", std::string(to_string(s.features[f].kind))},
                        {"vtype", std::string(to_string(s.features[f].vtype))},
                        {"categories", s.vocab[f]}});
  }
  return features;
}

inline FeatureSchema schema_from_json(const nlohmann::json& j) {
  FeatureSchema s;
  auto manifest = FeatureManifest::from_json(j);
  s.features = manifest.entries();
  for (const auto& f : j) s.vocab.push_back(f.at("categories").get<std::vector<std::string>>());
  return s;
}

}  // namespace model_io

inline void TrainedModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  model_io::Writer w(out);
  out.write(model_io::kMagic, sizeof model_io::kMagic);
  w.pod(model_io::kVersion);
  w.pod<std::uint64_t>(fingerprint());
  nlohmann::json header = {{"spec", spec_.to_json()},
                           {"schema", model_io::schema_json(schema_)},
                           {"degenerate", fitted_.degenerate}};
  w.bytes(header.dump());
  w.pod<std::uint8_t>(static_cast<std::uint8_t>(fitted_.params.index()));
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, ConstantParams>) {
          w.pod(p.prob);
        } else if constexpr (std::is_same_v<P, LogisticParams>) {
          w.doubles(p.center);
          w.doubles(p.scale);
          w.doubles(p.coef);
          w.pod(p.intercept);
        } else {
          w.pod(p.base_score);
          w.pod(p.learning_rate);
          w.pod<std::uint64_t>(p.trees.size());
          for (const auto& t : p.trees) {
            w.pod<std::uint64_t>(t.nodes.size());
            for (const auto& node : t.nodes) {
              w.pod(node.feature);
              w.pod(node.threshold);
              w.pod(node.left);
              w.pod(node.right);
              w.pod(node.value);
            }
          }
        }
      },
      fitted_.params);
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path);
}

inline TrainedModel TrainedModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  char magic[8] = {};
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, model_io::kMagic, sizeof magic) != 0) {
    throw Error(ErrorCode::kCorruptArtifact, path + " is not a model file");
  }
  model_io::Reader r(in);
  auto version = r.pod<std::uint32_t>();
  if (version != model_io::kVersion) {
    throw Error(ErrorCode::kCorruptArtifact, "unsupported model version " + std::to_string(version));
  }
  auto fp = r.pod<std::uint64_t>();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.bytes());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorruptArtifact, e.what());
  }
  auto spec = ModelSpec::from_json(header.at("spec"));
  auto schema = model_io::schema_from_json(header.at("schema"));
  if (schema.fingerprint() != fp) throw Error(ErrorCode::kCorruptArtifact, "schema fingerprint mismatch");
  FittedModel fitted;
  fitted.degenerate = header.value("degenerate", false);
  switch (r.pod<std::uint8_t>()) {
    case 0: fitted.params = ConstantParams{r.pod<double>()}; break;
    case 1: {
      LogisticParams p;
      p.center = r.doubles();
      p.scale = r.doubles();
      p.coef = r.doubles();
      p.intercept = r.pod<double>();
      if (p.center.size() != schema.width() || p.scale.size() != p.center.size() ||
          p.coef.size() != p.center.size()) {
        throw Error(ErrorCode::kCorruptArtifact, "logistic parameters do not match schema");
      }
      fitted.params = std::move(p);
      break;
    }
    case 2: {
      BoostedTreesParams p;
      p.base_score = r.pod<double>();
      p.learning_rate = r.pod<double>();
      auto n_trees = r.length();
      p.trees.resize(n_trees);
      for (auto& t : p.trees) {
        t.nodes.resize(r.length());
        for (auto& node : t.nodes) {
          node.feature = r.pod<std::int32_t>();
          node.threshold = r.pod<double>();
          node.left = r.pod<std::int32_t>();
          node.right = r.pod<std::int32_t>();
          node.value = r.pod<double>();
          auto in_range = [&](std::int32_t k) {
            return k >= 0 && static_cast<std::size_t>(k) < t.nodes.size();
          };
          if (node.feature >= 0 && (static_cast<std::size_t>(node.feature) >= schema.width() ||
                                    !in_range(node.left) || !in_range(node.right))) {
            throw Error(ErrorCode::kCorruptArtifact, "tree node out of range");
          }
        }
        if (t.nodes.empty()) throw Error(ErrorCode::kCorruptArtifact, "empty tree");
      }
      fitted.params = std::move(p);
      break;
    }
    default: throw Error(ErrorCode::kCorruptArtifact, "unknown parameter block");
  }
  return TrainedModel(std::move(spec), std::move(schema), std::move(fitted));
}

// ---------------------------------------------------------------------------
// Loss reports

struct MetricEstimate {
  double value = 0;
  Interval ci;
};

struct LossReport {
  MetricEstimate squared;
  MetricEstimate log;
  MetricEstimate zero_one;
  MetricEstimate auc;
};

struct MetricValues {
  double squared = 0, log = 0, zero_one = 0, auc = 0;
};

inline MetricValues metric_values(std::span<const double> p, std::span<const int> y) {
  MetricValues m{squared_loss(p, y), log_loss(p, y), zero_one_loss(p, y),
                 std::numeric_limits<double>::quiet_NaN()};
  bool pos = std::find(y.begin(), y.end(), 1) != y.end();
  bool neg = std::find(y.begin(), y.end(), 0) != y.end();
  if (pos && neg) m.auc = auc_concordance(p, y);
  return m;
}

inline constexpr std::size_t kMinBootstrapReps = 1000;

struct PartitionComparison {
  LossReport base;
  LossReport augmented;
  // Improvement of augmented over base (base - aug for losses, aug - base for
  // AUC), with bootstrap CIs from the same resamples.
  LossReport absolute_delta;
  MetricValues relative_delta;
};

namespace learner_detail {

// Per-row losses plus a presorted order, so a bootstrap replicate reduces to
// a weighted pass with resample multiplicities as weights.
class ScoredRows {
 public:
  ScoredRows(std::span<const double> p, std::span<const int> y) : y_(y.begin(), y.end()) {
    const std::size_t n = p.size();
    sq_.resize(n);
    log_.resize(n);
    zo_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      double q = clamp_prob(p[i]);
      sq_[i] = (p[i] - y[i]) * (p[i] - y[i]);
      log_[i] = y[i] == 1 ? -std::log(q) : -std::log1p(-q);
      zo_[i] = (p[i] >= kDecisionThreshold ? 1 : 0) != y[i] ? 1.0 : 0.0;
    }
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), 0);
    std::sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
    group_end_.resize(n);
    for (std::size_t k = n; k-- > 0;) {
      group_end_[k] = (k + 1 < n && p[order_[k + 1]] == p[order_[k]]) ? group_end_[k + 1] : k + 1;
    }
  }

  // weights == empty means every row once.
  MetricValues values(std::span<const std::uint32_t> weights = {}) const {
    const std::size_t n = y_.size();
    auto w = [&](std::size_t i) { return weights.empty() ? 1.0 : static_cast<double>(weights[i]); };
    double total = 0, sq = 0, lg = 0, zo = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double wi = w(i);
      if (wi == 0) continue;
      total += wi;
      sq += wi * sq_[i];
      lg += wi * log_[i];
      zo += wi * zo_[i];
    }
    // Mann-Whitney with half credit for ties, walking ascending score groups.
    double neg_below = 0, pos_total = 0, concordant = 0;
    for (std::size_t k = 0; k < n;) {
      std::size_t end = group_end_[k];
      double gpos = 0, gneg = 0;
      for (std::size_t j = k; j < end; ++j) {
        std::size_t i = order_[j];
        (y_[i] == 1 ? gpos : gneg) += w(i);
      }
      concordant += gpos * (neg_below + 0.5 * gneg);
      neg_below += gneg;
      pos_total += gpos;
      k = end;
    }
    double auc = pos_total > 0 && neg_below > 0 ? concordant / (pos_total * neg_below)
                                                : std::numeric_limits<double>::quiet_NaN();
    return {sq / total, lg / total, zo / total, auc};
  }

 private:
  std::vector<int> y_;
  std::vector<double> sq_, log_, zo_;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> group_end_;
};

inline MetricValues improvement(const MetricValues& base, const MetricValues& aug) {
  return {base.squared - aug.squared, base.log - aug.log, base.zero_one - aug.zero_one,
          aug.auc - base.auc};
}

inline MetricEstimate estimate(double value, std::vector<double> reps) {
  std::erase_if(reps, [](double v) { return std::isnan(v); });
  if (reps.empty()) return {value, {value, value}};
  return {value, percentile_interval(std::move(reps), 0.95)};
}

inline LossReport report(const MetricValues& point, const std::vector<MetricValues>& reps) {
  auto pick = [&](double MetricValues::*field) {
    std::vector<double> v;
    v.reserve(reps.size());
    for (const auto& r : reps) v.push_back(r.*field);
    return estimate(point.*field, std::move(v));
  };
  return {pick(&MetricValues::squared), pick(&MetricValues::log), pick(&MetricValues::zero_one),
          pick(&MetricValues::auc)};
}

}  // namespace learner_detail

// Paired bootstrap over test rows of two prediction vectors.
inline PartitionComparison compare_predictions(std::span<const double> base_pred,
                                               std::span<const double> aug_pred,
                                               std::span<const int> y, std::size_t boot_reps,
                                               std::uint64_t seed) {
  using namespace learner_detail;
  check_lengths(base_pred.size(), y.size(), "base predictions");
  check_lengths(aug_pred.size(), y.size(), "augmented predictions");
  if (y.empty()) throw Error(ErrorCode::kEmptyInput, "empty test set");
  if (boot_reps < kMinBootstrapReps) {
    throw Error(ErrorCode::kInvalidArgument, "boot_reps must be >= " + std::to_string(kMinBootstrapReps));
  }
  struct Rep {
    MetricValues base, aug, delta;
  };
  ScoredRows base_rows(base_pred, y), aug_rows(aug_pred, y);
  auto reps = bootstrap(y.size(), boot_reps, seed, [&](std::span<const std::size_t> idx) {
    std::vector<std::uint32_t> counts(y.size(), 0);
    for (auto i : idx) ++counts[i];
    Rep r;
    r.base = base_rows.values(counts);
    r.aug = aug_rows.values(counts);
    r.delta = improvement(r.base, r.aug);
    return r;
  });
  std::vector<MetricValues> rb, ra, rd;
  for (const auto& r : reps) {
    rb.push_back(r.base);
    ra.push_back(r.aug);
    rd.push_back(r.delta);
  }
  auto base = metric_values(base_pred, y);
  auto aug = metric_values(aug_pred, y);
  auto delta = improvement(base, aug);
  auto rel = [](double d, double b) { return b != 0 ? d / b : 0.0; };
  PartitionComparison out;
  out.base = report(base, rb);
  out.augmented = report(aug, ra);
  out.absolute_delta = report(delta, rd);
  out.relative_delta = {rel(delta.squared, base.squared), rel(delta.log, base.log),
                        rel(delta.zero_one, base.zero_one), rel(delta.auc, base.auc)};
  return out;
}

inline PartitionComparison compare_partitions(const TrainedModel& base, const TrainedModel& augmented,
                                              const Cohort& test, std::size_t boot_reps,
                                              std::uint64_t seed) {
  auto y = test.outcomes();
  auto pb = base.predict(test);
  auto pa = &base == &augmented ? pb : augmented.predict(test);
  return compare_predictions(pb, pa, y, boot_reps, seed);
}

struct GroupRecovery {
  double zero_one = 0;
  double base_rate = 0;  // loss of the best constant guess on test
};

// How well environmental features alone recover an individual binary trait.
inline GroupRecovery env_group_recovery(const Cohort& train_cohort, const Cohort& test_cohort,
                                        const std::string& target_feature,
                                        ModelSpec spec = ModelSpec{}) {
  const auto& f = train_cohort.manifest().at(target_feature);
  if (f.vtype != ValueType::kBinary) throw Error(ErrorCode::kNotBinary, target_feature);
  if (f.kind != FeatureKind::kIndividual) throw Error(ErrorCode::kNotIndividual, target_feature);
  spec.partition = PartitionSelector::environmental_only();
  auto to_labels = [&](const Cohort& c) {
    auto v = c.numeric(target_feature);
    return std::vector<int>(v.begin(), v.end());
  };
  auto schema = make_schema(train_cohort, spec.partition);
  auto fitted = fit_matrix(spec, project(train_cohort, schema), to_labels(train_cohort));
  auto y_test = to_labels(test_cohort);
  if (y_test.empty()) throw Error(ErrorCode::kEmptyInput, "empty test cohort");
  auto pred = fitted.predict(project(test_cohort, schema));
  double rate = static_cast<double>(std::count(y_test.begin(), y_test.end(), 1)) /
                static_cast<double>(y_test.size());
  return {zero_one_loss(pred, y_test), std::min(rate, 1.0 - rate)};
}

}  // namespace ewslab
