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

// Sharp regression discontinuity by local linear regression with a
// rectangular kernel:
//   Y = alpha + tau T + beta (r - t*) T + gamma (r - t*),   T = 1{r < t*}
// over rows with |r - t*| <= h.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ewslab/bootstrap.hpp"
#include "ewslab/error.hpp"
#include "ewslab/stats.hpp"

namespace ewslab {

enum class RddSide { kUpperScore, kLowerScore };

inline std::string_view to_string(RddSide s) {
  return s == RddSide::kUpperScore ? "upper" : "lower";
}

inline RddSide parse_side(std::string_view s) {
  if (s == "upper") return RddSide::kUpperScore;
  if (s == "lower") return RddSide::kLowerScore;
  throw Error(ErrorCode::kInvalidArgument, "side must be 'upper' or 'lower'");
}

inline constexpr std::size_t kMinRddSide = 20;
inline constexpr std::size_t kMinCiBootReps = 1000;

struct RddConfig {
  double t_star = 0.785;
  double h = 0.01;
  RddSide side = RddSide::kUpperScore;
  std::size_t boot_reps = 10000;  // 0 skips the bootstrap
  std::uint64_t seed = 0;

  void validate() const {
    if (!(t_star > 0.0 && t_star < 1.0)) throw Error(ErrorCode::kInvalidArgument, "t_star must lie in (0,1)");
    if (!(h > 0.0 && h < std::min(t_star, 1.0 - t_star))) {
      throw Error(ErrorCode::kInvalidArgument, "bandwidth must lie in (0, min(t*, 1-t*))");
    }
    if (boot_reps != 0 && boot_reps < kMinCiBootReps) {
      throw Error(ErrorCode::kInvalidArgument, "boot_reps must be 0 or >= " + std::to_string(kMinCiBootReps));
    }
  }
};

struct RddEstimate {
  double tau = 0;
  double alpha = 0;
  double beta = 0;
  double gamma = 0;
  double se = 0;
  Interval ci_normal_95;
  std::optional<Interval> ci_boot_95;
  std::optional<Interval> ci_boot_75;
  double p_value = 1;
  std::size_t n = 0;
  std::size_t n_treated = 0;
  double h = 0;
};

namespace rdd_detail {

// Sufficient statistics of one side of the cutoff; d = r - t*.
struct SideSums {
  double n = 0, d = 0, dd = 0, y = 0, dy = 0;

  void add(double di, double yi) {
    n += 1;
    d += di;
    dd += di * di;
    y += yi;
    dy += di * yi;
  }
};

using Vec4 = Eigen::Matrix<double, 4, 1>;
using Mat4 = Eigen::Matrix<double, 4, 4>;

// Normal equations for columns [1, T, dT, d]; `left` holds the treated rows.
inline void normal_equations(const SideSums& left, const SideSums& right, Mat4& xtx, Vec4& xty) {
  double n = left.n + right.n, sd = left.d + right.d, sdd = left.dd + right.dd;
  xtx << n, left.n, left.d, sd,
         left.n, left.n, left.d, left.d,
         left.d, left.d, left.dd, left.dd,
         sd, left.d, left.dd, sdd;
  xty << left.y + right.y, left.y, left.dy, left.dy + right.dy;
}

inline bool side_degenerate(const SideSums& s) {
  // population variance of d on the side, relative to its scale
  if (s.n < 2) return true;
  double m = s.d / s.n;
  double var = s.dd / s.n - m * m;
  return !(var > 1e-14 * std::max(s.dd / s.n, 1e-300));
}

// Pivoted solve; nullopt when the design is rank deficient.
inline std::optional<Vec4> solve(const SideSums& left, const SideSums& right) {
  if (side_degenerate(left) || side_degenerate(right)) return std::nullopt;
  Mat4 xtx;
  Vec4 xty;
  normal_equations(left, right, xtx, xty);
  Eigen::ColPivHouseholderQR<Mat4> qr(xtx);
  if (qr.rank() < 4) return std::nullopt;
  return Vec4(qr.solve(xty));
}

struct Window {
  std::vector<double> d;
  std::vector<double> y;
  std::vector<char> treated;
};

inline Window window(std::span<const double> running, std::span<const int> outcomes, double t_star, double h) {
  check_lengths(running.size(), outcomes.size(), "rdd running/outcomes");
  Window w;
  for (std::size_t i = 0; i < running.size(); ++i) {
    if (!std::isfinite(running[i])) throw Error(ErrorCode::kInvalidArgument, "non-finite running value");
    double d = running[i] - t_star;
    if (std::fabs(d) <= h) {
      w.d.push_back(d);
      w.y.push_back(outcomes[i]);
      w.treated.push_back(running[i] < t_star ? 1 : 0);
    }
  }
  return w;
}

}  // namespace rdd_detail

// Estimate from pre-windowed rows (d = r - t*, treated = r < t*).
inline RddEstimate estimate_window(std::span<const double> d, std::span<const double> y,
                                   std::span<const char> treated, const RddConfig& cfg) {
  using namespace rdd_detail;
  const std::size_t n = d.size();
  // the solve runs on d / h for conditioning; slopes are rescaled afterwards
  const double scale = cfg.h;
  std::vector<double> ds(n);
  for (std::size_t i = 0; i < n; ++i) ds[i] = d[i] / scale;
  SideSums left, right;
  for (std::size_t i = 0; i < n; ++i) (treated[i] ? left : right).add(ds[i], y[i]);
  if (left.n < kMinRddSide || right.n < kMinRddSide) {
    throw Error(ErrorCode::kInsufficientSupport,
                "need >= " + std::to_string(kMinRddSide) + " rows per side within bandwidth, have " +
                    std::to_string(static_cast<std::size_t>(left.n)) + " below and " +
                    std::to_string(static_cast<std::size_t>(right.n)) + " at or above the cutoff");
  }
  auto coef = solve(left, right);
  if (!coef) throw Error(ErrorCode::kSingularDesign, "running variable is constant on one side");

  RddEstimate est;
  est.alpha = (*coef)(0);
  est.tau = (*coef)(1);
  est.beta = (*coef)(2) / scale;
  est.gamma = (*coef)(3) / scale;
  est.n = n;
  est.n_treated = static_cast<std::size_t>(left.n);
  est.h = cfg.h;

  double rss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double t = treated[i] ? 1.0 : 0.0;
    double fit = est.alpha + est.tau * t + est.beta * d[i] * t + est.gamma * d[i];
    rss += (y[i] - fit) * (y[i] - fit);
  }
  Mat4 xtx;
  Vec4 xty;
  normal_equations(left, right, xtx, xty);
  double sigma2 = rss / static_cast<double>(n - 4);
  Mat4 inv = xtx.colPivHouseholderQr().inverse();
  est.se = std::sqrt(std::max(0.0, sigma2 * inv(1, 1)));
  // exact fits leave only rounding in rss
  if (est.se < 1e-12) est.se = 0.0;

  double z = normal_critical(0.95);
  est.ci_normal_95 = {est.tau - z * est.se, est.tau + z * est.se};
  if (est.se > 0) {
    est.p_value = two_sided_normal_pvalue(est.tau / est.se);
  } else {
    est.p_value = std::fabs(est.tau) < 1e-12 ? 1.0 : 0.0;
  }

  if (cfg.boot_reps > 0) {
    auto taus = bootstrap(n, cfg.boot_reps, cfg.seed, [&](std::span<const std::size_t> idx) {
      SideSums l, r;
      for (std::size_t i : idx) (treated[i] ? l : r).add(ds[i], y[i]);
      auto c = solve(l, r);
      return c ? (*c)(1) : std::numeric_limits<double>::quiet_NaN();
    });
    std::erase_if(taus, [](double v) { return std::isnan(v); });
    if (taus.empty()) throw Error(ErrorCode::kSingularDesign, "every bootstrap replicate was singular");
    est.ci_boot_95 = percentile_interval(taus, 0.95);
    est.ci_boot_75 = percentile_interval(std::move(taus), 0.75);
  }
  return est;
}

inline RddEstimate estimate(std::span<const double> running, std::span<const int> outcomes,
                            const RddConfig& cfg) {
  cfg.validate();
  auto w = rdd_detail::window(running, outcomes, cfg.t_star, cfg.h);
  return estimate_window(w.d, w.y, w.treated, cfg);
}

struct SweepEntry {
  double h = 0;
  std::optional<RddEstimate> estimate;
  std::optional<ErrorCode> error;
  std::string message;
};

inline const std::vector<double> kDefaultBandwidths = {0.005, 0.01, 0.02};

// One estimate per bandwidth; failures are recorded rather than thrown.
inline std::vector<SweepEntry> bandwidth_sweep(std::span<const double> running, std::span<const int> outcomes,
                                               const RddConfig& cfg,
                                               std::span<const double> bandwidths = kDefaultBandwidths) {
  std::vector<SweepEntry> out;
  for (double h : bandwidths) {
    SweepEntry e;
    e.h = h;
    RddConfig c = cfg;
    c.h = h;
    try {
      e.estimate = estimate(running, outcomes, c);
    } catch (const Error& err) {
      e.error = err.code();
      e.message = err.what();
    }
    out.push_back(std::move(e));
  }
  return out;
}

inline constexpr std::size_t kMinSubgroupRows = 40;

inline RddEstimate subgroup_estimate(std::span<const double> running, std::span<const int> outcomes,
                                     std::span<const int> mask, const RddConfig& cfg) {
  cfg.validate();
  check_lengths(running.size(), outcomes.size(), "rdd running/outcomes");
  check_lengths(running.size(), mask.size(), "subgroup mask");
  std::vector<double> r;
  std::vector<int> y;
  std::size_t in_band = 0;
  for (std::size_t i = 0; i < running.size(); ++i) {
    if (!mask[i]) continue;
    r.push_back(running[i]);
    y.push_back(outcomes[i]);
    if (std::fabs(running[i] - cfg.t_star) <= cfg.h) ++in_band;
  }
  if (in_band < kMinSubgroupRows) {
    throw Error(ErrorCode::kInsufficientSupport, "subgroup has " + std::to_string(in_band) +
                                                     " rows within bandwidth, need " +
                                                     std::to_string(kMinSubgroupRows));
  }
  return estimate(r, y, cfg);
}

// ---------------------------------------------------------------------------
// Validity diagnostics

struct DensityCheck {
  std::size_t left_n = 0;
  std::size_t right_n = 0;
  std::vector<std::size_t> bin_counts;
  double chi2_stat = 0;
  double chi2_dof = 0;
  double chi2_pvalue = 1;
};

struct BalanceEntry {
  std::string feature;
  double mean_left = 0;
  double mean_right = 0;
  double smd = 0;
};

struct DiagnosticsReport {
  DensityCheck density;
  std::vector<BalanceEntry> balance;
};

inline constexpr std::size_t kMinDiagnosticRows = 50;

struct NamedColumn {
  std::string name;
  std::vector<double> values;
};

inline DiagnosticsReport diagnostics(std::span<const double> running, std::span<const NamedColumn> features,
                                     const RddConfig& cfg, std::size_t k = 5) {
  cfg.validate();
  if (k < 3) throw Error(ErrorCode::kInvalidArgument, "need k >= 3 sub-bins per side");
  for (const auto& f : features) check_lengths(f.values.size(), running.size(), f.name.c_str());
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < running.size(); ++i) {
    if (std::fabs(running[i] - cfg.t_star) <= cfg.h) rows.push_back(i);
  }
  if (rows.size() < kMinDiagnosticRows) {
    throw Error(ErrorCode::kInsufficientSupport, "diagnostics need >= " + std::to_string(kMinDiagnosticRows) +
                                                     " rows within bandwidth");
  }
  DiagnosticsReport rep;
  auto& den = rep.density;
  const std::size_t bins = 2 * k;
  const double lo = cfg.t_star - cfg.h, width = 2.0 * cfg.h / static_cast<double>(bins);
  den.bin_counts.assign(bins, 0);
  for (std::size_t i : rows) {
    (running[i] < cfg.t_star ? den.left_n : den.right_n)++;
    auto b = static_cast<long long>(std::floor((running[i] - lo) / width));
    b = std::clamp<long long>(b, 0, static_cast<long long>(bins) - 1);
    den.bin_counts[static_cast<std::size_t>(b)]++;
  }
  double expected = static_cast<double>(rows.size()) / static_cast<double>(bins);
  for (auto c : den.bin_counts) {
    double diff = static_cast<double>(c) - expected;
    den.chi2_stat += diff * diff / expected;
  }
  den.chi2_dof = static_cast<double>(bins - 1);
  den.chi2_pvalue = chi2_survival(den.chi2_stat, den.chi2_dof);

  for (const auto& f : features) {
    std::vector<double> l, r;
    for (std::size_t i : rows) (running[i] < cfg.t_star ? l : r).push_back(f.values[i]);
    BalanceEntry b{f.name, l.empty() ? 0.0 : mean(l), r.empty() ? 0.0 : mean(r), 0.0};
    double vl = l.size() > 1 ? sample_variance(l) : 0.0;
    double vr = r.size() > 1 ? sample_variance(r) : 0.0;
    double pooled = std::sqrt((vl + vr) / 2.0);
    b.smd = pooled > 0 ? (b.mean_left - b.mean_right) / pooled : 0.0;
    rep.balance.push_back(std::move(b));
  }
  return rep;
}

}  // namespace ewslab
