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

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ewslab/parallel.hpp"
#include "ewslab/random.hpp"
#include "ewslab/stats.hpp"

namespace ewslab {

struct Interval {
  double lo = 0;
  double hi = 0;

  bool contains(double x) const { return lo <= x && x <= hi; }
  double width() const { return hi - lo; }
};

// Resample indices for one replicate. The stream depends only on (seed, rep),
// so replicates can be evaluated in any order or on any thread.
inline void resample_indices(std::uint64_t seed, std::size_t rep, std::size_t n,
                             std::vector<std::size_t>& out) {
  Stream rng(derive_seed(seed, "bootstrap"), rep);
  out.resize(n);
  for (auto& i : out) i = static_cast<std::size_t>(rng.below(n));
}

// Runs stat(indices) on `reps` resamples of [0, n); result[r] belongs to
// replicate r regardless of EWS_LAB_THREADS.
template <typename Stat>
auto bootstrap(std::size_t n, std::size_t reps, std::uint64_t seed, Stat&& stat) {
  using T = decltype(stat(std::span<const std::size_t>{}));
  std::vector<T> out(reps);
  parallel_for(reps, [&](std::size_t r) {
    std::vector<std::size_t> idx;
    resample_indices(seed, r, n, idx);
    out[r] = stat(std::span<const std::size_t>(idx));
  });
  return out;
}

// Percentile interval with the given central coverage.
inline Interval percentile_interval(std::vector<double> values, double coverage) {
  std::sort(values.begin(), values.end());
  double tail = (1.0 - coverage) / 2.0;
  return {percentile_sorted(values, tail), percentile_sorted(values, 1.0 - tail)};
}

}  // namespace ewslab
