/*
Copyright 2026 The peersel Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    https://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

// Outcome quality against the identity ground truth (agent j has true rank
// j, 0-based) and per-agent selection-frequency gain curves.

#pragma once

#include <algorithm>
#include <span>
#include <stdexcept>
#include <vector>

namespace peersel {

struct MetricReport {
  double precision_at_k = 0.0;
  double positive_borda = 0.0;
  double negative_borda = 0.0;
};

namespace detail {
inline void check_selection(std::span<const int> selected, int k) {
  if (k <= 0 || static_cast<int>(selected.size()) != k) {
    throw std::invalid_argument("metrics: selection size must equal k > 0");
  }
  std::vector<int> sorted(selected.begin(), selected.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end() || sorted.front() < 0) {
    throw std::invalid_argument("metrics: selection must hold distinct agent indices");
  }
}
}  // namespace detail

inline double precision_at_k(std::span<const int> selected, int k) {
  detail::check_selection(selected, k);
  int hits = 0;
  for (int j : selected) hits += (j >= 0 && j < k);
  return static_cast<double>(hits) / k;
}

// Truly best agent scores k, the k-th scores 1, the rest 0; divided by the
// optimum k(k+1)/2.
inline double positive_borda(std::span<const int> selected, int k) {
  detail::check_selection(selected, k);
  double score = 0.0;
  for (int j : selected)
    if (j >= 0 && j < k) score += k - j;
  return score / (0.5 * k * (k + 1.0));
}

// Wrong picks are penalized j - k + 1 (the (k+1)-th agent costs 1, the last
// costs n - k). Reported as 1 - penalty / worst penalty, so 1 means no wrong
// picks and 0 means the bottom k were chosen.
inline double negative_borda(std::span<const int> selected, int k, int n) {
  detail::check_selection(selected, k);
  if (k >= n) throw std::invalid_argument("negative_borda: need k < n");
  double penalty = 0.0;
  for (int j : selected)
    if (j >= k) penalty += j - k + 1;
  double worst = 0.0;
  for (int j = std::max(k, n - k); j < n; ++j) worst += j - k + 1;
  return 1.0 - penalty / worst;
}

inline MetricReport evaluate(std::span<const int> selected, int k, int n) {
  return {precision_at_k(selected, k), positive_borda(selected, k), negative_borda(selected, k, n)};
}

// Fraction of runs in which each agent was selected.
template <class Range>
std::vector<double> selection_frequency(const Range& selections, int n) {
  std::vector<double> freq(static_cast<std::size_t>(n), 0.0);
  std::size_t runs = 0;
  for (const auto& sel : selections) {
    for (int j : sel) freq.at(j) += 1.0;
    ++runs;
  }
  if (runs == 0) throw std::invalid_argument("selection_frequency: no runs");
  for (double& f : freq) f /= static_cast<double>(runs);
  return freq;
}

// delta[i] = freq_b[i] - freq_a[i].
inline std::vector<double> gain_curve(std::span<const double> freq_a, std::span<const double> freq_b) {
  if (freq_a.size() != freq_b.size()) throw std::invalid_argument("gain_curve: agent domains differ");
  std::vector<double> delta(freq_a.size());
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = freq_b[i] - freq_a[i];
  return delta;
}

}  // namespace peersel
