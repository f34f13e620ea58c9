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

// Grading and the three selection mechanisms: Vanilla (Borda-style top-k),
// Partition (fixed per-cluster quotas) and Exact Dollar Partition (quotas
// from normalized point shares, rounded in expectation).

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "peersel/assign.hpp"
#include "peersel/errors.hpp"
#include "peersel/noise.hpp"
#include "peersel/random.hpp"

namespace peersel {

enum class Mechanism { kVanilla, kPartition, kExactDollarPartition };

inline std::string_view mechanism_name(Mechanism m) {
  switch (m) {
    case Mechanism::kVanilla: return "vanilla";
    case Mechanism::kPartition: return "partition";
    case Mechanism::kExactDollarPartition: return "edp";
  }
  return "?";
}

inline Mechanism parse_mechanism(std::string_view name) {
  if (name == "vanilla") return Mechanism::kVanilla;
  if (name == "partition") return Mechanism::kPartition;
  if (name == "edp" || name == "exact_dollar_partition") return Mechanism::kExactDollarPartition;
  throw std::invalid_argument("unknown mechanism: " + std::string(name));
}

struct Grade {
  int candidate;
  double value;
};

// Grades keyed by reviewer. Each (reviewer, candidate) pair appears at most
// once.
struct GradeProfile {
  std::vector<std::vector<Grade>> by_reviewer;

  GradeProfile() = default;
  explicit GradeProfile(int n) : by_reviewer(static_cast<std::size_t>(n)) {}

  int num_agents() const { return static_cast<int>(by_reviewer.size()); }
  void add(int reviewer, int candidate, double value) { by_reviewer[reviewer].push_back({candidate, value}); }
};

struct SelectionResult {
  std::vector<int> selected;                 // ascending
  std::vector<std::vector<int>> per_cluster;  // empty for Vanilla
  std::vector<double> scores;                // indexed by agent; 0 for non-candidates
  std::vector<int> quotas;                   // per cluster; empty for Vanilla
  std::vector<std::string> trace;            // repairs and other notes
};

// Lower priority value wins a tie. An empty span means "lower agent index".
using TieBreak = std::span<const int>;

inline std::vector<double> grades_from_positions(std::span<const int> positions, std::span<const int> reviewees) {
  const int n = static_cast<int>(positions.size());
  std::vector<double> out;
  out.reserve(reviewees.size());
  for (int j : reviewees) {
    if (j < 0 || j >= n) throw std::invalid_argument("grades_from_ranking: candidate not in ranking");
    out.push_back(static_cast<double>(n - positions[j]));
  }
  return out;
}

// Grade of candidate j is n - position(j): the best-ranked agent gets n.
inline std::vector<Grade> grades_from_ranking(const Ranking& full_ranking, std::span<const int> reviewees) {
  const std::vector<int> pos = full_ranking.positions();
  const std::vector<double> g = grades_from_positions(pos, reviewees);
  std::vector<Grade> out;
  out.reserve(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out.push_back({reviewees[i], g[i]});
  return out;
}

// positions[r][j] = position of j in reviewer r's ranking.
inline GradeProfile grade_assignment(const Assignment& assignment,
                                     const std::vector<std::vector<int>>& positions) {
  GradeProfile profile(assignment.num_agents());
  for (int r = 0; r < assignment.num_agents(); ++r) {
    const auto& reviewees = assignment.reviewees_of[r];
    if (reviewees.empty()) continue;
    const std::vector<double> g = grades_from_positions(positions.at(r), reviewees);
    for (std::size_t i = 0; i < g.size(); ++i) profile.add(r, reviewees[i], g[i]);
  }
  return profile;
}

inline GradeProfile restrict_profile(const GradeProfile& profile, std::span<const int> candidates) {
  std::vector<char> keep(static_cast<std::size_t>(profile.num_agents()), 0);
  for (int x : candidates) keep.at(x) = 1;
  GradeProfile out(profile.num_agents());
  for (int r = 0; r < profile.num_agents(); ++r)
    for (const Grade& g : profile.by_reviewer[r])
      if (keep[g.candidate]) out.by_reviewer[r].push_back(g);
  return out;
}

inline GradeProfile pool_profiles(const GradeProfile& a, const GradeProfile& b) {
  GradeProfile out(std::max(a.num_agents(), b.num_agents()));
  for (int r = 0; r < a.num_agents(); ++r) out.by_reviewer[r] = a.by_reviewer[r];
  for (int r = 0; r < b.num_agents(); ++r)
    out.by_reviewer[r].insert(out.by_reviewer[r].end(), b.by_reviewer[r].begin(), b.by_reviewer[r].end());
  return out;
}

// Mean grade received per agent (0 when unreviewed).
inline std::vector<double> mean_received(const GradeProfile& profile) {
  const std::size_t n = static_cast<std::size_t>(profile.num_agents());
  std::vector<double> sum(n, 0.0);
  std::vector<int> count(n, 0);
  for (const auto& given : profile.by_reviewer)
    for (const Grade& g : given) {
      sum[g.candidate] += g.value;
      ++count[g.candidate];
    }
  for (std::size_t j = 0; j < n; ++j)
    if (count[j] > 0) sum[j] /= count[j];
  return sum;
}

namespace detail {

inline bool ranks_before(int a, int b, const std::vector<double>& scores, TieBreak tie) {
  if (scores[a] != scores[b]) return scores[a] > scores[b];
  if (!tie.empty() && tie[a] != tie[b]) return tie[a] < tie[b];
  return a < b;
}

inline std::vector<int> ordered(std::vector<int> pool, const std::vector<double>& scores, TieBreak tie) {
  std::sort(pool.begin(), pool.end(), [&](int a, int b) { return ranks_before(a, b, scores, tie); });
  return pool;
}

inline std::vector<int> top(std::vector<int> pool, std::size_t q, const std::vector<double>& scores, TieBreak tie) {
  q = std::min(q, pool.size());
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(q), pool.end(),
                    [&](int a, int b) { return ranks_before(a, b, scores, tie); });
  pool.resize(q);
  std::sort(pool.begin(), pool.end());
  return pool;
}

inline std::vector<std::vector<int>> candidates_by_cluster(const Clustering& clustering,
                                                           std::span<const int> candidates) {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(clustering.num_clusters()));
  for (int x : candidates) out[clustering.of(x)].push_back(x);
  for (auto& v : out) std::sort(v.begin(), v.end());
  return out;
}

inline SelectionResult select_with_quotas(const Clustering& clustering, std::span<const int> candidates,
                                          const std::vector<int>& quotas, std::vector<double> scores,
                                          TieBreak tie) {
  SelectionResult res;
  const auto groups = candidates_by_cluster(clustering, candidates);
  for (std::size_t c = 0; c < groups.size(); ++c) {
    if (quotas[c] > static_cast<int>(groups[c].size())) {
      throw InfeasibleError("cluster " + std::to_string(c) + " has " + std::to_string(groups[c].size()) +
                                " candidates but quota " + std::to_string(quotas[c]),
                            static_cast<int>(c));
    }
    res.per_cluster.push_back(top(groups[c], static_cast<std::size_t>(quotas[c]), scores, tie));
    res.selected.insert(res.selected.end(), res.per_cluster.back().begin(), res.per_cluster.back().end());
  }
  std::sort(res.selected.begin(), res.selected.end());
  res.quotas = quotas;
  res.scores = std::move(scores);
  return res;
}

inline std::vector<double> masked(std::vector<double> scores, std::span<const int> candidates) {
  std::vector<double> out(scores.size(), 0.0);
  for (int x : candidates) out[x] = scores[x];
  return out;
}

}  // namespace detail

// Splits `total` seats as evenly as possible; the first total % c clusters
// in `order` get one extra.
inline std::vector<int> even_split(int total, std::span<const int> order) {
  const int c = static_cast<int>(order.size());
  std::vector<int> out(order.size(), total / c);
  for (int i = 0; i < total % c; ++i) ++out[order[i]];
  return out;
}

inline std::vector<int> partition_quotas(int c, int k, Rng& rng) {
  const std::vector<int> order = random_permutation(c, rng);
  return even_split(k, order);
}

// Top k candidates by mean grade received.
inline SelectionResult vanilla_select(const GradeProfile& profile, std::span<const int> candidates, int k,
                                      TieBreak tie = {}) {
  if (k < 0 || k > static_cast<int>(candidates.size())) {
    throw std::invalid_argument("vanilla_select: k exceeds the number of candidates");
  }
  SelectionResult res;
  res.scores = detail::masked(mean_received(profile), candidates);
  res.selected = detail::top(std::vector<int>(candidates.begin(), candidates.end()),
                             static_cast<std::size_t>(k), res.scores, tie);
  return res;
}

inline SelectionResult partition_select(const GradeProfile& profile, const Clustering& clustering,
                                        std::span<const int> candidates, int k, Rng& rng, TieBreak tie = {}) {
  const std::vector<int> quotas = partition_quotas(clustering.num_clusters(), k, rng);
  return detail::select_with_quotas(clustering, candidates, quotas,
                                    detail::masked(mean_received(profile), candidates), tie);
}

// Each reviewer's grades rescaled to sum to one; an all-zero reviewer
// splits its unit evenly.
inline GradeProfile normalize_profile(const GradeProfile& profile) {
  GradeProfile out = profile;
  for (auto& given : out.by_reviewer) {
    if (given.empty()) continue;
    double total = 0.0;
    for (const Grade& g : given) total += g.value;
    for (Grade& g : given) g.value = total > 0.0 ? g.value / total : 1.0 / static_cast<double>(given.size());
  }
  return out;
}

// share_c = k * (points received by cluster c's candidates) / (all points
// received by candidates). Equal shares when nobody received anything.
inline std::vector<double> cluster_shares(const GradeProfile& normalized, const Clustering& clustering,
                                          std::span<const int> candidates, int k) {
  const int c = clustering.num_clusters();
  std::vector<char> is_candidate(static_cast<std::size_t>(normalized.num_agents()), 0);
  for (int x : candidates) is_candidate.at(x) = 1;
  std::vector<double> points(static_cast<std::size_t>(c), 0.0);
  for (const auto& given : normalized.by_reviewer)
    for (const Grade& g : given)
      if (is_candidate[g.candidate]) points[clustering.of(g.candidate)] += g.value;
  double total = 0.0;
  for (double p : points) total += p;
  std::vector<double> shares(static_cast<std::size_t>(c), static_cast<double>(k) / c);
  if (total > 0.0)
    for (int i = 0; i < c; ++i) shares[i] = k * points[i] / total;
  return shares;
}

// Systematic rounding: clusters are visited in a random order and their
// fractional parts laid end to end on [0, r); a single uniform u marks the
// points u, u+1, ..., u+r-1, and each cluster whose interval holds a point
// is rounded up. Every quota is the floor or ceiling of its share, the
// quotas sum to the (integer) share total, and E[quota_c] = share_c.
inline std::vector<int> randomized_round(std::span<const double> shares, Rng& rng) {
  double total = 0.0;
  for (double s : shares) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw std::invalid_argument("randomized_round: shares must be finite and >= 0");
    total += s;
  }
  const double k = std::round(total);
  if (std::abs(total - k) > 1e-6) throw std::invalid_argument("randomized_round: shares must sum to an integer");

  const int c = static_cast<int>(shares.size());
  std::vector<int> quota(shares.size());
  std::vector<double> frac(shares.size());
  double frac_total = 0.0;
  for (int i = 0; i < c; ++i) {
    double f = std::floor(shares[i]);
    double r = shares[i] - f;
    if (r > 1.0 - 1e-9) {  // share is an integer up to rounding noise
      f += 1.0;
      r = 0.0;
    } else if (r < 1e-9) {
      r = 0.0;
    }
    quota[i] = static_cast<int>(f);
    frac[i] = r;
    frac_total += r;
  }
  const int ups = static_cast<int>(std::lround(k - std::accumulate(quota.begin(), quota.end(), 0.0)));
  const std::vector<int> order = random_permutation(c, rng);
  const double u = uniform01(rng);
  if (ups <= 0) return quota;
  // Rescale so the laid-out fractions cover exactly [0, ups).
  const double scale = frac_total > 0.0 ? ups / frac_total : 0.0;
  int last = -1;
  for (int idx = 0; idx < c; ++idx)
    if (frac[order[idx]] > 0.0) last = idx;
  double start = 0.0;
  int next_point = 0;  // index j of the next unassigned point u + j
  for (int idx = 0; idx < c && next_point < ups; ++idx) {
    const int i = order[idx];
    const double end = (idx == last) ? static_cast<double>(ups) : start + frac[i] * scale;
    if (frac[i] > 0.0 && u + next_point >= start && u + next_point < end) {
      ++quota[i];
      ++next_point;
    }
    start = end;
  }
  return quota;
}

// randomized_round followed by a cap repair: any quota above its cap is cut
// to the cap and the surplus goes, one seat at a time, to the clusters with
// the largest fractional remainders that still have room.
inline std::vector<int> round_with_caps(std::span<const double> shares, std::span<const int> caps, Rng& rng,
                                        std::vector<std::string>* trace = nullptr) {
  std::vector<int> quota = randomized_round(shares, rng);
  int surplus = 0;
  for (std::size_t i = 0; i < quota.size(); ++i) {
    if (quota[i] > caps[i]) {
      surplus += quota[i] - caps[i];
      if (trace) {
        trace->push_back("cap cluster " + std::to_string(i) + ": quota " + std::to_string(quota[i]) + " -> " +
                         std::to_string(caps[i]));
      }
      quota[i] = caps[i];
    }
  }
  while (surplus > 0) {
    int best = -1;
    double best_rem = -1.0;
    for (std::size_t i = 0; i < quota.size(); ++i) {
      if (quota[i] >= caps[i]) continue;
      const double rem = shares[i] - quota[i];
      if (rem > best_rem) {
        best_rem = rem;
        best = static_cast<int>(i);
      }
    }
    if (best < 0) throw InfeasibleError("round_with_caps: caps cannot absorb the total");
    ++quota[best];
    --surplus;
    if (trace) trace->push_back("surplus seat -> cluster " + std::to_string(best));
  }
  return quota;
}

inline SelectionResult edp_select(const GradeProfile& profile, const Clustering& clustering,
                                  std::span<const int> candidates, int k, Rng& rng, TieBreak tie = {}) {
  if (k < 0 || k > static_cast<int>(candidates.size())) {
    throw std::invalid_argument("edp_select: k exceeds the number of candidates");
  }
  const GradeProfile normalized = normalize_profile(restrict_profile(profile, candidates));
  const std::vector<double> shares = cluster_shares(normalized, clustering, candidates, k);
  const auto groups = detail::candidates_by_cluster(clustering, candidates);
  std::vector<int> caps;
  for (const auto& g : groups) caps.push_back(static_cast<int>(g.size()));
  std::vector<std::string> trace;
  const std::vector<int> quotas = round_with_caps(shares, caps, rng, &trace);
  SelectionResult res = detail::select_with_quotas(clustering, candidates, quotas,
                                                   detail::masked(mean_received(normalized), candidates), tie);
  res.trace = std::move(trace);
  return res;
}

}  // namespace peersel
