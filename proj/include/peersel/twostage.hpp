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

// Single- and two-stage review pipelines.
//
// Two-stage: every agent spends f reviews in stage 1; the stage-1 scores
// accept h candidates outright and eliminate l; every agent (eliminated or
// not) then spends its remaining m - f reviews on the survivors, and the
// mechanism picks k - h of them. For the clustered mechanisms all stage-1
// cuts are made inside clusters so no agent's fate ever depends on its own
// reports.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "peersel/assign.hpp"
#include "peersel/errors.hpp"
#include "peersel/mechanisms.hpp"
#include "peersel/noise.hpp"
#include "peersel/random.hpp"

namespace peersel {

struct TwoStageParams {
  int n = 0;
  int k = 0;
  int m = 0;
  int f = 0;  // 0: single stage
  int h = 0;
  int l = 0;
  int c = 1;
  double phi = 0.0;
  bool pool_stage1 = true;

  bool two_stage() const { return f > 0; }

  void validate() const {
    auto fail = [](const std::string& why) { throw std::invalid_argument("TwoStageParams: " + why); };
    if (n < 2) fail("n must be >= 2");
    if (k < 1 || k >= n) fail("need 1 <= k < n");
    if (m < 1 || m >= n) fail("need 1 <= m < n");
    if (f < 0 || (f > 0 && f >= m)) fail("need 0 <= f < m");
    if (h < 0 || h > k) fail("need 0 <= h <= k");
    if (l < 0 || l > n - k) fail("need 0 <= l <= n - k");
    if (f == 0 && (h != 0 || l != 0)) fail("h and l require a first stage (f > 0)");
    if (c < 1 || c > n) fail("need 1 <= c <= n");
    if (!(phi >= 0.0 && phi <= 1.0)) fail("phi must lie in [0, 1]");
  }
};

struct StageTrace {
  std::vector<double> stage1_scores;
  std::vector<int> accepted_outright;
  std::vector<int> eliminated;
  std::vector<int> survivors;
  std::vector<int> stage2_selected;
  std::vector<int> accept_quotas;     // per cluster (one entry for Vanilla)
  std::vector<int> eliminate_quotas;  // per cluster
  std::vector<int> stage2_quotas;     // per cluster; empty for Vanilla
  // Stage-2 reviews that could not be placed because every remaining target
  // in the group was already reviewed by that reviewer in stage 1.
  long stage2_shortfall = 0;
};

// positions[r][j] = position of agent j in agent r's reported ranking.
using RankingPositions = std::vector<std::vector<int>>;

inline RankingPositions positions_of(std::span<const Ranking> rankings) {
  RankingPositions out;
  out.reserve(rankings.size());
  for (const Ranking& r : rankings) out.push_back(r.positions());
  return out;
}

struct Stage1Ranking {
  std::vector<double> scores;                // indexed by agent
  std::vector<std::vector<int>> per_cluster;  // best first; one group for Vanilla
};

// Orders candidates by stage-1 score: a single global order for Vanilla,
// one order per cluster for the clustered mechanisms (EDP ranks by
// normalized points).
inline Stage1Ranking stage1_rank(Mechanism mechanism, const GradeProfile& profile, const Clustering* clustering,
                                 std::span<const int> candidates, TieBreak tie = {}) {
  Stage1Ranking out;
  if (mechanism == Mechanism::kVanilla || clustering == nullptr) {
    out.scores = detail::masked(mean_received(profile), candidates);
    out.per_cluster.push_back(detail::ordered({candidates.begin(), candidates.end()}, out.scores, tie));
    return out;
  }
  if (mechanism == Mechanism::kExactDollarPartition) {
    out.scores = detail::masked(mean_received(normalize_profile(restrict_profile(profile, candidates))), candidates);
  } else {
    out.scores = detail::masked(mean_received(profile), candidates);
  }
  for (auto& group : detail::candidates_by_cluster(*clustering, candidates))
    out.per_cluster.push_back(detail::ordered(std::move(group), out.scores, tie));
  return out;
}

namespace detail {

inline std::vector<int> all_agents(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[i] = i;
  return v;
}

inline SelectionResult select(Mechanism mechanism, const GradeProfile& profile, const Clustering& clustering,
                              std::span<const int> candidates, int k, Rng& rng, TieBreak tie) {
  switch (mechanism) {
    case Mechanism::kVanilla: return vanilla_select(profile, candidates, k, tie);
    case Mechanism::kPartition: return partition_select(profile, clustering, candidates, k, rng, tie);
    case Mechanism::kExactDollarPartition: return edp_select(profile, clustering, candidates, k, rng, tie);
  }
  throw std::logic_error("unknown mechanism");
}

// Splits `budget` over targets in proportion to `weights` with systematic
// rounding at offset u in [0, 1).
inline std::vector<int> proportional_split(int budget, const std::vector<double>& weights, double u) {
  std::vector<int> out(weights.size(), 0);
  double total = 0.0;
  for (double w : weights) total += w;
  if (total <= 0.0 || budget == 0) return out;
  std::size_t last = 0;
  for (std::size_t i = 0; i < weights.size(); ++i)
    if (weights[i] > 0.0) last = i;
  double cum = 0.0;
  int given = 0;
  for (std::size_t i = 0; i <= last; ++i) {
    cum += budget * weights[i] / total;
    // Points u, u+1, ... lying below cum belong to targets 0..i.
    const double span = cum - u;
    const int upto = (i == last) ? budget : (span <= 0.0 ? 0 : static_cast<int>(std::ceil(span - 1e-9)));
    const int clipped = std::clamp(upto, given, budget);
    out[i] = clipped - given;
    given = clipped;
  }
  return out;
}

}  // namespace detail

// One round of m reviews per agent over all agents, then the mechanism.
// Clustered mechanisms draw a clustering from rng when none is supplied.
inline SelectionResult run_single_stage(Mechanism mechanism, const TwoStageParams& params,
                                        const RankingPositions& positions, const Clustering* clustering, Rng& rng,
                                        TieBreak tie = {}) {
  params.validate();
  if (static_cast<int>(positions.size()) != params.n) throw std::invalid_argument("run_single_stage: need one ranking per agent");
  const bool clustered = mechanism != Mechanism::kVanilla;
  std::optional<Clustering> drawn;
  if (clustered && clustering == nullptr) drawn = make_clusters(params.n, params.c, rng);
  const Clustering single = Clustering::single(params.n);
  const Clustering& cl = clustered ? (clustering ? *clustering : *drawn) : single;
  // A single cluster imposes no review restriction.
  const bool cross = clustered && cl.num_clusters() > 1;
  const std::vector<int> all = detail::all_agents(params.n);
  ReviewRequest req;
  req.reviewers = all;
  req.candidates = all;
  req.per_reviewer = params.m;
  req.clustering = cross ? &cl : nullptr;
  req.num_agents = params.n;
  const Assignment assignment = assign_reviews(req, rng);
  const GradeProfile profile = grade_assignment(assignment, positions);
  return detail::select(mechanism, profile, cl, all, params.k, rng, tie);
}

inline std::pair<SelectionResult, StageTrace> run_two_stage(Mechanism mechanism, const TwoStageParams& params,
                                                            const RankingPositions& positions,
                                                            const Clustering* clustering, Rng& rng,
                                                            TieBreak tie = {}) {
  params.validate();
  if (!params.two_stage()) throw std::invalid_argument("run_two_stage: f must be > 0");
  if (static_cast<int>(positions.size()) != params.n) throw std::invalid_argument("run_two_stage: need one ranking per agent");
  const int n = params.n;
  const bool clustered = mechanism != Mechanism::kVanilla;
  std::optional<Clustering> drawn;
  if (clustered && clustering == nullptr) drawn = make_clusters(n, params.c, rng);
  const Clustering single = Clustering::single(n);
  const Clustering& cl = clustered ? (clustering ? *clustering : *drawn) : single;
  const int c = cl.num_clusters();
  const bool cross = clustered && c > 1;
  const std::vector<int> all = detail::all_agents(n);

  // Stage 1.
  ReviewRequest req1;
  req1.reviewers = all;
  req1.candidates = all;
  req1.per_reviewer = params.f;
  req1.clustering = cross ? &cl : nullptr;
  req1.num_agents = n;
  const Assignment first = assign_reviews(req1, rng);
  const GradeProfile profile1 = grade_assignment(first, positions);
  const Stage1Ranking ranked = stage1_rank(mechanism, profile1, clustered ? &cl : nullptr, all, tie);

  StageTrace trace;
  trace.stage1_scores = ranked.scores;
  std::vector<int> final_quota;  // Partition: per-cluster quota of the final k
  std::vector<int> surviving;    // per group
  if (!clustered) {
    trace.accept_quotas = {params.h};
    trace.eliminate_quotas = {params.l};
  } else if (mechanism == Mechanism::kPartition) {
    const std::vector<int> seat_order = random_permutation(c, rng);
    final_quota = even_split(params.k, seat_order);
    trace.accept_quotas = even_split(params.h, seat_order);
    trace.eliminate_quotas = even_split(params.l, random_permutation(c, rng));
    for (int g = 0; g < c; ++g) {
      if (trace.eliminate_quotas[g] > static_cast<int>(cl.members(g).size()) - final_quota[g]) {
        throw InfeasibleError("cluster " + std::to_string(g) + " cannot lose " +
                                  std::to_string(trace.eliminate_quotas[g]) + " and still fill its quota",
                              g);
      }
    }
  } else {
    const std::vector<double> shares = cluster_shares(normalize_profile(profile1), cl, all, params.k);
    std::vector<double> accept_shares(shares.size()), survive_shares(shares.size());
    const int survivors_total = n - params.h - params.l;
    for (std::size_t g = 0; g < shares.size(); ++g) {
      accept_shares[g] = shares[g] * params.h / params.k;
      survive_shares[g] = shares[g] * survivors_total / params.k;
    }
    std::vector<int> caps;
    for (int g = 0; g < c; ++g) caps.push_back(static_cast<int>(cl.members(g).size()));
    trace.accept_quotas = round_with_caps(accept_shares, caps, rng);
    for (int g = 0; g < c; ++g) caps[g] -= trace.accept_quotas[g];
    const std::vector<int> keep = round_with_caps(survive_shares, caps, rng);
    for (int g = 0; g < c; ++g)
      trace.eliminate_quotas.push_back(static_cast<int>(cl.members(g).size()) - trace.accept_quotas[g] - keep[g]);
  }

  std::vector<std::vector<int>> survivors_by_group;
  for (std::size_t g = 0; g < ranked.per_cluster.size(); ++g) {
    const auto& order = ranked.per_cluster[g];
    const int acc = trace.accept_quotas[g];
    const int elim = trace.eliminate_quotas[g];
    if (acc + elim > static_cast<int>(order.size())) {
      throw InfeasibleError("group " + std::to_string(g) + " is too small for its stage-1 cuts", static_cast<int>(g));
    }
    trace.accepted_outright.insert(trace.accepted_outright.end(), order.begin(), order.begin() + acc);
    trace.eliminated.insert(trace.eliminated.end(), order.end() - elim, order.end());
    survivors_by_group.emplace_back(order.begin() + acc, order.end() - elim);
    std::sort(survivors_by_group.back().begin(), survivors_by_group.back().end());
    trace.survivors.insert(trace.survivors.end(), survivors_by_group.back().begin(), survivors_by_group.back().end());
  }
  std::sort(trace.accepted_outright.begin(), trace.accepted_outright.end());
  std::sort(trace.eliminated.begin(), trace.eliminated.end());
  std::sort(trace.survivors.begin(), trace.survivors.end());

  // Stage 2: each reviewer's remaining budget is split over the groups it
  // may review, in proportion to their survivor counts. Each group gets its
  // own assignment and stream so one group's survivors never shape the
  // reviews another group receives.
  const int groups = static_cast<int>(survivors_by_group.size());
  const int budget = params.m - params.f;
  std::vector<std::vector<int>> group_reviewers(static_cast<std::size_t>(groups));
  std::vector<std::vector<int>> group_budgets(static_cast<std::size_t>(groups));
  std::vector<int> rank_in_cluster(static_cast<std::size_t>(n), 0);
  for (int g = 0; g < cl.num_clusters(); ++g)
    for (std::size_t i = 0; i < cl.members(g).size(); ++i) rank_in_cluster[cl.members(g)[i]] = static_cast<int>(i);
  std::vector<char> survived(static_cast<std::size_t>(n), 0);
  for (int x : trace.survivors) survived[x] = 1;
  for (int r = 0; r < n; ++r) {
    std::vector<double> weights(static_cast<std::size_t>(groups), 0.0);
    for (int g = 0; g < groups; ++g)
      if (!cross || g != cl.of(r)) weights[g] = static_cast<double>(survivors_by_group[g].size());
    // Decided from counts alone, so it never depends on what anyone reported.
    const double pool = std::accumulate(weights.begin(), weights.end(), 0.0) - survived[r];
    if (pool < budget) {
      throw InfeasibleError("reviewer " + std::to_string(r) + " has " + std::to_string(static_cast<int>(pool)) +
                                " stage-2 candidates but needs " + std::to_string(budget),
                            r);
    }
    const double u = (rank_in_cluster[r] + 0.5) / static_cast<double>(cl.members(cl.of(r)).size());
    const std::vector<int> split = detail::proportional_split(budget, weights, u);
    for (int g = 0; g < groups; ++g) {
      if (split[g] == 0) continue;
      // Targets already reviewed in stage 1 are skipped; the shortfall is
      // not moved to another group, which would let one group's survivors
      // shape the reviews another receives.
      int open = 0;
      for (int x : survivors_by_group[g]) open += x != r && !first.has(r, x);
      const int take = std::min(split[g], open);
      trace.stage2_shortfall += split[g] - take;
      if (take > 0) {
        group_reviewers[g].push_back(r);
        group_budgets[g].push_back(take);
      }
    }
  }
  const std::uint64_t stage2_base = rng();
  Assignment second;
  second.reviewees_of.assign(static_cast<std::size_t>(n), {});
  std::vector<Assignment> parts;
  for (int g = 0; g < groups; ++g) {
    ReviewRequest req;
    req.reviewers = group_reviewers[g];
    req.candidates = survivors_by_group[g];
    req.budgets = group_budgets[g];
    req.exclude = &first;
    req.num_agents = n;
    Rng group_rng = make_rng({stage2_base, static_cast<std::uint64_t>(g)});
    parts.push_back(assign_reviews(req, group_rng));
  }
  for (const Assignment& part : parts)
    for (int r = 0; r < n; ++r)
      second.reviewees_of[r].insert(second.reviewees_of[r].end(), part.reviewees_of[r].begin(),
                                    part.reviewees_of[r].end());
  for (auto& v : second.reviewees_of) std::sort(v.begin(), v.end());

  const GradeProfile profile2 = grade_assignment(second, positions);
  const GradeProfile pooled =
      params.pool_stage1 ? pool_profiles(restrict_profile(profile1, trace.survivors), profile2) : profile2;
  const int remaining = params.k - static_cast<int>(trace.accepted_outright.size());

  SelectionResult stage2;
  if (mechanism == Mechanism::kPartition) {
    std::vector<int> quotas(static_cast<std::size_t>(c));
    for (int g = 0; g < c; ++g) quotas[g] = final_quota[g] - trace.accept_quotas[g];
    stage2 = detail::select_with_quotas(cl, trace.survivors, quotas,
                                        detail::masked(mean_received(pooled), trace.survivors), tie);
  } else {
    stage2 = detail::select(mechanism, pooled, cl, trace.survivors, remaining, rng, tie);
  }
  trace.stage2_selected = stage2.selected;
  trace.stage2_quotas = stage2.quotas;

  SelectionResult result = std::move(stage2);
  result.selected.insert(result.selected.end(), trace.accepted_outright.begin(), trace.accepted_outright.end());
  std::sort(result.selected.begin(), result.selected.end());
  if (clustered) {
    for (int x : trace.accepted_outright) result.per_cluster[cl.of(x)].push_back(x);
    for (auto& v : result.per_cluster) std::sort(v.begin(), v.end());
  }
  return {std::move(result), std::move(trace)};
}

}  // namespace peersel
