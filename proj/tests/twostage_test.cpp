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

#include "peersel/twostage.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "peersel/metrics.hpp"

namespace peersel {
namespace {

constexpr Mechanism kAll[] = {Mechanism::kVanilla, Mechanism::kPartition, Mechanism::kExactDollarPartition};

RankingPositions truth(int n) { return RankingPositions(n, Ranking::identity(n).positions()); }

RankingPositions noisy(int n, double phi, Rng& rng) {
  RankingPositions out;
  const Ranking sigma = Ranking::identity(n);
  for (int r = 0; r < n; ++r) out.push_back(sample_mallows(sigma, Dispersion(phi), rng).positions());
  return out;
}

std::vector<int> iota_vec(int n) {
  std::vector<int> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

bool contains(const std::vector<int>& v, int x) { return std::find(v.begin(), v.end(), x) != v.end(); }

TwoStageParams params(int n, int k, int m, int f, int h, int l, int c) {
  TwoStageParams p;
  p.n = n;
  p.k = k;
  p.m = m;
  p.f = f;
  p.h = h;
  p.l = l;
  p.c = c;
  return p;
}

TEST(TwoStageParams, Validation) {
  EXPECT_NO_THROW(params(20, 5, 4, 1, 2, 5, 2).validate());
  EXPECT_NO_THROW(params(20, 5, 4, 0, 0, 0, 1).validate());
  EXPECT_THROW(params(20, 5, 4, 4, 0, 0, 1).validate(), std::invalid_argument);
  EXPECT_THROW(params(20, 5, 4, 1, 6, 0, 1).validate(), std::invalid_argument);
  EXPECT_THROW(params(20, 5, 4, 1, 0, 16, 1).validate(), std::invalid_argument);
  EXPECT_THROW(params(20, 5, 4, 0, 0, 3, 1).validate(), std::invalid_argument);
  EXPECT_THROW(params(20, 20, 4, 1, 0, 0, 1).validate(), std::invalid_argument);
  EXPECT_THROW(params(20, 5, 20, 1, 0, 0, 1).validate(), std::invalid_argument);
  EXPECT_THROW(params(20, 5, 4, 1, 0, 0, 21).validate(), std::invalid_argument);
}

TEST(ProportionalSplit, FloorOrCeilAndExactTotal) {
  Rng rng(1);
  for (int rep = 0; rep < 2000; ++rep) {
    const int targets = 1 + uniform_below(rng, 6);
    std::vector<double> w(targets);
    for (double& x : w) x = uniform_below(rng, 4);
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    const int budget = uniform_below(rng, 12);
    const auto split = detail::proportional_split(budget, w, uniform01(rng));
    if (total == 0.0) {
      EXPECT_EQ(std::accumulate(split.begin(), split.end(), 0), 0);
      continue;
    }
    EXPECT_EQ(std::accumulate(split.begin(), split.end(), 0), budget);
    for (int i = 0; i < targets; ++i) {
      const double share = budget * w[i] / total;
      EXPECT_GE(split[i], static_cast<int>(std::floor(share + 1e-9)));
      EXPECT_LE(split[i], static_cast<int>(std::ceil(share - 1e-9)));
    }
  }
}

TEST(SingleStage, NoiselessVanillaRecoversTopK) {
  for (int m : {1, 3, 7}) {
    Rng rng(m);
    const auto res = run_single_stage(Mechanism::kVanilla, params(30, 6, m, 0, 0, 0, 1), truth(30), nullptr, rng);
    EXPECT_EQ(res.selected, iota_vec(6)) << "m=" << m;
  }
}

TEST(SingleStage, OneClusterReviewsEveryoneElse) {
  // With c = 1 nobody is outside the reviewer's cluster, so the
  // clustered mechanisms review like Vanilla.
  const Clustering one = Clustering::single(12);
  for (Mechanism mech : {Mechanism::kPartition, Mechanism::kExactDollarPartition}) {
    Rng rng(7);
    const auto res = run_single_stage(mech, params(12, 4, 11, 0, 0, 0, 1), truth(12), &one, rng);
    EXPECT_EQ(res.selected, iota_vec(4));
  }
  for (int m : {1, 4}) {
    Rng rng(m);
    const auto res = run_single_stage(Mechanism::kPartition, params(12, 4, m, 0, 0, 0, 1), truth(12), &one, rng);
    EXPECT_EQ(res.selected, iota_vec(4)) << "m=" << m;
    Rng rng2(m);
    const auto two = run_two_stage(Mechanism::kPartition, params(12, 4, m + 2, 2, 1, 4, 1), truth(12), &one, rng2);
    EXPECT_EQ(two.first.selected, iota_vec(4)) << "m=" << m;
  }
}

TEST(SingleStage, PartitionWithStackedClustersMissesTopK) {
  // Top four all in cluster 0: at most two of them can be chosen.
  const int n = 16;
  std::vector<int> cluster_of(n);
  for (int a = 0; a < n; ++a) cluster_of[a] = a < 8 ? 0 : 1;
  const Clustering cl(cluster_of, 2);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    Rng sample(seed + 100);
    const auto res = run_single_stage(Mechanism::kPartition, params(n, 4, 3, 0, 0, 0, 2), noisy(n, 0.3, sample), &cl, rng);
    EXPECT_LE(precision_at_k(res.selected, 4), 0.5);
  }
}

TEST(SingleStage, SameSeedSameResult) {
  Rng sample(3);
  const auto pos = noisy(40, 0.6, sample);
  for (Mechanism mech : kAll) {
    Rng a(9), b(9);
    const auto x = run_single_stage(mech, params(40, 5, 4, 0, 0, 0, 3), pos, nullptr, a);
    const auto y = run_single_stage(mech, params(40, 5, 4, 0, 0, 0, 3), pos, nullptr, b);
    EXPECT_EQ(x.selected, y.selected);
    EXPECT_EQ(x.scores, y.scores);
  }
}

TEST(TwoStage, NoiselessEliminationKeepsExactlyTopK) {
  const int n = 20, k = 5;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const auto [res, trace] = run_two_stage(Mechanism::kVanilla, params(n, k, 3, 1, 0, n - k, 1), truth(n), nullptr, rng);
    EXPECT_EQ(trace.survivors, iota_vec(k));
    EXPECT_DOUBLE_EQ(precision_at_k(res.selected, k), 1.0);
  }
}

TEST(TwoStage, NoiselessMatchesSingleStage) {
  const int n = 30, k = 6;
  Rng clusters(4);
  const Clustering cl = make_clusters(n, 3, clusters);
  for (Mechanism mech : {Mechanism::kVanilla, Mechanism::kPartition}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng a(seed), b(seed + 1000);
      const auto single = run_single_stage(mech, params(n, k, 5, 0, 0, 0, 3), truth(n), &cl, a);
      const auto [two, trace] = run_two_stage(mech, params(n, k, 5, 2, 3, 9, 3), truth(n), &cl, b);
      EXPECT_EQ(single.selected, two.selected) << mechanism_name(mech) << " seed " << seed;
    }
  }
}

TEST(TwoStage, TracePartitionsCandidates) {
  Rng gen(5);
  int checked = 0;
  for (int rep = 0; rep < 300; ++rep) {
    const Mechanism mech = kAll[uniform_below(gen, 3)];
    const int c = mech == Mechanism::kVanilla ? 1 : 2 + uniform_below(gen, 2);
    const int n = 24 + uniform_below(gen, 30);
    const int k = 2 + uniform_below(gen, 6);
    const int m = 3 + uniform_below(gen, 5);
    const int f = 1 + uniform_below(gen, m - 1);
    const int h = uniform_below(gen, k + 1);
    const int l = uniform_below(gen, (n - k) / 2 + 1);
    const TwoStageParams p = params(n, k, m, f, h, l, c);
    Rng sample(gen());
    const auto pos = noisy(n, uniform01(gen), sample);
    Rng rng(gen());
    StageTrace trace;
    SelectionResult res;
    try {
      std::tie(res, trace) = run_two_stage(mech, p, pos, nullptr, rng);
    } catch (const InfeasibleError&) {
      continue;
    }
    ++checked;
    ASSERT_EQ(static_cast<int>(trace.accepted_outright.size()), h);
    ASSERT_EQ(static_cast<int>(trace.eliminated.size()), l);
    std::vector<int> all = trace.accepted_outright;
    all.insert(all.end(), trace.eliminated.begin(), trace.eliminated.end());
    all.insert(all.end(), trace.survivors.begin(), trace.survivors.end());
    std::sort(all.begin(), all.end());
    ASSERT_EQ(all, iota_vec(n));
    ASSERT_EQ(static_cast<int>(res.selected.size()), k);
    std::vector<int> joined = trace.accepted_outright;
    joined.insert(joined.end(), trace.stage2_selected.begin(), trace.stage2_selected.end());
    std::sort(joined.begin(), joined.end());
    ASSERT_EQ(joined, res.selected);
    for (int x : trace.stage2_selected) ASSERT_TRUE(contains(trace.survivors, x));
    ASSERT_GE(trace.stage2_shortfall, 0);
  }
  EXPECT_GT(checked, 250);
}

TEST(TwoStage, SameSeedSameResult) {
  Rng sample(6);
  const auto pos = noisy(40, 0.6, sample);
  for (Mechanism mech : kAll) {
    Rng a(9), b(9);
    const auto x = run_two_stage(mech, params(40, 5, 6, 2, 1, 10, 3), pos, nullptr, a);
    const auto y = run_two_stage(mech, params(40, 5, 6, 2, 1, 10, 3), pos, nullptr, b);
    EXPECT_EQ(x.first.selected, y.first.selected);
    EXPECT_EQ(x.second.survivors, y.second.survivors);
    EXPECT_EQ(x.second.stage2_selected, y.second.stage2_selected);
  }
}

TEST(TwoStage, NoCutsMatchesSingleStageInDistribution) {
  // h = l = 0 only splits the reviews in two rounds; mean precision should
  // agree with the single-stage run at the same total m.
  const int n = 40, k = 6, trials = 3000;
  double single_sum = 0.0, single_sq = 0.0, two_sum = 0.0, two_sq = 0.0;
  Rng gen(7);
  for (int t = 0; t < trials; ++t) {
    const auto pos = noisy(n, 0.7, gen);
    Rng a(gen()), b(gen());
    const double x = precision_at_k(run_single_stage(Mechanism::kVanilla, params(n, k, 6, 0, 0, 0, 1), pos, nullptr, a).selected, k);
    const double y = precision_at_k(run_two_stage(Mechanism::kVanilla, params(n, k, 6, 2, 0, 0, 1), pos, nullptr, b).first.selected, k);
    single_sum += x;
    single_sq += x * x;
    two_sum += y;
    two_sq += y * y;
  }
  const double mx = single_sum / trials, my = two_sum / trials;
  const double se = std::sqrt((single_sq / trials - mx * mx + two_sq / trials - my * my) / trials);
  EXPECT_LT(std::abs(mx - my), 4.0 * se + 1e-12) << mx << " vs " << my;
}

TEST(TwoStage, StageTwoNeverRepeatsStageOnePairs) {
  // m = n - 1 split over two rounds: if no pair repeats, every survivor's
  // pooled score is its mean grade over all other agents.
  const int n = 12, k = 3;
  Rng sample(8);
  const auto pos = noisy(n, 0.5, sample);
  Rng rng(8);
  const auto [res, trace] = run_two_stage(Mechanism::kVanilla, params(n, k, 11, 4, 0, 0, 1), pos, nullptr, rng);
  ASSERT_EQ(static_cast<int>(res.selected.size()), k);
  for (int x = 0; x < n; ++x) {
    double sum = 0.0;
    for (int r = 0; r < n; ++r)
      if (r != x) sum += n - pos[r][x];
    EXPECT_NEAR(res.scores[x], sum / (n - 1), 1e-12) << "agent " << x;
  }
}

TEST(TwoStage, FeasibilityDoesNotDependOnReports) {
  // For Vanilla and Partition the survivor counts are fixed by the seed, so
  // whether stage 2 can run never changes with a deviating report.
  Rng gen(12);
  int feasible = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const int n = 16 + uniform_below(gen, 10);
    const TwoStageParams p = params(n, 3, 6, 2, 0, n - 8 - uniform_below(gen, 4), 3);
    Rng cl_rng(gen());
    const Clustering cl = make_clusters(n, 3, cl_rng);
    auto pos = noisy(n, 0.8, gen);
    const std::uint64_t seed = gen();
    for (Mechanism mech : {Mechanism::kVanilla, Mechanism::kPartition}) {
      auto runs = [&](const RankingPositions& ps) {
        Rng rng(seed);
        try {
          run_two_stage(mech, p, ps, &cl, rng);
          return true;
        } catch (const InfeasibleError&) {
          return false;
        }
      };
      const bool honest = runs(pos);
      feasible += honest;
      for (int d = 0; d < 10; ++d) {
        auto lied = pos;
        lied[uniform_below(gen, n)] = Ranking(random_permutation(n, gen)).positions();
        ASSERT_EQ(runs(lied), honest) << "inst " << inst;
      }
    }
  }
  EXPECT_GT(feasible, 20);
}

TEST(TwoStage, InfeasibleStageTwoRaises) {
  Rng rng(9);
  EXPECT_THROW(run_two_stage(Mechanism::kVanilla, params(10, 2, 9, 1, 0, 8, 1), truth(10), nullptr, rng),
               InfeasibleError);
  EXPECT_THROW(run_two_stage(Mechanism::kVanilla, params(10, 2, 4, 0, 0, 0, 1), truth(10), nullptr, rng),
               std::invalid_argument);
}

TEST(TwoStage, PartitionStrategyproof) {
  Rng gen(10);
  for (int inst = 0; inst < 200; ++inst) {
    const int c = 2 + uniform_below(gen, 2);
    const int n = 24 + uniform_below(gen, 20);
    const int k = c + uniform_below(gen, 4);
    const int m = 3 + uniform_below(gen, 3);
    const int f = 1 + uniform_below(gen, m - 1);
    const TwoStageParams p = params(n, k, m, f, uniform_below(gen, k + 1), uniform_below(gen, (n - k) / 2), c);
    Rng cluster_rng(gen());
    const Clustering cl = make_clusters(n, c, cluster_rng);
    auto pos = noisy(n, uniform01(gen), gen);
    const std::uint64_t seed = gen();
    Rng base(seed);
    std::vector<int> truthful;
    try {
      truthful = run_two_stage(Mechanism::kPartition, p, pos, &cl, base).first.selected;
    } catch (const InfeasibleError&) {
      continue;
    }
    for (int d = 0; d < 20; ++d) {
      const int agent = uniform_below(gen, n);
      auto lied = pos;
      lied[agent] = Ranking(random_permutation(n, gen)).positions();
      Rng same(seed);
      const auto got = run_two_stage(Mechanism::kPartition, p, lied, &cl, same).first.selected;
      ASSERT_EQ(contains(truthful, agent), contains(got, agent)) << "inst " << inst;
    }
  }
}

TEST(SingleStage, PartitionStrategyproof) {
  Rng gen(11);
  for (int inst = 0; inst < 200; ++inst) {
    const int c = 2 + uniform_below(gen, 3);
    const int n = 12 + uniform_below(gen, 30);
    const TwoStageParams p = params(n, 1 + uniform_below(gen, n / 2), 1 + uniform_below(gen, n / 2), 0, 0, 0, c);
    Rng cluster_rng(gen());
    const Clustering cl = make_clusters(n, c, cluster_rng);
    const auto pos = noisy(n, uniform01(gen), gen);
    const std::uint64_t seed = gen();
    Rng base(seed);
    const auto truthful = run_single_stage(Mechanism::kPartition, p, pos, &cl, base).selected;
    for (int d = 0; d < 20; ++d) {
      const int agent = uniform_below(gen, n);
      auto lied = pos;
      lied[agent] = Ranking(random_permutation(n, gen)).positions();
      Rng same(seed);
      ASSERT_EQ(contains(truthful, agent),
                contains(run_single_stage(Mechanism::kPartition, p, lied, &cl, same).selected, agent));
    }
  }
}

}  // namespace
}  // namespace peersel
