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

#include "peersel/assign.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <optional>
#include <set>
#include <vector>

#include "support/max_flow.hpp"

namespace peersel {
namespace {

std::vector<int> iota_vec(int n) {
  std::vector<int> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

std::vector<int> cluster_sizes(const Clustering& cl) {
  std::vector<int> sizes;
  for (int c = 0; c < cl.num_clusters(); ++c) sizes.push_back(static_cast<int>(cl.members(c).size()));
  std::sort(sizes.begin(), sizes.end());
  return sizes;
}

TEST(MakeClusters, Examples) {
  Rng rng(1);
  EXPECT_EQ(cluster_sizes(make_clusters(6, 3, rng)), (std::vector<int>{2, 2, 2}));
  EXPECT_EQ(cluster_sizes(make_clusters(7, 3, rng)), (std::vector<int>{2, 2, 3}));
  const Clustering one = make_clusters(5, 1, rng);
  for (int a = 0; a < 5; ++a) EXPECT_EQ(one.of(a), 0);
  EXPECT_THROW(make_clusters(3, 4, rng), std::invalid_argument);
  EXPECT_THROW(make_clusters(3, 0, rng), std::invalid_argument);
}

TEST(MakeClusters, NearEqualAndCovering) {
  Rng rng(2);
  for (int rep = 0; rep < 500; ++rep) {
    const int n = 1 + uniform_below(rng, 60);
    const int c = 1 + uniform_below(rng, n);
    const Clustering cl = make_clusters(n, c, rng);
    ASSERT_EQ(cl.num_agents(), n);
    const auto sizes = cluster_sizes(cl);
    EXPECT_LE(sizes.back() - sizes.front(), 1);
    EXPECT_EQ(std::accumulate(sizes.begin(), sizes.end(), 0), n);
    for (int k = 0; k < c; ++k)
      for (int a : cl.members(k)) EXPECT_EQ(cl.of(a), k);
  }
}

TEST(MakeClusters, MembershipIsUniform) {
  // Agent 0 should land in each of 3 clusters a third of the time, and
  // agents 0 and 1 should share a cluster with probability (s-1)/(n-1).
  Rng rng(3);
  const int trials = 30000;
  std::vector<int> hits(3, 0);
  int together = 0;
  for (int t = 0; t < trials; ++t) {
    const Clustering cl = make_clusters(9, 3, rng);
    ++hits[cl.of(0)];
    together += cl.of(0) == cl.of(1);
  }
  for (int h : hits) EXPECT_NEAR(static_cast<double>(h) / trials, 1.0 / 3.0, 0.015);
  EXPECT_NEAR(static_cast<double>(together) / trials, 2.0 / 8.0, 0.015);
}

TEST(AssignReviews, CompleteAssignment) {
  Rng rng(4);
  const auto all = iota_vec(6);
  const Assignment a = assign_reviews(all, all, 5, nullptr, rng);
  for (int r = 0; r < 6; ++r) {
    std::vector<int> others;
    for (int x = 0; x < 6; ++x)
      if (x != r) others.push_back(x);
    EXPECT_EQ(a.reviewees_of[r], others);
  }
  for (int count : a.received_counts()) EXPECT_EQ(count, 5);
}

TEST(AssignReviews, TwoClustersForced) {
  Rng rng(5);
  const Clustering cl({0, 0, 0, 1, 1, 1}, 2);
  const auto all = iota_vec(6);
  const Assignment a = assign_reviews(all, all, 3, &cl, rng);
  for (int r = 0; r < 3; ++r) EXPECT_EQ(a.reviewees_of[r], (std::vector<int>{3, 4, 5}));
  for (int r = 3; r < 6; ++r) EXPECT_EQ(a.reviewees_of[r], (std::vector<int>{0, 1, 2}));
}

TEST(AssignReviews, CirculantExactLoads) {
  Rng rng(6);
  const auto all = iota_vec(100);
  const Assignment a = assign_reviews(all, all, 5, nullptr, rng);
  for (int count : a.received_counts()) EXPECT_EQ(count, 5);
  for (int r = 0; r < 100; ++r) EXPECT_EQ(a.reviewees_of[r].size(), 5u);
}

TEST(AssignReviews, InfeasibleNamesReviewer) {
  Rng rng(7);
  const Clustering cl({0, 0, 0, 0, 1, 1}, 2);
  const auto all = iota_vec(6);
  // Agents in cluster 0 see only two eligible candidates.
  try {
    assign_reviews(all, all, 3, &cl, rng);
    FAIL() << "expected InfeasibleError";
  } catch (const InfeasibleError& e) {
    EXPECT_GE(e.agent(), 0);
    EXPECT_LT(e.agent(), 4);
  }
  EXPECT_THROW(assign_reviews(all, all, 6, nullptr, rng), InfeasibleError);
}

TEST(AssignReviews, SameSeedSameAssignment) {
  const Clustering cl({0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1}, 3);
  const auto all = iota_vec(11);
  Rng a(8), b(8);
  EXPECT_EQ(assign_reviews(all, all, 4, &cl, a).reviewees_of, assign_reviews(all, all, 4, &cl, b).reviewees_of);
}

TEST(AssignReviews, ExcludedPairsAreSkipped) {
  Rng rng(9);
  const auto all = iota_vec(12);
  const Assignment first = assign_reviews(all, all, 4, nullptr, rng);
  ReviewRequest req;
  req.reviewers = all;
  req.candidates = all;
  req.per_reviewer = 5;
  req.exclude = &first;
  const Assignment second = assign_reviews(req, rng);
  for (int r = 0; r < 12; ++r) {
    EXPECT_EQ(second.reviewees_of[r].size(), 5u);
    for (int x : second.reviewees_of[r]) EXPECT_FALSE(first.has(r, x));
  }
}

struct Instance {
  int n = 0;
  std::vector<int> reviewers, candidates, budgets;
  std::optional<Clustering> clustering;
  std::optional<Assignment> exclude;
};

std::vector<int> random_subset(int n, int min_size, Rng& rng) {
  const int size = min_size + uniform_below(rng, n - min_size + 1);
  auto perm = random_permutation(n, rng);
  perm.resize(size);
  std::sort(perm.begin(), perm.end());
  return perm;
}

// Eligibility as stated by the contract, written independently of the
// builder.
std::vector<std::vector<char>> eligibility(const Instance& in) {
  std::vector<std::vector<char>> e(in.n, std::vector<char>(in.n, 0));
  std::vector<char> cand(in.n, 0);
  for (int x : in.candidates) cand[x] = 1;
  for (int r = 0; r < in.n; ++r)
    for (int x = 0; x < in.n; ++x) {
      bool ok = cand[x] && x != r;
      if (in.clustering && in.clustering->of(r) == in.clustering->of(x)) ok = false;
      if (in.exclude && in.exclude->has(r, x)) ok = false;
      e[r][x] = ok;
    }
  return e;
}

Instance random_instance(Rng& rng, bool want_feasible) {
  Instance in;
  in.n = 2 + uniform_below(rng, 29);
  const bool full = uniform_below(rng, 2) == 0;
  in.reviewers = full ? iota_vec(in.n) : random_subset(in.n, 1, rng);
  in.candidates = full ? iota_vec(in.n) : random_subset(in.n, 1, rng);
  if (uniform_below(rng, 2) == 0) {
    const int c = 2 + uniform_below(rng, std::min(4, in.n - 1));
    in.clustering = make_clusters(in.n, c, rng);
  }
  if (uniform_below(rng, 4) == 0) {
    Rng sub(uniform_below(rng, 1 << 30));
    Assignment ex;
    ex.reviewees_of.assign(in.n, {});
    for (int r = 0; r < in.n; ++r)
      for (int x = 0; x < in.n; ++x)
        if (x != r && uniform01(sub) < 0.2) ex.reviewees_of[r].push_back(x);
    in.exclude = ex;
  }
  const auto e = eligibility(in);
  std::vector<int> pool;
  for (int r : in.reviewers) pool.push_back(static_cast<int>(std::count(e[r].begin(), e[r].end(), 1)));
  const int min_pool = *std::min_element(pool.begin(), pool.end());
  const bool per_reviewer_budgets = uniform_below(rng, 3) == 0;
  if (want_feasible) {
    if (per_reviewer_budgets) {
      for (int p : pool) in.budgets.push_back(uniform_below(rng, p + 1));
    } else {
      in.budgets.assign(pool.size(), uniform_below(rng, min_pool + 1));
    }
  } else {
    // Push one reviewer past its pool.
    in.budgets.assign(pool.size(), 0);
    for (std::size_t i = 0; i < pool.size(); ++i) in.budgets[i] = uniform_below(rng, pool[i] + 1);
    const std::size_t victim = uniform_below(rng, static_cast<int>(pool.size()));
    in.budgets[victim] = pool[victim] + 1 + uniform_below(rng, 3);
  }
  return in;
}

Assignment run(const Instance& in, Rng& rng) {
  ReviewRequest req;
  req.reviewers = in.reviewers;
  req.candidates = in.candidates;
  req.budgets = in.budgets;
  req.clustering = in.clustering ? &*in.clustering : nullptr;
  req.exclude = in.exclude ? &*in.exclude : nullptr;
  req.num_agents = in.n;
  return assign_reviews(req, rng);
}

TEST(AssignReviews, RandomFeasibleInstancesMeetContract) {
  Rng gen(10);
  int balanced_checks = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const Instance in = random_instance(gen, true);
    Rng rng(static_cast<std::uint64_t>(rep));
    const Assignment a = run(in, rng);
    const auto e = eligibility(in);
    ASSERT_EQ(a.num_agents(), in.n);

    std::vector<char> is_reviewer(in.n, 0);
    for (std::size_t i = 0; i < in.reviewers.size(); ++i) {
      const int r = in.reviewers[i];
      is_reviewer[r] = 1;
      const auto& got = a.reviewees_of[r];
      ASSERT_EQ(static_cast<int>(got.size()), in.budgets[i]) << "rep " << rep;
      ASSERT_TRUE(std::is_sorted(got.begin(), got.end()));
      ASSERT_EQ(std::adjacent_find(got.begin(), got.end()), got.end());
      for (int x : got) ASSERT_TRUE(e[r][x]) << "rep " << rep << " pair " << r << "->" << x;
    }
    for (int r = 0; r < in.n; ++r)
      if (!is_reviewer[r]) ASSERT_TRUE(a.reviewees_of[r].empty());

    const auto counts = a.received_counts();
    int lo = 1 << 30, hi = 0;
    for (int x : in.candidates) {
      lo = std::min(lo, counts[x]);
      hi = std::max(hi, counts[x]);
    }
    const long total = std::accumulate(in.budgets.begin(), in.budgets.end(), 0L);
    const int floor_load = static_cast<int>(total / static_cast<long>(in.candidates.size()));
    const int ceil_load = floor_load + (total % static_cast<long>(in.candidates.size()) != 0);
    const bool oracle = testing::loads_feasible(e, in.reviewers, in.budgets, in.candidates, floor_load, ceil_load);
    if (hi - lo <= 1) EXPECT_TRUE(oracle) << "oracle disagrees at rep " << rep;
    if (oracle) {
      ++balanced_checks;
      EXPECT_LE(hi - lo, 1) << "rep " << rep;
    }
  }
  EXPECT_GT(balanced_checks, 500);
}

TEST(AssignReviews, RandomInfeasibleInstancesRaise) {
  Rng gen(11);
  for (int rep = 0; rep < 1000; ++rep) {
    const Instance in = random_instance(gen, false);
    const auto e = eligibility(in);
    Rng rng(static_cast<std::uint64_t>(rep));
    try {
      run(in, rng);
      FAIL() << "rep " << rep << " did not raise";
    } catch (const InfeasibleError& err) {
      const int r = err.agent();
      const auto it = std::find(in.reviewers.begin(), in.reviewers.end(), r);
      ASSERT_NE(it, in.reviewers.end());
      const int pool = static_cast<int>(std::count(e[r].begin(), e[r].end(), 1));
      EXPECT_LT(pool, in.budgets[it - in.reviewers.begin()]);
    }
  }
}

TEST(AssignReviews, RandomInstancesAreReproducible) {
  Rng gen(12);
  for (int rep = 0; rep < 200; ++rep) {
    const Instance in = random_instance(gen, true);
    Rng a(rep), b(rep);
    ASSERT_EQ(run(in, a).reviewees_of, run(in, b).reviewees_of);
  }
}

}  // namespace
}  // namespace peersel
