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

// Random clusterings and balanced review assignments.

#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "peersel/errors.hpp"
#include "peersel/random.hpp"

namespace peersel {

class Clustering {
 public:
  Clustering() = default;

  Clustering(std::vector<int> cluster_of, int num_clusters)
      : cluster_of_(std::move(cluster_of)), members_(static_cast<std::size_t>(num_clusters)) {
    if (num_clusters < 1) throw std::invalid_argument("Clustering: need at least one cluster");
    for (std::size_t a = 0; a < cluster_of_.size(); ++a) {
      const int c = cluster_of_[a];
      if (c < 0 || c >= num_clusters) throw std::invalid_argument("Clustering: cluster id out of range");
      members_[c].push_back(static_cast<int>(a));
    }
  }

  // Everyone in cluster 0.
  static Clustering single(int n) { return Clustering(std::vector<int>(static_cast<std::size_t>(n), 0), 1); }

  int num_agents() const { return static_cast<int>(cluster_of_.size()); }
  int num_clusters() const { return static_cast<int>(members_.size()); }
  int of(int agent) const { return cluster_of_[agent]; }
  const std::vector<int>& members(int cluster) const { return members_[cluster]; }
  std::span<const int> cluster_of() const { return cluster_of_; }

  bool operator==(const Clustering& o) const { return cluster_of_ == o.cluster_of_ && members_.size() == o.members_.size(); }

 private:
  std::vector<int> cluster_of_;
  std::vector<std::vector<int>> members_;  // ascending agent ids
};

// Uniformly random split of n agents into c clusters of size floor(n/c) or
// ceil(n/c).
inline Clustering make_clusters(int n, int c, Rng& rng) {
  if (c < 1 || c > n) throw std::invalid_argument("make_clusters: need 1 <= c <= n");
  const std::vector<int> perm = random_permutation(n, rng);
  std::vector<int> cluster_of(static_cast<std::size_t>(n));
  for (int p = 0; p < n; ++p) cluster_of[perm[p]] = p % c;
  return Clustering(std::move(cluster_of), c);
}

struct Assignment {
  // reviewees_of[r] is sorted; empty for agents that do not review.
  std::vector<std::vector<int>> reviewees_of;

  int num_agents() const { return static_cast<int>(reviewees_of.size()); }

  bool has(int reviewer, int candidate) const {
    if (reviewer < 0 || reviewer >= num_agents()) return false;
    const auto& v = reviewees_of[reviewer];
    return std::binary_search(v.begin(), v.end(), candidate);
  }

  std::vector<int> received_counts() const {
    std::vector<int> counts(reviewees_of.size(), 0);
    for (const auto& v : reviewees_of)
      for (int x : v) ++counts[x];
    return counts;
  }
};

struct ReviewRequest {
  std::vector<int> reviewers;
  std::vector<int> candidates;
  int per_reviewer = 0;
  // Optional per-reviewer budgets aligned with `reviewers`; overrides
  // per_reviewer when non-empty.
  std::vector<int> budgets;
  // Reviewers never review their own cluster.
  const Clustering* clustering = nullptr;
  // Pairs already used (e.g. by an earlier stage) are not eligible again.
  const Assignment* exclude = nullptr;
  // Size of the agent universe; 0 infers it from the ids above.
  int num_agents = 0;
};

namespace detail {

class AssignmentBuilder {
 public:
  AssignmentBuilder(const ReviewRequest& req) : req_(req) {
    n_ = req.num_agents;
    for (int r : req.reviewers) n_ = std::max(n_, r + 1);
    for (int x : req.candidates) n_ = std::max(n_, x + 1);
    if (req.clustering) n_ = std::max(n_, req.clustering->num_agents());
    if (req.exclude) n_ = std::max(n_, req.exclude->num_agents());
    is_candidate_.assign(static_cast<std::size_t>(n_), 0);
    for (int x : req.candidates) {
      if (x < 0) throw std::invalid_argument("assign_reviews: negative candidate id");
      if (is_candidate_[x]) throw std::invalid_argument("assign_reviews: duplicate candidate");
      is_candidate_[x] = 1;
    }
    if (!req.budgets.empty() && req.budgets.size() != req.reviewers.size()) {
      throw std::invalid_argument("assign_reviews: budgets misaligned with reviewers");
    }
    budget_.assign(static_cast<std::size_t>(n_), 0);
    std::vector<char> is_reviewer(static_cast<std::size_t>(n_), 0);
    for (std::size_t i = 0; i < req.reviewers.size(); ++i) {
      const int r = req.reviewers[i];
      if (r < 0) throw std::invalid_argument("assign_reviews: negative reviewer id");
      if (is_reviewer[r]) throw std::invalid_argument("assign_reviews: duplicate reviewer");
      is_reviewer[r] = 1;
      const int b = req.budgets.empty() ? req.per_reviewer : req.budgets.at(i);
      if (b < 0) throw std::invalid_argument("assign_reviews: negative budget");
      budget_[r] = b;
    }
    if (req.exclude) {
      excluded_.assign(static_cast<std::size_t>(n_) * n_, 0);
      for (int r = 0; r < req.exclude->num_agents(); ++r)
        for (int x : req.exclude->reviewees_of[r]) excluded_[idx(r, x)] = 1;
    }
    holds_.assign(static_cast<std::size_t>(n_) * n_, 0);
  }

  Assignment build(Rng& rng) {
    check_feasible();
    result_.reviewees_of.assign(static_cast<std::size_t>(n_), {});
    load_.assign(static_cast<std::size_t>(n_), 0);
    holders_.assign(static_cast<std::size_t>(n_), {});

    std::vector<int> circle(req_.candidates);
    std::sort(circle.begin(), circle.end());
    std::shuffle(circle.begin(), circle.end(), rng);

    std::vector<int> sorted_reviewers(req_.reviewers);
    std::sort(sorted_reviewers.begin(), sorted_reviewers.end());
    const bool uniform = req_.budgets.empty() ||
                         std::all_of(req_.budgets.begin(), req_.budgets.end(),
                                     [&](int b) { return b == req_.budgets.front(); });
    const bool aligned = uniform && !req_.clustering && !req_.exclude && same_set(sorted_reviewers);
    if (aligned) {
      fill_circulant(circle);
    } else {
      std::vector<int> order(sorted_reviewers);
      std::shuffle(order.begin(), order.end(), rng);
      fill_tiled(circle, order);
    }
    rebalance(circle);
    for (auto& v : result_.reviewees_of) std::sort(v.begin(), v.end());
    return std::move(result_);
  }

 private:
  std::size_t idx(int r, int x) const { return static_cast<std::size_t>(r) * n_ + x; }

  bool eligible(int r, int x) const {
    if (!is_candidate_[x] || x == r) return false;
    if (req_.clustering && req_.clustering->of(x) == req_.clustering->of(r)) return false;
    if (!excluded_.empty() && excluded_[idx(r, x)]) return false;
    return true;
  }

  bool same_set(const std::vector<int>& sorted_reviewers) const {
    std::vector<int> c(req_.candidates);
    std::sort(c.begin(), c.end());
    return c == sorted_reviewers;
  }

  void check_feasible() const {
    for (int r : req_.reviewers) {
      int count = 0;
      for (int x : req_.candidates) count += eligible(r, x);
      if (count < budget_[r]) {
        throw InfeasibleError("reviewer " + std::to_string(r) + " has " + std::to_string(count) +
                                  " eligible candidates but needs " + std::to_string(budget_[r]),
                              r);
      }
    }
  }

  void give(int r, int x) {
    result_.reviewees_of[r].push_back(x);
    holds_[idx(r, x)] = 1;
    ++load_[x];
    holders_[x].push_back(r);
  }

  void take_back(int r, int x) {
    auto& v = result_.reviewees_of[r];
    v.erase(std::find(v.begin(), v.end(), x));
    holds_[idx(r, x)] = 0;
    --load_[x];
    auto& h = holders_[x];
    h.erase(std::find(h.begin(), h.end(), r));
  }

  bool takeable(int r, int x) const { return eligible(r, x) && !holds_[idx(r, x)]; }

  // Reviewer at circle position p takes positions p+1, p+2, ... (skipping
  // anything ineligible); with no constraints every load is exactly the
  // budget.
  void fill_circulant(const std::vector<int>& circle) {
    const std::size_t size = circle.size();
    for (std::size_t p = 0; p < size; ++p) {
      const int r = circle[p];
      int need = budget_[r];
      for (std::size_t step = 1; need > 0 && step <= size; ++step) {
        const int x = circle[(p + step) % size];
        if (takeable(r, x)) {
          give(r, x);
          --need;
        }
      }
    }
  }

  // Consecutive windows over the circle; candidates a reviewer cannot take
  // are deferred to the next reviewers so the tiling stays level.
  void fill_tiled(const std::vector<int>& circle, const std::vector<int>& order) {
    if (circle.empty()) return;
    std::size_t ptr = 0;
    std::vector<int> deferred, keep;
    for (int r : order) {
      int need = budget_[r];
      keep.clear();
      for (int x : deferred) {
        if (need > 0 && takeable(r, x)) {
          give(r, x);
          --need;
        } else {
          keep.push_back(x);
        }
      }
      deferred.swap(keep);
      for (std::size_t scanned = 0; need > 0 && scanned < 2 * circle.size(); ++scanned) {
        const int x = circle[ptr % circle.size()];
        ++ptr;
        if (takeable(r, x)) {
          give(r, x);
          --need;
        } else {
          deferred.push_back(x);
        }
      }
      if (need > 0) {
        // Cannot happen after check_feasible, except through a bug.
        throw InfeasibleError("assign_reviews: fill failed for reviewer " + std::to_string(r), r);
      }
    }
  }

  // Moves single reviews along alternating paths from heavily to lightly
  // loaded candidates until no path improves the spread. The fixed point is
  // the most level load vector the eligibility graph admits.
  void rebalance(const std::vector<int>& circle) {
    if (circle.empty()) return;
    std::vector<int> parent_reviewer(static_cast<std::size_t>(n_));
    std::vector<int> parent_candidate(static_cast<std::size_t>(n_));
    std::vector<char> seen_c(static_cast<std::size_t>(n_)), seen_r(static_cast<std::size_t>(n_));
    std::vector<int> queue;
    while (true) {
      int hi = load_[circle[0]], lo = hi;
      for (int x : circle) {
        hi = std::max(hi, load_[x]);
        lo = std::min(lo, load_[x]);
      }
      if (hi - lo <= 1) return;
      bool moved = false;
      for (int level = hi; level >= lo + 2 && !moved; --level) {
        std::fill(seen_c.begin(), seen_c.end(), 0);
        std::fill(seen_r.begin(), seen_r.end(), 0);
        queue.clear();
        for (int x : circle) {
          if (load_[x] == level) {
            seen_c[x] = 1;
            parent_reviewer[x] = -1;
            queue.push_back(x);
          }
        }
        int found = -1;
        for (std::size_t head = 0; head < queue.size() && found < 0; ++head) {
          const int x = queue[head];
          for (int r : holders_[x]) {
            if (seen_r[r]) continue;
            seen_r[r] = 1;
            for (int y : circle) {
              if (seen_c[y] || !takeable(r, y)) continue;
              seen_c[y] = 1;
              parent_reviewer[y] = r;
              parent_candidate[y] = x;
              if (load_[y] <= level - 2) {
                found = y;
                break;
              }
              queue.push_back(y);
            }
            if (found >= 0) break;
          }
        }
        if (found >= 0) {
          for (int y = found; parent_reviewer[y] >= 0;) {
            const int r = parent_reviewer[y];
            const int x = parent_candidate[y];
            take_back(r, x);
            give(r, y);
            y = x;
          }
          moved = true;
        }
      }
      if (!moved) return;
    }
  }

  const ReviewRequest& req_;
  int n_ = 0;
  std::vector<char> is_candidate_;
  std::vector<int> budget_;
  std::vector<char> excluded_;
  std::vector<char> holds_;
  std::vector<int> load_;
  std::vector<std::vector<int>> holders_;
  Assignment result_;
};

}  // namespace detail

// Gives every reviewer its budget of distinct eligible candidates, keeping
// the number of reviews each candidate receives as level as the constraints
// allow (within one whenever that is achievable). Throws InfeasibleError,
// naming the reviewer, when some reviewer has too few eligible candidates.
inline Assignment assign_reviews(const ReviewRequest& req, Rng& rng) {
  return detail::AssignmentBuilder(req).build(rng);
}

inline Assignment assign_reviews(std::span<const int> reviewers, std::span<const int> candidates,
                                 int per_reviewer, const Clustering* clustering, Rng& rng) {
  ReviewRequest req;
  req.reviewers.assign(reviewers.begin(), reviewers.end());
  req.candidates.assign(candidates.begin(), candidates.end());
  req.per_reviewer = per_reviewer;
  req.clustering = clustering;
  return assign_reviews(req, rng);
}

}  // namespace peersel
