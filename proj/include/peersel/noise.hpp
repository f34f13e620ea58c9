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

// Mallows noise model over rankings and Kendall-tau distance.
//
// A Ranking lists agent indices best-first. The ground truth used throughout
// the library is the identity ranking: agent 0 is truly the best.

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "peersel/random.hpp"

namespace peersel {

class Dispersion {
 public:
  explicit Dispersion(double phi) : phi_(phi) {
    if (!(phi >= 0.0 && phi <= 1.0)) {
      throw std::invalid_argument("Dispersion: phi must lie in [0, 1]");
    }
  }
  double value() const { return phi_; }

 private:
  double phi_;
};

class Ranking {
 public:
  Ranking() = default;

  // Throws std::invalid_argument unless `order` is a permutation of 0..n-1.
  explicit Ranking(std::vector<int> order) : order_(std::move(order)) {
    std::vector<char> seen(order_.size(), 0);
    for (int a : order_) {
      if (a < 0 || static_cast<std::size_t>(a) >= order_.size() || seen[a]) {
        throw std::invalid_argument("Ranking: not a permutation");
      }
      seen[a] = 1;
    }
  }

  static Ranking identity(int n) {
    Ranking r;
    r.order_.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) r.order_[i] = i;
    return r;
  }

  int size() const { return static_cast<int>(order_.size()); }
  int at(int position) const { return order_.at(position); }
  std::span<const int> order() const { return order_; }

  // positions()[agent] = 0-based position of `agent` in this ranking.
  std::vector<int> positions() const {
    std::vector<int> pos(order_.size());
    for (std::size_t p = 0; p < order_.size(); ++p) pos[order_[p]] = static_cast<int>(p);
    return pos;
  }

  bool operator==(const Ranking&) const = default;

 private:
  friend Ranking sample_mallows(const Ranking&, Dispersion, Rng&);
  std::vector<int> order_;
};

namespace detail {

// Counts inversions of `seq` in O(n log n); `seq` is clobbered.
inline std::int64_t count_inversions(std::vector<int>& seq) {
  std::vector<int> buf(seq.size());
  std::int64_t inversions = 0;
  for (std::size_t width = 1; width < seq.size(); width *= 2) {
    for (std::size_t lo = 0; lo < seq.size(); lo += 2 * width) {
      std::size_t mid = std::min(lo + width, seq.size());
      std::size_t hi = std::min(lo + 2 * width, seq.size());
      std::size_t i = lo, j = mid, out = lo;
      while (i < mid && j < hi) {
        if (seq[j] < seq[i]) {
          inversions += static_cast<std::int64_t>(mid - i);
          buf[out++] = seq[j++];
        } else {
          buf[out++] = seq[i++];
        }
      }
      while (i < mid) buf[out++] = seq[i++];
      while (j < hi) buf[out++] = seq[j++];
    }
    seq.swap(buf);
  }
  return inversions;
}

}  // namespace detail

// Number of unordered pairs ordered differently by `a` and `b`.
inline std::int64_t kendall_tau(const Ranking& a, const Ranking& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("kendall_tau: rankings differ in length");
  }
  const std::vector<int> pos_b = b.positions();
  std::vector<int> seq(static_cast<std::size_t>(a.size()));
  for (int p = 0; p < a.size(); ++p) seq[p] = pos_b[a.at(p)];
  return detail::count_inversions(seq);
}

// Normalizing constant prod_{j=1..n} (1 + phi + ... + phi^{j-1}).
inline double mallows_normalizer(int n, double phi) {
  double z = 1.0, partial = 0.0, power = 1.0;
  for (int j = 1; j <= n; ++j) {
    partial += power;
    power *= phi;
    z *= partial;
  }
  return z;
}

// Exact Mallows probability of `r` around `sigma`. Meant for small n; with
// phi = 0 the distribution is a point mass on sigma.
inline double mallows_pmf(const Ranking& r, const Ranking& sigma, Dispersion phi) {
  const std::int64_t d = kendall_tau(r, sigma);
  if (phi.value() == 0.0) return d == 0 ? 1.0 : 0.0;
  return std::pow(phi.value(), static_cast<double>(d)) /
         mallows_normalizer(r.size(), phi.value());
}

// Repeated-insertion sampler. The j-th item of sigma (0-based) is inserted
// i slots from the back of the partial ranking with probability
// phi^i / (1 + phi + ... + phi^j), creating exactly i new inversions.
inline Ranking sample_mallows(const Ranking& sigma, Dispersion phi, Rng& rng) {
  const int n = sigma.size();
  const double f = phi.value();
  Ranking out;
  out.order_.reserve(static_cast<std::size_t>(n));
  if (f == 0.0) {
    out.order_.assign(sigma.order().begin(), sigma.order().end());
    return out;
  }
  const double log_f = f < 1.0 ? std::log(f) : 0.0;
  double f_pow = f;  // phi^(j+1): mass beyond the last slot
  for (int j = 0; j < n; ++j) {
    int back = 0;
    if (f == 1.0) {
      back = uniform_below(rng, j + 1);
    } else if (j > 0) {
      const double u = uniform01(rng);
      back = static_cast<int>(std::floor(std::log1p(-u * (1.0 - f_pow)) / log_f));
      if (back > j) back = j;
      if (back < 0) back = 0;
    }
    f_pow *= f;
    out.order_.insert(out.order_.end() - back, sigma.at(j));
  }
  return out;
}

}  // namespace peersel
