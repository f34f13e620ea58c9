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

// Normal-approximation model of how extra reviews move an item's chance of
// clearing a fixed acceptance threshold.
//
// Item i collects V ~ Binomial(m, p) supporting votes; it is accepted when
// V / m >= t. For large m, V / m is roughly N(p, p(1-p)/m), so
//   P(m) ~= 1 - Phi((t - p) sqrt(m) / b),  b = sqrt(p(1-p)),
// and the gain from x extra reviews is Phi(z(m+x)) - Phi(z(m)) with
// z(m) = (p - t) sqrt(m) / b.

#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "peersel/random.hpp"

namespace peersel {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

struct AnalyticItem {
  double p = 0.0;
  double b() const { return std::sqrt(p * (1.0 - p)); }
};

namespace detail {
inline void check_model_args(double p, double t, int m) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("theory: p must lie in [0, 1]");
  if (!(t > 0.0 && t < 1.0)) throw std::invalid_argument("theory: t must lie in (0, 1)");
  if (m < 1) throw std::invalid_argument("theory: m must be >= 1");
}
}  // namespace detail

inline double z_score(double p, double t, int m) {
  return (p - t) * std::sqrt(static_cast<double>(m)) / std::sqrt(p * (1.0 - p));
}

// P(p_hat >= t) under the normal approximation. p = 0 and p = 1 are
// deterministic and answered exactly.
inline double accept_probability(double p, double t, int m) {
  detail::check_model_args(p, t, m);
  if (p == 1.0) return 1.0;
  if (p == 0.0) return 0.0;
  return 1.0 - normal_cdf(-z_score(p, t, m));
}

struct GainEstimate {
  double exact = 0.0;     // Phi(z(m+x)) - Phi(z(m))
  double midpoint = 0.0;  // mean-value form with the point taken mid-range
};

inline GainEstimate delta_p(double p, double t, int m, int x) {
  detail::check_model_args(p, t, m);
  if (x < 1) throw std::invalid_argument("delta_p: x must be >= 1");
  if (p == 0.0 || p == 1.0 || p == t) return {};
  const double z0 = z_score(p, t, m);
  const double z1 = z_score(p, t, m + x);
  const double ratio = (p - t) / std::sqrt(p * (1.0 - p));
  const double root_m = std::sqrt(static_cast<double>(m));
  const double root_mx = std::sqrt(static_cast<double>(m + x));
  GainEstimate g;
  g.exact = normal_cdf(z1) - normal_cdf(z0);
  g.midpoint = (root_mx - root_m) * ratio * normal_pdf(ratio * (root_mx + root_m) / 2.0);
  return g;
}

// The ratio (p - t)/b at which the midpoint form peaks.
inline double optimal_ratio(int m, int x) {
  return 2.0 / (std::sqrt(static_cast<double>(m + x)) + std::sqrt(static_cast<double>(m)));
}

struct GainArgmax {
  std::size_t by_exact = 0;       // argmax of the exact CDF difference
  std::size_t by_condition = 0;   // item whose (p - t)/b is closest to optimal_ratio
};

// Items must be sorted by p, best first. Ties go to the lower index.
inline GainArgmax argmax_gain(std::span<const AnalyticItem> items, double t, int m, int x) {
  if (items.empty()) throw std::invalid_argument("argmax_gain: no items");
  for (std::size_t i = 1; i < items.size(); ++i)
    if (items[i].p > items[i - 1].p) throw std::invalid_argument("argmax_gain: items must be sorted by p descending");
  GainArgmax out;
  double best = -INFINITY, closest = INFINITY;
  const double target = optimal_ratio(m, x);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const double gain = delta_p(items[i].p, t, m, x).exact;
    if (gain > best) {
      best = gain;
      out.by_exact = i;
    }
    const double b = items[i].b();
    if (b > 0.0) {
      const double gap = std::abs((items[i].p - t) / b - target);
      if (gap < closest) {
        closest = gap;
        out.by_condition = i;
      }
    }
  }
  return out;
}

// Midpoint of the k-th and (k+1)-th items' p (k is a count, 1-based).
inline double default_threshold(std::span<const AnalyticItem> items, std::size_t k) {
  if (k < 1 || k >= items.size()) throw std::invalid_argument("default_threshold: need 1 <= k < items");
  return 0.5 * (items[k - 1].p + items[k].p);
}

// Fraction of `trials` binomial draws with V / m >= t.
inline double mc_accept_probability(double p, double t, int m, long trials, Rng& rng) {
  if (trials < 1) throw std::invalid_argument("mc_accept_probability: trials must be >= 1");
  if (!(p >= 0.0 && p <= 1.0) || m < 1) throw std::invalid_argument("mc_accept_probability: bad p or m");
  std::binomial_distribution<int> votes(m, p);
  long hits = 0;
  const double dm = static_cast<double>(m);
  for (long i = 0; i < trials; ++i) hits += (static_cast<double>(votes(rng)) / dm >= t);
  return static_cast<double>(hits) / static_cast<double>(trials);
}

}  // namespace peersel
