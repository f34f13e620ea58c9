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

// Experiment harness: parameter grids, paired trials, deterministic
// parallel aggregation and CSV output.
//
// Randomness is keyed, never shared: each trial's rankings come from
// (seed, n, phi, trial), its clustering from (seed, n, c, trial) and its
// tie-break order from (seed, n, trial). Every mechanism in a cell sees the
// same inputs and a fresh copy of the same mechanism stream, and cells that
// differ only in review parameters reuse the same rankings and clusters.

#pragma once

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "peersel/assign.hpp"
#include "peersel/mechanisms.hpp"
#include "peersel/metrics.hpp"
#include "peersel/noise.hpp"
#include "peersel/random.hpp"
#include "peersel/twostage.hpp"

namespace peersel {

namespace stream_tag {
inline constexpr std::uint64_t kRankings = 0x52414e4bULL;
inline constexpr std::uint64_t kClusters = 0x434c5553ULL;
inline constexpr std::uint64_t kTies = 0x54494553ULL;
inline constexpr std::uint64_t kMechanism = 0x4d454348ULL;
}  // namespace stream_tag

struct GridCell {
  TwoStageParams params;
  std::vector<Mechanism> mechanisms;
};

inline std::uint64_t cell_key(const TwoStageParams& p) {
  return derive_seed({static_cast<std::uint64_t>(p.n), static_cast<std::uint64_t>(p.k), static_cast<std::uint64_t>(p.m),
                      static_cast<std::uint64_t>(p.f), static_cast<std::uint64_t>(p.h), static_cast<std::uint64_t>(p.l),
                      static_cast<std::uint64_t>(p.c), std::bit_cast<std::uint64_t>(p.phi),
                      static_cast<std::uint64_t>(p.pool_stage1)});
}

struct TrialInputs {
  RankingPositions positions;
  Clustering clustering;
  std::vector<int> tie_priority;
  std::uint64_t rankings_hash = 0;
  std::uint64_t clustering_hash = 0;
};

inline std::uint64_t hash_ints(std::span<const int> v, std::uint64_t h = 0) {
  for (int x : v) h = splitmix64(h ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(x)));
  return h;
}

inline RankingPositions sample_positions(std::uint64_t seed, long trial, int n, double phi) {
  Rng rng = make_rng({seed, stream_tag::kRankings, static_cast<std::uint64_t>(n), std::bit_cast<std::uint64_t>(phi),
                      static_cast<std::uint64_t>(trial)});
  const Ranking truth = Ranking::identity(n);
  RankingPositions out;
  out.reserve(static_cast<std::size_t>(n));
  for (int a = 0; a < n; ++a) out.push_back(sample_mallows(truth, Dispersion(phi), rng).positions());
  return out;
}

inline Clustering sample_clustering(std::uint64_t seed, long trial, int n, int c) {
  Rng rng = make_rng({seed, stream_tag::kClusters, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(c),
                      static_cast<std::uint64_t>(trial)});
  return make_clusters(n, c, rng);
}

inline std::vector<int> sample_tie_priority(std::uint64_t seed, long trial, int n) {
  Rng rng = make_rng({seed, stream_tag::kTies, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(trial)});
  return random_permutation(n, rng);
}

inline TrialInputs sample_trial_inputs(std::uint64_t seed, long trial, int n, double phi, int c) {
  TrialInputs in;
  in.positions = sample_positions(seed, trial, n, phi);
  in.clustering = sample_clustering(seed, trial, n, c);
  in.tie_priority = sample_tie_priority(seed, trial, n);
  for (const auto& p : in.positions) in.rankings_hash = hash_ints(p, in.rankings_hash);
  in.clustering_hash = hash_ints(in.clustering.cluster_of());
  return in;
}

struct TrialOutcome {
  std::vector<int> selected;
  MetricReport metrics;
  std::uint64_t rankings_hash = 0;
  std::uint64_t clustering_hash = 0;
};

// One mechanism on one trial's inputs. Throws InfeasibleError when the
// cell's budgets cannot be met.
inline TrialOutcome run_mechanism(const TwoStageParams& params, Mechanism mechanism, const RankingPositions& positions,
                                  const Clustering& clustering, std::span<const int> tie, std::uint64_t seed,
                                  long trial) {
  Rng rng = make_rng({seed, stream_tag::kMechanism, cell_key(params), static_cast<std::uint64_t>(trial)});
  TrialOutcome out;
  if (params.two_stage()) {
    out.selected = run_two_stage(mechanism, params, positions, &clustering, rng, tie).first.selected;
  } else {
    out.selected = run_single_stage(mechanism, params, positions, &clustering, rng, tie).selected;
  }
  out.metrics = evaluate(out.selected, params.k, params.n);
  return out;
}

inline TrialOutcome run_mechanism(const TwoStageParams& params, Mechanism mechanism, const TrialInputs& in,
                                  std::uint64_t seed, long trial) {
  TrialOutcome out = run_mechanism(params, mechanism, in.positions, in.clustering, in.tie_priority, seed, trial);
  out.rankings_hash = in.rankings_hash;
  out.clustering_hash = in.clustering_hash;
  return out;
}

struct Stat {
  double mean = 0.0;
  double stderr_ = 0.0;
};

struct ResultRow {
  TwoStageParams params;
  Mechanism mechanism = Mechanism::kVanilla;
  long trials = 0;
  bool infeasible = false;
  std::string reason;
  Stat precision, positive_borda, negative_borda;
  std::vector<long> selection_counts;  // filled when frequencies are collected

  std::vector<double> selection_frequency() const {
    std::vector<double> f(selection_counts.size(), 0.0);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = trials > 0 ? static_cast<double>(selection_counts[i]) / trials : 0.0;
    return f;
  }
};

struct RunOptions {
  int threads = 0;  // 0: hardware concurrency
  bool collect_frequencies = false;
};

namespace detail {

inline constexpr long kTrialBlock = 250;

struct Moments {
  double sum[3] = {0, 0, 0};
  double sumsq[3] = {0, 0, 0};
  void add(const MetricReport& r) {
    const double v[3] = {r.precision_at_k, r.positive_borda, r.negative_borda};
    for (int i = 0; i < 3; ++i) {
      sum[i] += v[i];
      sumsq[i] += v[i] * v[i];
    }
  }
  void merge(const Moments& o) {
    for (int i = 0; i < 3; ++i) {
      sum[i] += o.sum[i];
      sumsq[i] += o.sumsq[i];
    }
  }
};

inline Stat finish(double sum, double sumsq, long count) {
  Stat s;
  if (count <= 0) return s;
  s.mean = sum / count;
  if (count > 1) {
    const double var = std::max(0.0, (sumsq - count * s.mean * s.mean) / (count - 1));
    s.stderr_ = std::sqrt(var / count);
  }
  return s;
}

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs cells that share n and phi, so each trial's rankings are drawn once.
inline std::vector<ResultRow> run_group(const std::vector<GridCell>& cells, long trials, std::uint64_t seed,
                                        const RunOptions& opt) {
  const int n = cells.front().params.n;
  const double phi = cells.front().params.phi;
  std::vector<std::size_t> offset;  // first slot of each cell
  std::size_t slots = 0;
  for (const auto& cell : cells) {
    offset.push_back(slots);
    slots += cell.mechanisms.size();
  }
  const long blocks = (trials + kTrialBlock - 1) / kTrialBlock;
  std::vector<std::vector<Moments>> block_moments(static_cast<std::size_t>(blocks), std::vector<Moments>(slots));
  std::vector<std::vector<long>> counts(slots, std::vector<long>(opt.collect_frequencies ? n : 0, 0));
  std::vector<char> infeasible(slots, 0);
  std::vector<std::string> reasons(slots);
  std::mutex mu;
  std::atomic<long> next_block{0};

  auto worker = [&] {
    std::vector<std::vector<long>> local_counts(slots, std::vector<long>(opt.collect_frequencies ? n : 0, 0));
    std::vector<std::pair<std::size_t, std::string>> local_failures;
    for (long b = next_block++; b < blocks; b = next_block++) {
      for (long t = b * kTrialBlock; t < std::min(trials, (b + 1) * kTrialBlock); ++t) {
        const RankingPositions positions = sample_positions(seed, t, n, phi);
        const std::vector<int> ties = sample_tie_priority(seed, t, n);
        std::map<int, Clustering> clusterings;
        for (std::size_t ci = 0; ci < cells.size(); ++ci) {
          const TwoStageParams& p = cells[ci].params;
          auto it = clusterings.find(p.c);
          if (it == clusterings.end()) it = clusterings.emplace(p.c, sample_clustering(seed, t, n, p.c)).first;
          for (std::size_t mi = 0; mi < cells[ci].mechanisms.size(); ++mi) {
            const std::size_t slot = offset[ci] + mi;
            try {
              const TrialOutcome o = run_mechanism(p, cells[ci].mechanisms[mi], positions, it->second, ties, seed, t);
              block_moments[b][slot].add(o.metrics);
              if (opt.collect_frequencies)
                for (int j : o.selected) ++local_counts[slot][j];
            } catch (const InfeasibleError& e) {
              local_failures.emplace_back(slot, e.what());
            }
          }
        }
      }
    }
    std::lock_guard<std::mutex> lock(mu);
    for (std::size_t s = 0; s < slots; ++s)
      for (std::size_t j = 0; j < local_counts[s].size(); ++j) counts[s][j] += local_counts[s][j];
    for (auto& [slot, why] : local_failures) {
      if (!infeasible[slot]) reasons[slot] = why;
      infeasible[slot] = 1;
    }
  };

  const int nthreads = std::max(1, std::min<int>(resolve_threads(opt.threads), static_cast<int>(blocks)));
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::vector<ResultRow> rows;
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    for (std::size_t mi = 0; mi < cells[ci].mechanisms.size(); ++mi) {
      const std::size_t slot = offset[ci] + mi;
      Moments total;
      for (long b = 0; b < blocks; ++b) total.merge(block_moments[b][slot]);
      ResultRow row;
      row.params = cells[ci].params;
      row.mechanism = cells[ci].mechanisms[mi];
      row.trials = trials;
      row.infeasible = infeasible[slot] != 0;
      row.reason = reasons[slot];
      if (!row.infeasible) {
        row.precision = finish(total.sum[0], total.sumsq[0], trials);
        row.positive_borda = finish(total.sum[1], total.sumsq[1], trials);
        row.negative_borda = finish(total.sum[2], total.sumsq[2], trials);
      }
      row.selection_counts = std::move(counts[slot]);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace detail

// All mechanisms of one cell over `trials` paired trials.
inline std::vector<ResultRow> run_cell(const GridCell& cell, long trials, std::uint64_t seed,
                                       const RunOptions& opt = {}) {
  cell.params.validate();
  if (trials < 1) throw std::invalid_argument("run_cell: trials must be >= 1");
  return detail::run_group({cell}, trials, seed, opt);
}

struct ExperimentConfig {
  std::vector<int> n{100};
  std::vector<int> k, m;
  std::vector<double> f{0.0}, h{0.0};
  std::vector<int> l{0}, c{1};
  std::vector<double> phi;
  std::vector<Mechanism> mechanisms{Mechanism::kVanilla};
  long trials = 10000;
  std::uint64_t seed = 0;
  bool pool_stage1 = true;
  bool two_stage = true;
  std::string output;

  static ExperimentConfig from_json(const nlohmann::json& j) {
    static const std::set<std::string> known = {"n",      "k",          "m",     "f",         "h",
                                                "l",      "c",          "phi",   "mechanisms", "trials",
                                                "seed",   "pool_stage1", "two_stage", "output"};
    if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
      if (!known.count(it.key())) throw std::invalid_argument("config: unknown key '" + it.key() + "'");
    ExperimentConfig cfg;
    auto list = [&](const char* key, auto& out) {
      if (!j.contains(key)) return;
      using T = typename std::decay_t<decltype(out)>::value_type;
      out.clear();
      const auto& v = j.at(key);
      if (v.is_array()) {
        for (const auto& e : v) out.push_back(e.get<T>());
      } else {
        out.push_back(v.get<T>());
      }
    };
    list("n", cfg.n);
    list("k", cfg.k);
    list("m", cfg.m);
    list("f", cfg.f);
    list("h", cfg.h);
    list("l", cfg.l);
    list("c", cfg.c);
    list("phi", cfg.phi);
    if (j.contains("mechanisms")) {
      cfg.mechanisms.clear();
      for (const auto& e : j.at("mechanisms")) cfg.mechanisms.push_back(parse_mechanism(e.get<std::string>()));
    }
    if (j.contains("trials")) cfg.trials = j.at("trials").get<long>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("pool_stage1")) cfg.pool_stage1 = j.at("pool_stage1").get<bool>();
    if (j.contains("two_stage")) cfg.two_stage = j.at("two_stage").get<bool>();
    if (j.contains("output")) cfg.output = j.at("output").get<std::string>();
    return cfg;
  }

  static ExperimentConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot read " + path.string());
    return from_json(nlohmann::json::parse(in));
  }

  // Integer values are counts; values strictly between 0 and 1 are fractions
  // of `of` (f: of m, at least 1; h: of k).
  static int resolve_count(double v, int of, int minimum_for_fraction) {
    if (v == std::floor(v)) {
      if (v < 0) throw std::invalid_argument("config: negative count");
      return static_cast<int>(v);
    }
    if (v > 0.0 && v < 1.0) return std::max(minimum_for_fraction, static_cast<int>(std::lround(v * of)));
    throw std::invalid_argument("config: counts must be integers or fractions in (0, 1)");
  }

  // Cartesian product in header order (n, k, m, f, h, l, c, phi), minus
  // repeats. Throws on any cell that violates the parameter invariants.
  std::vector<GridCell> cells() const {
    if (trials < 1) throw std::invalid_argument("config: trials must be >= 1");
    if (mechanisms.empty()) return {};
    const std::vector<double> fs = two_stage ? f : std::vector<double>{0.0};
    const std::vector<double> hs = two_stage ? h : std::vector<double>{0.0};
    const std::vector<int> ls = two_stage ? l : std::vector<int>{0};
    std::vector<GridCell> out;
    std::set<std::uint64_t> seen;
    for (int nv : n)
      for (int kv : k)
        for (int mv : m)
          for (double fv : fs)
            for (double hv : hs)
              for (int lv : ls)
                for (int cv : c)
                  for (double pv : phi) {
                    GridCell cell;
                    cell.params.n = nv;
                    cell.params.k = kv;
                    cell.params.m = mv;
                    cell.params.f = resolve_count(fv, mv, 1);
                    cell.params.h = resolve_count(hv, kv, 0);
                    cell.params.l = lv;
                    // A single-stage cell has no cuts; h and l collapse so the
                    // f = 0 baseline appears once per remaining coordinate.
                    if (cell.params.f == 0) cell.params.h = cell.params.l = 0;
                    cell.params.c = cv;
                    cell.params.phi = pv;
                    cell.params.pool_stage1 = pool_stage1;
                    cell.params.validate();
                    cell.mechanisms = mechanisms;
                    if (seen.insert(cell_key(cell.params)).second) out.push_back(std::move(cell));
                  }
    return out;
  }
};

inline constexpr const char* kCsvHeader =
    "n,k,m,f,h,l,c,phi,mechanism,trials,precision_mean,precision_stderr,posborda_mean,posborda_stderr,"
    "negborda_mean,negborda_stderr";

inline std::string format6(double v) {
  char buf[64];
  if (std::abs(v) < 5e-7) v = 0.0;  // no "-0.000000"
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::string csv_row(const ResultRow& r) {
  std::ostringstream os;
  const TwoStageParams& p = r.params;
  os << p.n << ',' << p.k << ',' << p.m << ',' << p.f << ',' << p.h << ',' << p.l << ',' << p.c << ','
     << format6(p.phi) << ',' << mechanism_name(r.mechanism) << ',' << r.trials;
  if (r.infeasible) {
    for (int i = 0; i < 6; ++i) os << ",infeasible";
  } else {
    for (const Stat* s : {&r.precision, &r.positive_borda, &r.negative_borda})
      os << ',' << format6(s->mean) << ',' << format6(s->stderr_);
  }
  return os.str();
}

inline void write_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
  os << kCsvHeader << '\n';
  for (const auto& r : rows) os << csv_row(r) << '\n';
}

// Runs every cell. Rows are appended to `<output>.partial` as each group of
// cells finishes; the final file is written in grid order, so completion
// order never shows in it.
inline std::vector<ResultRow> run_sweep(const ExperimentConfig& config, const RunOptions& opt = {},
                                        std::ostream* log = nullptr) {
  const std::vector<GridCell> cells = config.cells();
  std::ofstream final_out;
  std::ofstream partial;
  const bool to_file = !config.output.empty();
  if (to_file) {
    final_out.open(config.output, std::ios::trunc);
    if (!final_out) throw std::runtime_error("cannot write " + config.output);
    partial.open(config.output + ".partial", std::ios::trunc);
    if (partial) partial << kCsvHeader << '\n';
  }

  // Group cells sharing (n, phi), remembering each cell's grid position.
  std::map<std::pair<int, std::uint64_t>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < cells.size(); ++i)
    groups[{cells[i].params.n, std::bit_cast<std::uint64_t>(cells[i].params.phi)}].push_back(i);

  std::vector<std::vector<ResultRow>> by_cell(cells.size());
  for (const auto& [key, members] : groups) {
    std::vector<GridCell> group_cells;
    for (std::size_t i : members) group_cells.push_back(cells[i]);
    std::vector<ResultRow> rows = detail::run_group(group_cells, config.trials, config.seed, opt);
    std::size_t pos = 0;
    for (std::size_t i : members) {
      for (std::size_t mi = 0; mi < cells[i].mechanisms.size(); ++mi) {
        if (partial) partial << csv_row(rows[pos]) << '\n';
        if (log && rows[pos].infeasible) *log << "infeasible: " << csv_row(rows[pos]) << " (" << rows[pos].reason << ")\n";
        by_cell[i].push_back(std::move(rows[pos++]));
      }
    }
    if (partial) partial.flush();
  }

  std::vector<ResultRow> all;
  for (auto& rows : by_cell)
    for (auto& r : rows) all.push_back(std::move(r));
  if (to_file) {
    write_csv(final_out, all);
    final_out.close();
    partial.close();
    std::error_code ec;
    std::filesystem::remove(config.output + ".partial", ec);
  }
  return all;
}

// Per-agent selection-probability change from configuration a to b.
inline std::vector<double> gain_between(const ResultRow& a, const ResultRow& b) {
  if (a.selection_counts.size() != b.selection_counts.size() || a.selection_counts.empty()) {
    throw std::invalid_argument("gain: agent domains differ or frequencies were not collected");
  }
  return gain_curve(a.selection_frequency(), b.selection_frequency());
}

inline void write_gain_csv(std::ostream& os, std::span<const double> delta) {
  os << "agent_index,delta\n";
  for (std::size_t i = 0; i < delta.size(); ++i) os << i << ',' << format6(delta[i]) << '\n';
}

}  // namespace peersel
