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

// Command-line front end for parameter sweeps and gain curves.
//
//   peersel --config sweep.json [--seed S] [--trials N] [--out results.csv]
//           [--threads T] [--validate-only]
//   peersel --gain a.json b.json [--seed S] [--trials N] [--out gain.csv]

#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "peersel/harness.hpp"

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<long> trials;
};

peersel::ExperimentConfig load_config(const std::string& path, const Overrides& o) {
  peersel::ExperimentConfig cfg = peersel::ExperimentConfig::load(path);
  if (o.seed) cfg.seed = *o.seed;
  if (o.trials) cfg.trials = *o.trials;
  return cfg;
}

peersel::ResultRow run_single_cell(const peersel::ExperimentConfig& cfg, const std::string& name,
                                   const peersel::RunOptions& opt) {
  const auto cells = cfg.cells();
  if (cells.size() != 1 || cells.front().mechanisms.size() != 1) {
    throw std::invalid_argument(name + ": a gain config must describe exactly one cell and one mechanism");
  }
  auto rows = peersel::run_cell(cells.front(), cfg.trials, cfg.seed, opt);
  if (rows.front().infeasible) throw peersel::InfeasibleError(name + ": " + rows.front().reason);
  return rows.front();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Peer-selection mechanism simulator"};
  std::string config_path, out_path;
  std::vector<std::string> gain_paths;
  Overrides overrides;
  std::uint64_t seed = 0;
  long trials = 0;
  int threads = 0;
  bool validate_only = false;

  auto* config_opt = app.add_option("--config", config_path, "Sweep configuration (JSON)")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Master seed (overrides the config)");
  auto* trials_opt = app.add_option("--trials", trials, "Trials per cell (overrides the config)")->check(CLI::PositiveNumber);
  app.add_option("--out", out_path, "Output CSV (default: config 'output', else stdout)");
  app.add_option("--threads", threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  auto* gain_opt = app.add_option("--gain", gain_paths, "Two single-cell configs A B; writes delta = B - A")
                       ->expected(2)
                       ->check(CLI::ExistingFile);
  app.add_flag("--validate-only", validate_only, "Check the configuration and exit");
  config_opt->excludes(gain_opt);
  gain_opt->excludes(config_opt);

  CLI11_PARSE(app, argc, argv);
  if (*seed_opt) overrides.seed = seed;
  if (*trials_opt) overrides.trials = trials;

  peersel::RunOptions opt;
  opt.threads = threads;

  try {
    if (!gain_paths.empty()) {
      const auto a = load_config(gain_paths[0], overrides);
      const auto b = load_config(gain_paths[1], overrides);
      if (validate_only) {
        (void)a.cells();
        (void)b.cells();
        std::cout << "ok\n";
        return 0;
      }
      std::ofstream file;
      if (!out_path.empty()) {
        file.open(out_path, std::ios::trunc);
        if (!file) throw std::runtime_error("cannot write " + out_path);
      }
      opt.collect_frequencies = true;
      const auto row_a = run_single_cell(a, gain_paths[0], opt);
      const auto row_b = run_single_cell(b, gain_paths[1], opt);
      const auto delta = peersel::gain_between(row_a, row_b);
      peersel::write_gain_csv(out_path.empty() ? std::cout : file, delta);
      return 0;
    }

    if (config_path.empty()) {
      std::cerr << "error: one of --config or --gain is required\n" << app.help();
      return 1;
    }
    auto cfg = load_config(config_path, overrides);
    if (!out_path.empty()) cfg.output = out_path;
    const auto cells = cfg.cells();
    std::size_t rows = 0;
    for (const auto& c : cells) rows += c.mechanisms.size();
    if (validate_only) {
      std::cout << "ok: " << cells.size() << " cells, " << rows << " rows\n";
      return 0;
    }
    if (cells.empty()) std::cerr << "warning: the grid is empty; writing a header only\n";
    const auto result = peersel::run_sweep(cfg, opt, &std::cerr);
    if (cfg.output.empty()) peersel::write_csv(std::cout, result);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
