/*
 * Copyright 2026 The hetfed Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Command layer: builds the data and partition for a config, executes runs
// into run directories, and implements the run / bench / alpha-sweep
// commands. main() is a thin wrapper around run_cli().

#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hetfed/config.hpp"
#include "hetfed/data.hpp"
#include "hetfed/error.hpp"
#include "hetfed/federation.hpp"
#include "hetfed/metrics.hpp"
#include "hetfed/persistence.hpp"

namespace hetfed {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

/// Flag values that replace config-file values when present.
struct Overrides {
  std::optional<std::string> config_path;
  std::optional<std::string> algorithm;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::optional<double> mu;
  std::optional<int> rounds;
  std::optional<int> local_epochs;
  std::optional<std::string> scenario;  // strong, moderate or both
  std::optional<std::string> order;
  std::optional<std::string> avg;
  bool direct_relay = false;
  std::optional<std::string> out;
  std::optional<std::vector<double>> alphas;
  std::optional<int> repetitions;
};

/// Loads the config file (or defaults), applies the overrides and validates.
/// `allow_both` admits --scenario both (bench); the returned list holds the
/// scenarios to run.
inline RunConfig resolve_config(const Overrides& ov, bool allow_both,
                                std::vector<Scenario>* scenarios = nullptr) {
  RunConfig cfg = ov.config_path ? load_config(*ov.config_path) : default_config();
  std::vector<std::string> errs;
  auto& f = cfg.federation;
  if (ov.algorithm) {
    if (auto a = algorithm_from_string(*ov.algorithm)) {
      f.algorithm = *a;
    } else {
      errs.push_back("algorithm: unknown algorithm '" + *ov.algorithm +
                     "' (expected unifed, fedavg, fedprox, fedseq or nofed)");
    }
  }
  if (ov.seed) f.seed = *ov.seed;
  if (ov.alpha) f.alpha = *ov.alpha;
  if (ov.mu) f.mu = *ov.mu;
  if (ov.rounds) f.num_rounds = *ov.rounds;
  if (ov.local_epochs) f.local_epochs = *ov.local_epochs;
  if (ov.direct_relay) f.direct_relay = true;
  if (ov.order) {
    if (*ov.order == "asc" || *ov.order == "desc") {
      f.order = *ov.order == "asc" ? OrderDirection::Ascending : OrderDirection::Descending;
    } else {
      errs.push_back("order: expected 'asc' or 'desc', got '" + *ov.order + "'");
    }
  }
  if (ov.avg) {
    if (*ov.avg == "macro" || *ov.avg == "micro") {
      f.avg = *ov.avg == "macro" ? Averaging::Macro : Averaging::Micro;
    } else {
      errs.push_back("avg: expected 'macro' or 'micro', got '" + *ov.avg + "'");
    }
  }
  std::vector<Scenario> which{cfg.partition.scenario};
  if (ov.scenario) {
    if (*ov.scenario == "strong") {
      which = {Scenario::StronglyNonIID};
    } else if (*ov.scenario == "moderate") {
      which = {Scenario::ModeratelyNonIID};
    } else if (*ov.scenario == "both" && allow_both) {
      which = {Scenario::StronglyNonIID, Scenario::ModeratelyNonIID};
    } else {
      errs.push_back("scenario: expected 'strong', 'moderate'" +
                     std::string(allow_both ? " or 'both'" : "") + ", got '" + *ov.scenario +
                     "'");
    }
    cfg.partition.scenario = which.front();
  }
  if (ov.out) cfg.out_dir = *ov.out;
  if (ov.alphas) cfg.alphas = *ov.alphas;
  if (ov.repetitions) cfg.repetitions = *ov.repetitions;

  for (auto& e : validation_errors(cfg)) errs.push_back(std::move(e));
  if (!errs.empty()) throw ConfigError(std::move(errs));
  if (scenarios) *scenarios = which;
  return cfg;
}

/// Output directory: the configured one, else $UNIFED_OUT/<leaf>, else runs/<leaf>.
inline std::filesystem::path output_dir(const RunConfig& cfg, const std::string& leaf) {
  if (!cfg.out_dir.empty()) return cfg.out_dir;
  const char* root = std::getenv("UNIFED_OUT");
  return std::filesystem::path(root && *root ? root : "runs") / leaf;
}

/// Generated data and its partition for one seed.
struct Prepared {
  Mixture mixture;
  Federation federation;
  std::vector<std::string> warnings;
  std::string input_hash;
  std::string partition_hash;
};

inline Prepared prepare(const RunConfig& cfg, std::uint64_t seed) {
  Prepared p;
  p.mixture = build_mixture(cfg.tasks, seed);
  auto parts = partition(p.mixture.data, cfg.partition, seed);
  p.warnings = parts.warnings;
  p.federation = make_federation(model_spec(cfg), std::move(parts), seed);
  p.input_hash = input_hash(cfg, p.mixture.data);
  p.partition_hash = partition_hash(p.federation);
  return p;
}

/// Runs cfg.federation on prepared data and writes the run directory. Round
/// lines and checkpoints are written as rounds complete, so an abort leaves
/// a readable log up to the last finished round.
inline RunResult execute_run(const RunConfig& cfg, const Prepared& prep,
                             const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const RunPaths paths{dir};
  std::error_code ec;
  fs::create_directories(paths.checkpoints(), ec);
  if (ec) throw IoError(detail::concat("cannot create '", paths.checkpoints().string(), "': ",
                                       ec.message()));

  RunManifest manifest;
  manifest.config = cfg;
  manifest.seed = cfg.federation.seed;
  manifest.started_at = utc_timestamp();
  manifest.input_hash = prep.input_hash;
  manifest.partition_hash = prep.partition_hash;
  write_manifest(manifest, paths.manifest());
  write_round_header(paths.rounds());

  auto observer = [&](const RoundRecord& rec, const WeightVector& global) {
    append_round(paths.rounds(), rec);
    if (cfg.checkpoint_every > 0 && rec.round % cfg.checkpoint_every == 0) {
      save_checkpoint(global, paths.checkpoint(rec.round));
    }
  };
  RunResult result = run(cfg.federation, prep.federation, observer);
  save_checkpoint(result.final_weights, paths.final_weights());

  std::ofstream timing(dir / "timing.csv", std::ios::trunc);
  timing << "participant,compute_ms\n";
  for (const auto& [who, ms] : result.ledger.compute_ms) timing << who << ',' << ms << '\n';
  if (!timing) throw IoError(detail::concat("write failed for '", (dir / "timing.csv").string(), "'"));

  manifest.finished_at = utc_timestamp();
  write_manifest(manifest, paths.manifest());
  return result;
}

inline std::string summary_line(const RunConfig& cfg, const RunResult& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << to_string(cfg.federation.algorithm)
     << " seed=" << cfg.federation.seed << " rounds=" << r.rounds_run
     << " acc=" << r.final_metrics.accuracy << " f1=" << r.final_metrics.f1
     << " sens=" << r.final_metrics.sensitivity << " spec=" << r.final_metrics.specificity
     << " epoch_units=" << r.ledger.epoch_units
     << " server_epoch_units=" << r.ledger.server_epoch_units
     << " transfers=" << r.ledger.transfers;
  return os.str();
}

inline int cmd_run(const RunConfig& cfg, std::ostream& out) {
  const auto dir = output_dir(cfg, detail::concat(to_string(cfg.federation.algorithm), "-seed",
                                                  cfg.federation.seed));
  const Prepared prep = prepare(cfg, cfg.federation.seed);
  const RunResult result = execute_run(cfg, prep, dir);
  out << summary_line(cfg, result) << '\n';
  return kExitOk;
}

/// One row of a benchmark: a single (scenario, method, seed) run.
struct BenchRun {
  std::string scenario;
  std::string method;
  std::uint64_t seed = 0;
  MetricBundle metrics;
  std::int64_t epoch_units = 0;
  std::int64_t server_epoch_units = 0;
  std::int64_t transfers = 0;
  double compute_ms = 0.0;
  int rounds_run = 0;
  std::string partition_hash;
};

struct BenchRow {
  std::string scenario;
  std::string method;
  std::vector<std::uint64_t> seeds;
  MetricBundle metrics;
  double epoch_units = 0.0;
  double server_epoch_units = 0.0;
  double transfers = 0.0;
  double compute_ms = 0.0;
};

inline const std::vector<Algorithm>& bench_methods() {
  static const std::vector<Algorithm> methods = {Algorithm::NoFed, Algorithm::FedAvg,
                                                 Algorithm::FedProx, Algorithm::FedSeq,
                                                 Algorithm::UniFed};
  return methods;
}

/// Means over repetitions, one row per (scenario, method) in run order.
inline std::vector<BenchRow> aggregate(const std::vector<BenchRun>& runs) {
  std::vector<BenchRow> rows;
  for (const auto& r : runs) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const BenchRow& b) {
      return b.scenario == r.scenario && b.method == r.method;
    });
    if (it == rows.end()) {
      rows.push_back({r.scenario, r.method, {}, {}, 0, 0, 0, 0});
      it = rows.end() - 1;
    }
    it->seeds.push_back(r.seed);
    it->metrics.accuracy += r.metrics.accuracy;
    it->metrics.f1 += r.metrics.f1;
    it->metrics.sensitivity += r.metrics.sensitivity;
    it->metrics.specificity += r.metrics.specificity;
    it->epoch_units += static_cast<double>(r.epoch_units);
    it->server_epoch_units += static_cast<double>(r.server_epoch_units);
    it->transfers += static_cast<double>(r.transfers);
    it->compute_ms += r.compute_ms;
  }
  for (auto& row : rows) {
    const auto n = static_cast<double>(row.seeds.size());
    row.metrics.accuracy /= n;
    row.metrics.f1 /= n;
    row.metrics.sensitivity /= n;
    row.metrics.specificity /= n;
    row.epoch_units /= n;
    row.server_epoch_units /= n;
    row.transfers /= n;
    row.compute_ms /= n;
  }
  return rows;
}

namespace detail {

inline std::string join_seeds(const std::vector<std::uint64_t>& seeds) {
  std::string s;
  for (std::size_t i = 0; i < seeds.size(); ++i) s += (i ? ";" : "") + std::to_string(seeds[i]);
  return s;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(concat("cannot write '", path.string(), "'"));
  return out;
}

}  // namespace detail

inline std::string bench_table(const std::vector<BenchRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(10) << "scenario" << std::setw(9) << "method" << std::right
     << std::setw(10) << "seeds" << std::setw(9) << "acc" << std::setw(9) << "f1"
     << std::setw(9) << "sens" << std::setw(9) << "spec" << std::setw(13) << "epoch_units"
     << std::setw(11) << "server_ep" << std::setw(11) << "transfers" << std::setw(13)
     << "compute_ms" << '\n';
  os << std::fixed;
  for (const auto& r : rows) {
    os << std::left << std::setw(10) << r.scenario << std::setw(9) << r.method << std::right
       << std::setw(10) << detail::join_seeds(r.seeds) << std::setprecision(4) << std::setw(9)
       << r.metrics.accuracy << std::setw(9) << r.metrics.f1 << std::setw(9)
       << r.metrics.sensitivity << std::setw(9) << r.metrics.specificity
       << std::setprecision(1) << std::setw(13) << r.epoch_units << std::setw(11)
       << r.server_epoch_units << std::setw(11) << r.transfers << std::setw(13)
       << r.compute_ms << '\n';
  }
  return os.str();
}

/// Every method on the same data, partition and seed, for seeds s..s+reps-1
/// and each requested scenario. Writes bench_runs.csv, bench.csv, bench.txt
/// and one run directory per run.
inline std::vector<BenchRow> run_bench(const RunConfig& base, const std::vector<Scenario>& scenarios,
                                       const std::filesystem::path& dir,
                                       std::vector<BenchRun>* runs_out = nullptr) {
  std::vector<BenchRun> runs;
  for (Scenario sc : scenarios) {
    for (int rep = 0; rep < base.repetitions; ++rep) {
      RunConfig cfg = base;
      cfg.partition.scenario = sc;
      cfg.federation.seed = base.federation.seed + static_cast<std::uint64_t>(rep);
      const Prepared prep = prepare(cfg, cfg.federation.seed);
      for (Algorithm a : bench_methods()) {
        RunConfig run_cfg = cfg;
        run_cfg.federation.algorithm = a;
        const auto run_dir = dir / to_string(sc) / detail::concat("seed_", cfg.federation.seed) /
                             to_string(a);
        const RunResult r = execute_run(run_cfg, prep, run_dir);
        runs.push_back({to_string(sc), to_string(a), cfg.federation.seed, r.final_metrics,
                        r.ledger.epoch_units, r.ledger.server_epoch_units, r.ledger.transfers,
                        r.ledger.total_compute_ms(), r.rounds_run, prep.partition_hash});
      }
    }
  }

  auto per_run = detail::open_out(dir / "bench_runs.csv");
  per_run << "scenario,method,seed,accuracy,f1,sensitivity,specificity,epoch_units,"
             "server_epoch_units,transfers,compute_ms,rounds_run,partition_hash\n";
  for (const auto& r : runs) {
    per_run << r.scenario << ',' << r.method << ',' << r.seed << ','
            << detail::fmt_double(r.metrics.accuracy) << ',' << detail::fmt_double(r.metrics.f1)
            << ',' << detail::fmt_double(r.metrics.sensitivity) << ','
            << detail::fmt_double(r.metrics.specificity) << ',' << r.epoch_units << ','
            << r.server_epoch_units << ',' << r.transfers << ',' << r.compute_ms << ','
            << r.rounds_run << ',' << r.partition_hash << '\n';
  }

  const auto rows = aggregate(runs);
  auto csv = detail::open_out(dir / "bench.csv");
  csv << "scenario,method,seeds,accuracy,f1,sensitivity,specificity,epoch_units,"
         "server_epoch_units,transfers,compute_ms\n";
  for (const auto& r : rows) {
    csv << r.scenario << ',' << r.method << ',' << detail::join_seeds(r.seeds) << ','
        << detail::fmt_double(r.metrics.accuracy) << ',' << detail::fmt_double(r.metrics.f1)
        << ',' << detail::fmt_double(r.metrics.sensitivity) << ','
        << detail::fmt_double(r.metrics.specificity) << ','
        << detail::fmt_double(r.epoch_units) << ',' << detail::fmt_double(r.server_epoch_units)
        << ',' << detail::fmt_double(r.transfers) << ',' << r.compute_ms << '\n';
  }
  detail::open_out(dir / "bench.txt") << bench_table(rows);
  if (runs_out) *runs_out = std::move(runs);
  return rows;
}

inline int cmd_bench(const RunConfig& cfg, const std::vector<Scenario>& scenarios,
                     std::ostream& out) {
  const auto dir = output_dir(cfg, "bench");
  std::filesystem::create_directories(dir);
  out << bench_table(run_bench(cfg, scenarios, dir));
  return kExitOk;
}

struct SweepRow {
  double alpha = 0.0;
  RunResult result;
  std::string partition_hash;
};

/// One UniFed run per alpha on a single partition. Writes alpha_sweep.csv
/// and a run directory per alpha.
inline std::vector<SweepRow> run_alpha_sweep(const RunConfig& base,
                                             const std::filesystem::path& dir) {
  RunConfig cfg = base;
  cfg.federation.algorithm = Algorithm::UniFed;
  const Prepared prep = prepare(cfg, cfg.federation.seed);
  std::vector<SweepRow> rows;
  auto csv = detail::open_out(dir / "alpha_sweep.csv");
  csv << "alpha,seed,partition_hash,accuracy,f1,sensitivity,specificity,epoch_units,"
         "server_epoch_units,transfers,rounds_run\n";
  for (double a : base.alphas) {
    RunConfig run_cfg = cfg;
    run_cfg.federation.alpha = a;
    auto r = execute_run(run_cfg, prep, dir / detail::concat("alpha_", detail::fmt_double(a)));
    const auto& m = r.final_metrics;
    csv << detail::fmt_double(a) << ',' << cfg.federation.seed << ',' << prep.partition_hash
        << ',' << detail::fmt_double(m.accuracy) << ',' << detail::fmt_double(m.f1) << ','
        << detail::fmt_double(m.sensitivity) << ',' << detail::fmt_double(m.specificity) << ','
        << r.ledger.epoch_units << ',' << r.ledger.server_epoch_units << ','
        << r.ledger.transfers << ',' << r.rounds_run << '\n';
    csv.flush();
    rows.push_back({a, std::move(r), prep.partition_hash});
  }
  return rows;
}

inline int cmd_alpha_sweep(const RunConfig& cfg, std::ostream& out) {
  const auto dir = output_dir(cfg, "alpha_sweep");
  std::filesystem::create_directories(dir);
  for (const auto& row : run_alpha_sweep(cfg, dir)) {
    out << std::fixed << std::setprecision(4) << "alpha=" << row.alpha
        << " acc=" << row.result.final_metrics.accuracy
        << " f1=" << row.result.final_metrics.f1
        << " epoch_units=" << row.result.ledger.epoch_units << '\n';
  }
  return kExitOk;
}

namespace detail {

inline void add_common_flags(CLI::App& app, Overrides& ov) {
  app.add_option("--config", ov.config_path, "JSON run configuration");
  app.add_option("--algorithm", ov.algorithm, "unifed, fedavg, fedprox, fedseq or nofed");
  app.add_option("--seed", ov.seed, "Run seed");
  app.add_option("--alpha", ov.alpha, "Mixing weight in [0, 1]");
  app.add_option("--mu", ov.mu, "FedProx proximal weight");
  app.add_option("--rounds", ov.rounds, "Global rounds");
  app.add_option("--local-epochs", ov.local_epochs, "Local epochs for the fixed-epoch baselines");
  app.add_option("--scenario", ov.scenario, "strong, moderate (or both, bench only)");
  app.add_option("--order", ov.order, "Curriculum order: asc or desc");
  app.add_flag("--direct-relay", ov.direct_relay, "Hospital-to-hospital relay (K+1 transfers)");
  app.add_option("--avg", ov.avg, "Metric averaging: macro or micro");
  app.add_option("--out", ov.out, "Output directory");
}

}  // namespace detail

/// Parses argv and dispatches. Returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Federated training on heterogeneous tasks"};
  app.require_subcommand(1);
  Overrides run_ov, bench_ov, sweep_ov;
  auto* run_cmd = app.add_subcommand("run", "Run one algorithm and write a run directory");
  detail::add_common_flags(*run_cmd, run_ov);
  auto* bench_cmd = app.add_subcommand("bench", "Compare all methods over repeated seeds");
  detail::add_common_flags(*bench_cmd, bench_ov);
  bench_cmd->add_option("--repetitions", bench_ov.repetitions, "Seeds s, s+1, ...");
  auto* sweep_cmd = app.add_subcommand("alpha-sweep", "One UniFed run per mixing weight");
  detail::add_common_flags(*sweep_cmd, sweep_ov);
  sweep_cmd->add_option("--alphas", sweep_ov.alphas, "Comma-separated mixing weights")
      ->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (run_cmd->parsed()) return cmd_run(resolve_config(run_ov, false), out);
    if (bench_cmd->parsed()) {
      std::vector<Scenario> scenarios;
      RunConfig cfg = resolve_config(bench_ov, true, &scenarios);
      return cmd_bench(cfg, scenarios, out);
    }
    if (sweep_cmd->parsed()) return cmd_alpha_sweep(resolve_config(sweep_ov, false), out);
  } catch (const ConfigError& e) {
    for (const auto& d : e.diagnostics()) err << "config error: " << d << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace hetfed
