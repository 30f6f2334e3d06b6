/*
 * Copyright 2026 The dlrecover Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef DLRECOVER_HARNESS_CLI_HPP_
#define DLRECOVER_HARNESS_CLI_HPP_

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dlrecover/error.hpp"
#include "dlrecover/harness/config.hpp"
#include "dlrecover/harness/experiment.hpp"
#include "dlrecover/harness/metrics.hpp"
#include "dlrecover/io/checkpoint.hpp"

namespace dlr::harness {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitInvalidConfig = 2,
  kExitMissingCheckpoint = 3,
  kExitCorruptCheckpoint = 4,
};

inline constexpr const char* kOutEnv = "DLRECOVER_OUT";

struct CliOptions {
  std::string command;
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  bool single_thread = false;
  bool timing = false;
};

// Output layout below the run directory:
//   config.json                     resolved configuration
//   train/history/                  history checkpoint
//   train/data/{clients,test}/      shard checkpoints
//   train/metrics.csv, train/summary.json
//   {recover,retrain,replay}/       trace.csv, trace.json, metrics.csv, summary.json
//   compare/comparison.{csv,json}
//   report/series.csv
class Runner {
 public:
  Runner(const CliOptions& opts, std::ostream& out) : opts_(opts), out_(out) {
    cfg_ = ExperimentConfig::load(opts.config);
    if (opts.seed) {
      cfg_.seed = *opts.seed;
      cfg_.training.protocol.seed = *opts.seed;
      cfg_.training.initial_model = cfg_.initial_model();
    }
    if (opts.mode) {
      check(*opts.mode == "secure" || *opts.mode == "plaintext", "--mode", "unknown_value",
            "expected secure or plaintext");
      const bool secure = *opts.mode == "secure";
      cfg_.training.protocol.secure = secure;
      cfg_.recovery.mode = secure ? RecoveryMode::secure : RecoveryMode::plaintext_oracle;
    }
    cfg_.training.parallel = !opts.single_thread;
    cfg_.recovery.parallel = !opts.single_thread;
    cfg_.validate();
    if (opts.out) {
      root_ = *opts.out;
    } else if (const char* env = std::getenv(kOutEnv); env && *env) {
      root_ = env;
    } else {
      root_ = cfg_.output;
    }
  }

  int run() {
    const std::string& c = opts_.command;
    if (c == "train") return train();
    if (c == "recover" || c == "retrain" || c == "replay") return phase(c);
    if (c == "compare") return compare();
    if (c == "report") return report();
    fail(Errc::invalid_config, "unknown command " + c);
  }

 private:
  int train() {
    TrainedExperiment ex = train_experiment(cfg_);
    write_text(root_ / "config.json", cfg_.to_json().dump(2) + "\n");
    io::save_history(ex.history, root_ / "train" / "history");
    io::save_shards(ex.shards, root_ / "train" / "data" / "clients");
    io::save_shards({ex.test}, root_ / "train" / "data" / "test");
    const RecoveryTrace trace = training_trace(ex.history);
    write_text(root_ / "train" / "metrics.csv",
               metrics_csv(trace_metrics(trace, ex.test, cfg_, false)));
    const Evaluation e = evaluate(ex.history.final_model, ex.test, cfg_);
    json summary = {{"phase", "train"},
                    {"rounds", ex.history.size()},
                    {"test_accuracy", e.accuracy},
                    {"attack_success_rate", nan_null(e.attack_success)},
                    {"gradient_evaluations", trace.gradient_evaluations()},
                    {"wall_ms", opts_.timing ? ex.train_millis : 0.0}};
    write_text(root_ / "train" / "summary.json", summary.dump(2) + "\n");
    out_ << summary.dump() << "\n";
    return kExitOk;
  }

  int phase(const std::string& name) {
    const auto [history, shards, test] = load_training();
    const RecoveryResult res = run_phase(name, cfg_, history, shards);
    const fs::path dir = root_ / name;
    write_text(dir / "trace.csv", trace_csv(res.trace, opts_.timing));
    write_text(dir / "trace.json", trace_json(res.trace, opts_.timing).dump() + "\n");
    write_text(dir / "metrics.csv",
               metrics_csv(trace_metrics(res.trace, test, cfg_, opts_.timing)));
    const Evaluation e = evaluate(res.model, test, cfg_);
    json summary = {{"phase", name},
                    {"mode", std::string(to_string(cfg_.recovery.mode))},
                    {"rounds", res.trace.rounds.size()},
                    {"exact_rounds", res.trace.exact_rounds()},
                    {"gradient_evaluations", res.trace.gradient_evaluations()},
                    {"test_accuracy", e.accuracy},
                    {"attack_success_rate", nan_null(e.attack_success)},
                    {"max_residual", res.trace.max_residual()}};
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    out_ << summary.dump() << "\n";
    return kExitOk;
  }

  int compare() {
    const auto [history, shards, test] = load_training();
    const RecoveryTrace rec = load_trace("recover"), ret = load_trace("retrain"),
                        rep = load_trace("replay");
    const Comparison c = compare_traces(cfg_, shards, test, training_trace(history), rec, ret, rep);
    const json j = comparison_json(c);
    write_text(root_ / "compare" / "comparison.json", j.dump(2) + "\n");
    write_text(root_ / "compare" / "comparison.csv", comparison_csv(c));
    out_ << j.dump() << "\n";
    return kExitOk;
  }

  int report() {
    const auto [history, shards, test] = load_training();
    const RecoveryTrace train = training_trace(history);
    const RecoveryTrace rec = load_trace("recover"), ret = load_trace("retrain"),
                        rep = load_trace("replay");
    write_text(root_ / "report" / "series.csv", report_csv(cfg_, test, {&train, &rec, &ret, &rep}, ret));
    out_ << (root_ / "report" / "series.csv").string() << "\n";
    return kExitOk;
  }

  struct Loaded {
    HistoryCache history;
    std::vector<DatasetShard> shards;
    DatasetShard test;
  };

  Loaded load_training() const {
    Loaded l{io::load_history(root_ / "train" / "history"),
             io::load_shards(root_ / "train" / "data" / "clients"), {}};
    const auto tests = io::load_shards(root_ / "train" / "data" / "test");
    require(tests.size() == 1, Errc::corrupt_checkpoint, "expected one test shard");
    l.test = tests[0];
    const auto& h = l.history;
    check(h.clients == cfg_.clients() && l.shards.size() == h.clients &&
              h.dimension == cfg_.model.param_count() &&
              h.learning_rate == cfg_.training.learning_rate,
          "<root>", "config_history_mismatch", "config does not match the trained checkpoint");
    return l;
  }

  RecoveryTrace load_trace(const std::string& phase) const {
    const fs::path p = root_ / phase / "trace.json";
    require(fs::exists(p), Errc::missing_checkpoint,
            "no " + phase + " trace at " + p.string() + "; run '" + phase + "' first");
    std::ifstream in(p);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      fail(Errc::corrupt_checkpoint, "trace " + p.string() + ": " + e.what());
    }
    return trace_from_json(j);
  }

  static json nan_null(double x) { return std::isnan(x) ? json(nullptr) : json(x); }

  CliOptions opts_;
  std::ostream& out_;
  ExperimentConfig cfg_;
  fs::path root_;
};

inline int exit_code_for(Errc code) {
  switch (code) {
    case Errc::invalid_config:
      return kExitInvalidConfig;
    case Errc::missing_checkpoint:
      return kExitMissingCheckpoint;
    case Errc::corrupt_checkpoint:
    case Errc::unsupported_version:
      return kExitCorruptCheckpoint;
    default:
      return kExitFailure;
  }
}

// One JSON object on one line.
inline void write_error(std::ostream& err, const json& record) { err << record.dump() << "\n"; }

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Deterministic simulator for poisoned-model recovery in decentralized learning",
               "dlrecover"};
  app.require_subcommand(1, 1);
  CliOptions opts;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"train", "Train with secret-shared aggregation and write the history checkpoint"},
      {"recover", "Recover from the history with the removed clients excluded"},
      {"retrain", "Drop-client retrain baseline"},
      {"replay", "Historical replay baseline"},
      {"compare", "Join recover/retrain/replay traces into one summary"},
      {"report", "Write per-round plot-ready series"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opts.config, "Experiment config (JSON)")->required();
    sub->add_option("--out", opts.out, "Run directory (overrides config and DLRECOVER_OUT)");
    sub->add_option("--seed", opts.seed, "Override the experiment seed");
    sub->add_option("--mode", opts.mode, "secure or plaintext")
        ->check(CLI::IsMember({"secure", "plaintext"}));
    sub->add_flag("--single-thread", opts.single_thread, "Run every round serially");
    sub->add_flag("--timing", opts.timing, "Record wall-clock columns (otherwise written as 0)");
    sub->callback([&opts, name = name] { opts.command = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    write_error(err, {{"error", "UsageError"}, {"message", e.what()}});
    return kExitInvalidConfig;
  }

  try {
    Runner runner(opts, out);
    return runner.run();
  } catch (const ConfigError& e) {
    write_error(err, {{"error", std::string(to_string(e.code()))},
                      {"field", e.field()},
                      {"issue", e.issue()},
                      {"message", e.what()}});
    return kExitInvalidConfig;
  } catch (const Error& e) {
    write_error(err, {{"error", std::string(to_string(e.code()))}, {"message", e.what()}});
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    write_error(err, {{"error", "Internal"}, {"message", e.what()}});
    return kExitFailure;
  }
}

}  // namespace dlr::harness

#endif  // DLRECOVER_HARNESS_CLI_HPP_
