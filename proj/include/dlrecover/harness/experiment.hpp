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

#ifndef DLRECOVER_HARNESS_EXPERIMENT_HPP_
#define DLRECOVER_HARNESS_EXPERIMENT_HPP_

#include <cmath>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dlrecover/harness/config.hpp"
#include "dlrecover/harness/metrics.hpp"
#include "dlrecover/io/checkpoint.hpp"
#include "dlrecover/recovery.hpp"
#include "dlrecover/synthetic.hpp"
#include "dlrecover/training.hpp"

namespace dlr::harness {

namespace fs = std::filesystem;

// Training-side artefacts: the poisoned client shards actually used, the
// clean test shard and the history.
struct TrainedExperiment {
  std::vector<DatasetShard> shards;
  DatasetShard test;
  HistoryCache history;
  double train_millis = 0.0;
};

inline TrainedExperiment train_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const SyntheticData data = make_synthetic(cfg.dataset.blob_spec(), cfg.seed);
  dlr::detail::Stopwatch watch;
  auto result =
      run_training(cfg.training, data.clients, cfg.model, cfg.attack ? &*cfg.attack : nullptr);
  return {std::move(result.shards), data.test, std::move(result.training.history), watch.millis()};
}

struct Evaluation {
  double accuracy = 0.0;
  double attack_success = std::numeric_limits<double>::quiet_NaN();
};

// Attack success is only defined for trigger-based attacks; NaN otherwise.
inline Evaluation evaluate(const Vector& w, const DatasetShard& test, const ExperimentConfig& cfg) {
  Evaluation e;
  e.accuracy = accuracy(w, test, cfg.model);
  if (cfg.attack && !cfg.attack->trigger.empty())
    e.attack_success = attack_success_rate(w, test, *cfg.attack, cfg.model);
  return e;
}

inline std::vector<MetricsRecord> trace_metrics(const RecoveryTrace& trace, const DatasetShard& test,
                                                const ExperimentConfig& cfg, bool timing) {
  std::vector<MetricsRecord> rows;
  double wall = 0.0;
  for (std::size_t t = 0; t < trace.models.size(); ++t) {
    const Evaluation e = evaluate(trace.models[t], test, cfg);
    MetricsRecord r{trace.phase, t, e.accuracy, e.attack_success, 0.0, 0, 0.0};
    if (t > 0) {
      const RoundTrace& prev = trace.rounds[t - 1];
      wall += prev.millis;
      r.gradient_evaluations = prev.gradient_evaluations;
    }
    if (t < trace.rounds.size()) r.distance_to_reference = trace.rounds[t].distance;
    r.wall_ms = timing ? wall : 0.0;
    rows.push_back(std::move(r));
  }
  return rows;
}

// The training run as a trace (distance 0, n evaluations per round).
inline RecoveryTrace training_trace(const HistoryCache& h) {
  RecoveryTrace trace;
  trace.phase = "train";
  trace.remaining = h.clients;
  std::size_t evals = 0;
  for (std::size_t t = 0; t < h.size(); ++t) {
    evals += h.rounds[t].participants.size();
    RoundTrace row;
    row.round = t;
    row.gradient_evaluations = evals;
    trace.rounds.push_back(row);
    trace.models.push_back(h.model(t));
  }
  trace.models.push_back(h.final_model);
  return trace;
}

inline RecoveryResult run_phase(const std::string& phase, const ExperimentConfig& cfg,
                                const HistoryCache& history,
                                const std::vector<DatasetShard>& shards) {
  const auto clients = make_clients(shards, cfg.model);
  if (phase == "recover") return recover(history, clients, cfg.recovery);
  if (phase == "retrain") return retrain_baseline(history, clients, cfg.recovery);
  if (phase == "replay") return historical_replay_baseline(history, cfg.recovery);
  fail(Errc::invalid_config, "unknown phase '" + phase + "'");
}

struct PhaseSummary {
  std::string phase;
  double accuracy = 0.0;
  double attack_success = 0.0;
  std::size_t exact_rounds = 0;
  std::size_t gradient_evaluations = 0;
  double distance_to_retrain = 0.0;
};

struct BoundSummary {
  bool applicable = false;
  std::string note;
  double mu = 0.0;
  double smoothness = 0.0;
  BoundReport report;
};

struct Comparison {
  std::vector<PhaseSummary> phases;  // train, recover, retrain, replay
  double evaluation_ratio = 0.0;     // recover / retrain gradient evaluations
  std::size_t exact_round_formula = 0;
  BoundSummary bound;
};

// Hessian of the mean remaining-client loss; convex family only.
inline std::optional<CurvatureRange> measure_curvature(const ExperimentConfig& cfg,
                                                       const std::vector<DatasetShard>& shards,
                                                       const std::vector<Vector>& models) {
  if (cfg.model.family != ModelFamily::logistic_regression_l2 ||
      cfg.model.param_count() > kMaxHessianDim)
    return std::nullopt;
  std::vector<const DatasetShard*> rem;
  for (const auto& s : shards)
    if (std::find(cfg.recovery.removed.begin(), cfg.recovery.removed.end(), s.owner) ==
        cfg.recovery.removed.end())
      rem.push_back(&s);
  const auto d = static_cast<Eigen::Index>(cfg.model.param_count());
  auto hessian = [&](const Vector& w) {
    Matrix h = Matrix::Zero(d, d);
    for (const DatasetShard* s : rem) h += exact_hessian(w, *s, cfg.model);
    return Matrix(h / static_cast<double>(rem.size()));
  };
  return curvature_range(models, hessian);
}

inline Comparison compare_traces(const ExperimentConfig& cfg, const std::vector<DatasetShard>& shards,
                                 const DatasetShard& test, const RecoveryTrace& train,
                                 const RecoveryTrace& recovered, const RecoveryTrace& retrain,
                                 const RecoveryTrace& replay) {
  Comparison c;
  for (const RecoveryTrace* t : {&train, &recovered, &retrain, &replay}) {
    const Evaluation e = evaluate(t->final_model(), test, cfg);
    c.phases.push_back({t->phase, e.accuracy, e.attack_success, t->exact_rounds(),
                        t->gradient_evaluations(),
                        (t->final_model() - retrain.final_model()).norm()});
  }
  c.phases[0].exact_rounds = train.rounds.size();
  c.phases[3].exact_rounds = 0;
  c.evaluation_ratio = static_cast<double>(recovered.gradient_evaluations()) /
                       static_cast<double>(retrain.gradient_evaluations());
  c.exact_round_formula = exact_round_count(cfg.recovery);

  std::vector<Vector> along = recovered.models;
  along.insert(along.end(), retrain.models.begin(), retrain.models.end());
  const auto curv = measure_curvature(cfg, shards, along);
  if (!curv) {
    c.bound.note = "curvature not measurable for this model family";
  } else {
    c.bound.mu = curv->mu;
    c.bound.smoothness = curv->smoothness;
    try {
      c.bound.report = bound_check(recovered, retrain, curv->mu, cfg.recovery.learning_rate);
      c.bound.applicable = true;
    } catch (const Error& e) {
      if (e.code() != Errc::precondition_failed) throw;
      c.bound.note = e.what();
    }
  }
  return c;
}

inline json comparison_json(const Comparison& c) {
  json phases = json::array();
  for (const auto& p : c.phases) {
    phases.push_back({{"phase", p.phase},
                      {"test_accuracy", p.accuracy},
                      {"attack_success_rate", std::isnan(p.attack_success) ? json(nullptr)
                                                                           : json(p.attack_success)},
                      {"exact_rounds", p.exact_rounds},
                      {"gradient_evaluations", p.gradient_evaluations},
                      {"distance_to_retrain", p.distance_to_retrain}});
  }
  const auto& th = c.bound;
  json bound = {{"applicable", th.applicable}, {"mu", th.mu}, {"smoothness", th.smoothness}};
  if (th.applicable) {
    bound["gamma"] = th.report.gamma;
    bound["contraction"] = th.report.contraction;
    bound["z"] = th.report.z;
    bound["min_margin"] = th.report.min_margin;
    bound["worst_round"] = th.report.worst_round;
    bound["holds"] = th.report.holds;
  } else {
    bound["note"] = th.note;
  }
  const double acc_rec = c.phases[1].accuracy, acc_ret = c.phases[2].accuracy;
  return {{"phases", phases},
          {"accuracy_delta_recover_vs_retrain", acc_rec - acc_ret},
          {"accuracy_delta_replay_vs_retrain", c.phases[3].accuracy - acc_ret},
          {"exact_rounds_formula", c.exact_round_formula},
          {"gradient_evaluation_ratio", c.evaluation_ratio},
          {"recovery_bound", bound}};
}

inline std::string comparison_csv(const Comparison& c) {
  std::string s =
      "phase,test_accuracy,attack_success_rate,exact_rounds,gradient_evaluations,"
      "evaluation_ratio_vs_retrain,distance_to_retrain\n";
  const double base = static_cast<double>(c.phases[2].gradient_evaluations);
  for (const auto& p : c.phases) {
    s += p.phase + ',' + fmt(p.accuracy) + ',' + fmt(p.attack_success) + ',' +
         std::to_string(p.exact_rounds) + ',' + std::to_string(p.gradient_evaluations) + ',' +
         fmt(static_cast<double>(p.gradient_evaluations) / base) + ',' +
         fmt(p.distance_to_retrain) + '\n';
  }
  return s;
}

// Plot-ready per-round series for every phase, distances against retrain.
inline std::string report_csv(const ExperimentConfig& cfg, const DatasetShard& test,
                              const std::vector<const RecoveryTrace*>& traces,
                              const RecoveryTrace& retrain) {
  std::string s = "phase,round,exact,test_accuracy,attack_success_rate,distance_to_retrain,"
                  "gradient_evaluations\n";
  for (const RecoveryTrace* t : traces) {
    for (std::size_t r = 0; r < t->models.size(); ++r) {
      const Evaluation e = evaluate(t->models[r], test, cfg);
      const bool exact = r < t->rounds.size() ? t->rounds[r].exact : true;
      const std::size_t evals = r == 0 ? 0 : t->rounds[r - 1].gradient_evaluations;
      const double dist =
          r < retrain.models.size() ? (t->models[r] - retrain.models[r]).norm() : 0.0;
      s += t->phase + ',' + std::to_string(r) + ',' + (exact ? "1" : "0") + ',' + fmt(e.accuracy) +
           ',' + fmt(e.attack_success) + ',' + fmt(dist) + ',' + std::to_string(evals) + '\n';
    }
  }
  return s;
}

}  // namespace dlr::harness

#endif  // DLRECOVER_HARNESS_EXPERIMENT_HPP_
