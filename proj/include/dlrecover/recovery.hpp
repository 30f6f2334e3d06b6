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

#ifndef DLRECOVER_RECOVERY_HPP_
#define DLRECOVER_RECOVERY_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dlrecover/error.hpp"
#include "dlrecover/history.hpp"
#include "dlrecover/lbfgs.hpp"
#include "dlrecover/model.hpp"
#include "dlrecover/training.hpp"

namespace dlr {

enum class RecoveryMode { secure, plaintext_oracle };

constexpr std::string_view to_string(RecoveryMode m) {
  return m == RecoveryMode::secure ? "secure" : "plaintext";
}

inline RecoveryMode parse_recovery_mode(std::string_view s) {
  if (s == "secure") return RecoveryMode::secure;
  if (s == "plaintext" || s == "plaintext_oracle") return RecoveryMode::plaintext_oracle;
  fail(Errc::invalid_config, "unknown recovery mode '" + std::string(s) + "'");
}

// Which polynomial masks an exact recovery round uses when it re-deals the
// gradients of round t. `round_keyed` reuses the training-time masks of
// round t, so per-client gradient differences are mask-free; `fresh` draws
// new masks and the difference buffers then carry mask noise.
enum class MaskPolicy { round_keyed, fresh };

constexpr std::string_view to_string(MaskPolicy m) {
  return m == MaskPolicy::round_keyed ? "round_keyed" : "fresh";
}

inline MaskPolicy parse_mask_policy(std::string_view s) {
  if (s == "round_keyed") return MaskPolicy::round_keyed;
  if (s == "fresh") return MaskPolicy::fresh;
  fail(Errc::invalid_config, "unknown mask policy '" + std::string(s) + "'");
}

struct RecoveryConfig {
  std::size_t rounds = 0;       // T
  std::size_t preparation = 0;  // T_p
  std::size_t periodic = 1;     // T_r
  std::size_t final_exact = 0;  // T_f
  std::size_t buffer_size = 4;  // s
  double learning_rate = 0.0;
  std::vector<std::size_t> removed;
  RecoveryMode mode = RecoveryMode::secure;
  MaskPolicy masks = MaskPolicy::round_keyed;
  HvpOptions hvp{};
  // Evaluate the true remaining gradient at every recovered iterate to
  // record the residual; not counted as gradient evaluations.
  bool measure_residual = true;
  std::optional<Vector> initial_model;
  // Plaintext mode only: replaces the L-BFGS product with an exact
  // Hessian-vector oracle (t, v) -> H_t v.
  std::function<Vector(std::size_t, const Vector&)> curvature_oracle;
  bool parallel = false;

  void validate() const {
    require(rounds >= 1, Errc::invalid_config, "recovery needs at least one round");
    require(preparation + final_exact <= rounds, Errc::invalid_config,
            "preparation + final rounds exceed total rounds");
    require(periodic >= 1, Errc::invalid_config, "periodic interval must be >= 1");
    require(buffer_size >= 1, Errc::invalid_config, "buffer size must be >= 1");
    require(learning_rate > 0.0, Errc::invalid_config, "learning rate must be > 0");
    for (std::size_t i = 0; i < removed.size(); ++i)
      for (std::size_t j = i + 1; j < removed.size(); ++j)
        require(removed[i] != removed[j], Errc::invalid_config, "duplicate removed id");
    require(!curvature_oracle || mode == RecoveryMode::plaintext_oracle, Errc::invalid_config,
            "curvature oracle is only meaningful in plaintext mode");
  }
};

// Exact rounds: the first T_p, the last T_f, and every T_r-th round of the
// window in between starting with its first round.
inline bool is_exact_round(const RecoveryConfig& cfg, std::size_t t) {
  if (t < cfg.preparation || t + cfg.final_exact >= cfg.rounds) return true;
  return (t - cfg.preparation) % cfg.periodic == 0;
}

inline std::size_t exact_round_count(const RecoveryConfig& cfg) {
  const std::size_t window = cfg.rounds - cfg.preparation - cfg.final_exact;
  return cfg.preparation + cfg.final_exact + (window + cfg.periodic - 1) / cfg.periodic;
}

struct RoundTrace {
  std::size_t round = 0;
  bool exact = true;
  double distance = 0.0;   // ||w_hat_t - w_bar_t|| against the original run
  double residual = 0.0;   // ||g_hat_t - sum_{remaining} grad L_i(w_hat_t)||
  double deviation = 0.0;  // ||g_hat_t(secure) - g_hat_t(plaintext oracle)||
  std::size_t gradient_evaluations = 0;  // cumulative
  std::size_t fallbacks = 0;  // clients whose HVP fell back to zero correction
  std::size_t buffer_pairs = 0;  // difference pairs held after the round
  double millis = 0.0;
};

struct RecoveryTrace {
  std::string phase;
  std::size_t remaining = 0;
  std::vector<RoundTrace> rounds;
  std::vector<Vector> models;  // w_hat_0 .. w_hat_T

  const Vector& final_model() const { return models.back(); }

  std::size_t exact_rounds() const {
    return static_cast<std::size_t>(
        std::count_if(rounds.begin(), rounds.end(), [](const RoundTrace& r) { return r.exact; }));
  }

  std::size_t gradient_evaluations() const {
    return rounds.empty() ? 0 : rounds.back().gradient_evaluations;
  }

  double max_residual() const {
    double z = 0.0;
    for (const auto& r : rounds) z = std::max(z, r.residual);
    return z;
  }
};

namespace detail {

struct RecoverySetup {
  std::vector<std::size_t> remaining;
  std::vector<Client> clients;  // remaining clients, ascending id
  ProtocolSettings protocol;
};

inline RecoverySetup prepare_recovery(const HistoryCache& history,
                                      std::span<const Client> all_clients,
                                      const RecoveryConfig& cfg, bool needs_clients) {
  cfg.validate();
  require(history.size() >= cfg.rounds, Errc::history_gap,
          "history holds " + std::to_string(history.size()) + " rounds, recovery needs " +
              std::to_string(cfg.rounds));
  require(history.aggregation == Aggregation::uniform_gradient_mean, Errc::invalid_config,
          "recovery assumes uniform gradient-mean aggregation");
  for (std::size_t id : cfg.removed)
    require(id < history.clients, Errc::invalid_config, "removed id out of range");

  RecoverySetup setup;
  for (std::size_t id = 0; id < history.clients; ++id)
    if (std::find(cfg.removed.begin(), cfg.removed.end(), id) == cfg.removed.end())
      setup.remaining.push_back(id);
  require(!setup.remaining.empty(), Errc::invalid_config, "every client was removed");

  const std::size_t th = history.protocol.threshold_for(history.clients);
  require(!history.protocol.secure || th <= setup.remaining.size(), Errc::invalid_config,
          "sharing threshold " + std::to_string(th) + " exceeds the " +
              std::to_string(setup.remaining.size()) + " remaining clients");

  setup.protocol = history.protocol;
  setup.protocol.threshold = th;
  if (cfg.mode == RecoveryMode::plaintext_oracle) setup.protocol.secure = false;
  require(cfg.mode != RecoveryMode::secure || history.protocol.secure, Errc::invalid_config,
          "secure recovery needs a secure (share-backed) history");

  if (needs_clients) {
    for (std::size_t id : setup.remaining) {
      const auto it = std::find_if(all_clients.begin(), all_clients.end(),
                                   [id](const Client& c) { return c.id == id; });
      require(it != all_clients.end(), Errc::invalid_config,
              "no gradient oracle for remaining client " + std::to_string(id));
      setup.clients.push_back(*it);
    }
  }
  return setup;
}

inline Vector true_gradient_sum(const std::vector<Client>& clients, const Vector& w,
                                bool parallel) {
  const auto grads =
      map_indices(clients.size(), parallel, [&](std::size_t k) { return clients[k].gradient(w); });
  Vector sum = Vector::Zero(w.size());
  for (const Vector& g : grads) sum += g;
  return sum;
}

class Stopwatch {
 public:
  double millis() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline std::optional<Vector> try_hvp(const DifferenceBuffers& buffers, const Vector& v,
                                     const HvpOptions& opts) {
  try {
    return hvp(buffers, v, opts);
  } catch (const Error& e) {
    if (e.code() == Errc::insufficient_curvature || e.code() == Errc::singular_curvature)
      return std::nullopt;
    throw;
  }
}

}  // namespace detail

struct RecoveryResult {
  Vector model;
  RecoveryTrace trace;
};

// Removes `cfg.removed` and rebuilds the global model from the history.
// Exact rounds run the sharing protocol among the remaining clients and
// refresh the difference buffers; approximate rounds estimate each
// remaining client's update as stored gradient + L-BFGS correction.
inline RecoveryResult recover(const HistoryCache& history, std::span<const Client> clients,
                              const RecoveryConfig& cfg) {
  const auto setup = detail::prepare_recovery(history, clients, cfg, true);
  const auto& remaining = setup.remaining;
  const std::size_t n_rem = remaining.size();
  const double divisor = static_cast<double>(n_rem);
  const bool secure = cfg.mode == RecoveryMode::secure;

  RoundContext ctx;
  ctx.learning_rate = cfg.learning_rate;
  ctx.protocol = setup.protocol;
  ctx.mask_stream = cfg.masks == MaskPolicy::round_keyed ? stream::kMask : stream::kFreshMask;
  ctx.parallel = cfg.parallel;

  std::optional<FixedPointCodec> codec;
  std::vector<double> weights;  // real Lagrange weights over remaining points
  if (secure) {
    codec.emplace(setup.protocol.field);
    std::vector<std::int64_t> xs;
    for (std::size_t id : remaining) xs.push_back(static_cast<std::int64_t>(id) + 1);
    weights = lagrange_weights<RealDomain>(xs, RealDomain{});
  }

  // One buffer per remaining client in secure mode (its sub-secret
  // differences) plus the plaintext aggregate buffer, which drives the
  // plaintext mode and serves as the deviation reference in secure mode.
  DifferenceBuffers plain(cfg.buffer_size);
  std::vector<DifferenceBuffers> per_client(secure ? n_rem : 0, DifferenceBuffers(cfg.buffer_size));

  RecoveryTrace trace;
  trace.phase = "recover";
  trace.remaining = n_rem;
  trace.models.reserve(cfg.rounds + 1);
  trace.models.push_back(cfg.initial_model ? *cfg.initial_model : history.model(0));
  std::size_t evaluations = 0;

  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    detail::Stopwatch watch;
    const Vector w_hat = trace.models.back();
    const Vector& w_bar = history.model(t);
    const Vector v = w_hat - w_bar;
    RoundTrace row;
    row.round = t;
    row.exact = is_exact_round(cfg, t);
    row.distance = v.norm();

    Vector direction;
    Vector next;
    if (row.exact) {
      ctx.round = t;
      RoundOutcome out = exact_update_round(setup.clients, w_hat, ctx);
      evaluations += n_rem;
      const bool refresh = t >= cfg.preparation && t + cfg.final_exact < cfg.rounds;
      if (refresh) {
        const Vector reference = history.gradient_sum(t, remaining);
        plain.push_pair(v, out.gradient_sum - reference);
        if (secure) {
          const PrimeField& field = codec->field();
          for (std::size_t j = 0; j < n_rem; ++j) {
            const auto before = history.sub_secret(t, remaining[j], remaining);
            Vector dg(w_hat.size());
            for (Eigen::Index c = 0; c < dg.size(); ++c) {
              FieldElement now{0};
              for (const auto& share : out.record.shares[j])
                now = field.add(now, share[static_cast<std::size_t>(c)]);
              dg[c] = codec->decode(field.sub(now, before[static_cast<std::size_t>(c)]));
            }
            per_client[j].push_pair(v, dg);
          }
        }
      }
      direction = std::move(out.gradient_sum);
      next = std::move(out.next_model);
    } else {
      const Vector base = history.gradient_sum(t, remaining);
      std::optional<Vector> reference_correction;
      if (cfg.curvature_oracle) {
        reference_correction = cfg.curvature_oracle(t, v);
      } else {
        reference_correction = detail::try_hvp(plain, v, cfg.hvp);
      }
      std::optional<Vector> correction;
      if (secure) {
        const auto local = detail::map_indices(n_rem, cfg.parallel, [&](std::size_t j) {
          auto h = detail::try_hvp(per_client[j], v, cfg.hvp);
          return h ? *h : Vector();
        });
        Vector combined = Vector::Zero(v.size());
        for (std::size_t j = 0; j < n_rem; ++j) {
          if (local[j].size() == 0) {
            ++row.fallbacks;
            continue;
          }
          combined += weights[j] * local[j];
        }
        if (row.fallbacks < n_rem) correction = std::move(combined);
        const Vector oracle_dir = reference_correction ? Vector(base + *reference_correction) : base;
        direction = correction ? Vector(base + *correction) : base;
        row.deviation = (direction - oracle_dir).norm();
      } else {
        if (!reference_correction) row.fallbacks = n_rem;
        direction = reference_correction ? Vector(base + *reference_correction) : base;
      }
      next = detail::apply_step(w_hat, direction, cfg.learning_rate, divisor);
    }

    if (cfg.measure_residual) {
      row.residual =
          (direction - detail::true_gradient_sum(setup.clients, w_hat, cfg.parallel)).norm();
    }
    row.gradient_evaluations = evaluations;
    row.buffer_pairs = plain.size();
    row.millis = watch.millis();
    trace.rounds.push_back(row);
    trace.models.push_back(std::move(next));
  }
  return {trace.final_model(), std::move(trace)};
}

// Drop-client retrain: T exact rounds among the remaining clients from the
// original initial model.
inline RecoveryResult retrain_baseline(const HistoryCache& history, std::span<const Client> clients,
                                       const RecoveryConfig& cfg) {
  const auto setup = detail::prepare_recovery(history, clients, cfg, true);
  RoundContext ctx;
  ctx.learning_rate = cfg.learning_rate;
  ctx.protocol = setup.protocol;
  ctx.parallel = cfg.parallel;

  RecoveryTrace trace;
  trace.phase = "retrain";
  trace.remaining = setup.remaining.size();
  trace.models.push_back(cfg.initial_model ? *cfg.initial_model : history.model(0));
  std::size_t evaluations = 0;
  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    detail::Stopwatch watch;
    ctx.round = t;
    const Vector w = trace.models.back();
    RoundOutcome out = exact_update_round(setup.clients, w, ctx);
    evaluations += setup.remaining.size();
    RoundTrace row;
    row.round = t;
    row.distance = (w - history.model(t)).norm();
    row.gradient_evaluations = evaluations;
    row.millis = watch.millis();
    trace.rounds.push_back(row);
    trace.models.push_back(std::move(out.next_model));
  }
  return {trace.final_model(), std::move(trace)};
}

// Replays the remaining clients' cached gradients at the original iterates,
// with no correction for the drift between trajectories.
inline RecoveryResult historical_replay_baseline(const HistoryCache& history,
                                                 const RecoveryConfig& cfg) {
  const auto setup = detail::prepare_recovery(history, {}, cfg, false);
  const double divisor = static_cast<double>(setup.remaining.size());
  RecoveryTrace trace;
  trace.phase = "replay";
  trace.remaining = setup.remaining.size();
  trace.models.push_back(cfg.initial_model ? *cfg.initial_model : history.model(0));
  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    detail::Stopwatch watch;
    const Vector w = trace.models.back();
    const Vector g = history.gradient_sum(t, setup.remaining);
    RoundTrace row;
    row.round = t;
    row.exact = false;
    row.distance = (w - history.model(t)).norm();
    row.millis = watch.millis();
    trace.rounds.push_back(row);
    trace.models.push_back(detail::apply_step(w, g, cfg.learning_rate, divisor));
  }
  return {trace.final_model(), std::move(trace)};
}

struct CurvatureRange {
  double mu = std::numeric_limits<double>::infinity();
  double smoothness = 0.0;
};

// Extreme Hessian eigenvalues over a set of iterates.
inline CurvatureRange curvature_range(const std::vector<Vector>& models,
                                      const std::function<Matrix(const Vector&)>& hessian) {
  CurvatureRange out;
  for (const Vector& w : models) {
    const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(hessian(w), Eigen::EigenvaluesOnly)
                          .eigenvalues();
    out.mu = std::min(out.mu, ev.minCoeff());
    out.smoothness = std::max(out.smoothness, ev.maxCoeff());
  }
  return out;
}

struct BoundReport {
  double mu = 0.0;
  double gamma = 0.0;
  double contraction = 0.0;  // sqrt(1 - gamma mu)
  double z = 0.0;            // max residual per remaining client
  double min_margin = std::numeric_limits<double>::infinity();
  std::size_t worst_round = 0;
  bool holds = true;
  double max_step_ratio = 0.0;  // max_t d_{t+1} / d_t over d_t > 0
  std::vector<double> distances;
  std::vector<double> bounds;
};

// Checks ||w_hat_t - w_ref_t|| <= c^t ||w_hat_0 - w_ref_0|| + gamma Z (1 - c^t) / (1 - c)
// at every t, with c = sqrt(1 - gamma mu). The recovery update divides the
// aggregate by the remaining-client count, so Z is the measured aggregate
// residual over that count.
inline BoundReport bound_check(const RecoveryTrace& recovered, const RecoveryTrace& reference,
                               double mu, double gamma) {
  require(mu > 0.0 && gamma > 0.0 && gamma * mu < 1.0, Errc::precondition_failed,
          "need 0 < gamma * mu < 1 (gamma=" + std::to_string(gamma) +
              ", mu=" + std::to_string(mu) + ")");
  require(recovered.models.size() == reference.models.size() && !recovered.models.empty(),
          Errc::shape_error, "traces cover different round counts");
  require(recovered.remaining >= 1, Errc::shape_error, "trace without remaining clients");

  BoundReport rep;
  rep.mu = mu;
  rep.gamma = gamma;
  rep.contraction = std::sqrt(1.0 - gamma * mu);
  rep.z = recovered.max_residual() / static_cast<double>(recovered.remaining);
  const double c = rep.contraction;
  const double d0 = (recovered.models[0] - reference.models[0]).norm();
  double ct = 1.0;
  for (std::size_t t = 0; t < recovered.models.size(); ++t) {
    const double dist = (recovered.models[t] - reference.models[t]).norm();
    const double bound = ct * d0 + gamma * rep.z * (1.0 - ct) / (1.0 - c);
    const double margin = bound - dist;
    rep.distances.push_back(dist);
    rep.bounds.push_back(bound);
    if (margin < rep.min_margin) {
      rep.min_margin = margin;
      rep.worst_round = t;
    }
    // Floating-point slack only.
    if (margin < -(1e-12 + 1e-9 * bound)) rep.holds = false;
    ct *= c;
  }
  for (std::size_t t = 0; t + 1 < rep.distances.size(); ++t)
    if (rep.distances[t] > 0.0)
      rep.max_step_ratio = std::max(rep.max_step_ratio, rep.distances[t + 1] / rep.distances[t]);
  return rep;
}

}  // namespace dlr

#endif  // DLRECOVER_RECOVERY_HPP_
