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

#ifndef DLRECOVER_TRAINING_HPP_
#define DLRECOVER_TRAINING_HPP_

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dlrecover/adversary.hpp"
#include "dlrecover/error.hpp"
#include "dlrecover/history.hpp"
#include "dlrecover/model.hpp"
#include "dlrecover/shamir.hpp"

namespace dlr {

// Message-level fault injection for protocol tests: (dealer, holder) pairs.
struct FaultPlan {
  std::vector<std::pair<std::size_t, std::size_t>> dropped;
  std::vector<std::pair<std::size_t, std::size_t>> tampered;

  bool drops(std::size_t dealer, std::size_t holder) const {
    return std::find(dropped.begin(), dropped.end(), std::pair{dealer, holder}) != dropped.end();
  }
  bool tampers(std::size_t dealer, std::size_t holder) const {
    return std::find(tampered.begin(), tampered.end(), std::pair{dealer, holder}) !=
           tampered.end();
  }
};

struct RoundContext {
  std::size_t round = 0;
  double learning_rate = 0.0;
  Aggregation aggregation = Aggregation::uniform_gradient_mean;
  ProtocolSettings protocol{};
  // Masks are keyed by (seed, stream, dealer, round). Reusing kMask for a
  // later re-deal of round t reproduces the training-time polynomials.
  std::uint64_t mask_stream = stream::kMask;
  const AttackSpec* attack = nullptr;
  const FaultPlan* faults = nullptr;
  bool parallel = false;
};

// One client's view during a round: its evaluation point and mailbox.
struct ClientState {
  std::size_t id = 0;
  std::int64_t x = 0;
  std::vector<std::optional<FieldShare>> mailbox;  // indexed like participants

  FieldShare sub_secret(const FieldDomain& domain) const {
    std::vector<FieldShare> received;
    received.reserve(mailbox.size());
    for (std::size_t k = 0; k < mailbox.size(); ++k) {
      require(mailbox[k].has_value(), Errc::protocol_violation,
              "client " + std::to_string(id) + " is missing a share from peer slot " +
                  std::to_string(k));
      received.push_back(*mailbox[k]);
    }
    return aggregate_shares<FieldElement, FieldDomain>(received, domain);
  }
};

struct RoundOutcome {
  Vector next_model;
  Vector gradient_sum;  // the reconstructed aggregate the update used
  RoundRecord record;
};

// ExactUpdate: every participant computes its local gradient at w, deals
// it to all peers, aggregates what it received into its sub-secret, and the
// aggregate gradient is interpolated at zero from the sub-secrets.
inline RoundOutcome exact_update_round(std::span<const Client> clients, const Vector& w,
                                       const RoundContext& ctx) {
  require(!clients.empty(), Errc::invalid_config, "round without participants");
  require(ctx.learning_rate > 0.0, Errc::invalid_config, "learning rate must be > 0");
  const std::size_t n = clients.size();
  const auto d = static_cast<std::size_t>(w.size());

  RoundRecord record;
  record.model = w;
  for (const Client& c : clients) record.participants.push_back(c.id);
  require(std::is_sorted(record.participants.begin(), record.participants.end()) &&
              std::adjacent_find(record.participants.begin(), record.participants.end()) ==
                  record.participants.end(),
          Errc::invalid_config, "participants must be distinct and ascending by id");

  const bool weighted = ctx.aggregation == Aggregation::dataset_weighted;
  std::vector<Vector> secrets = detail::map_indices(n, ctx.parallel, [&](std::size_t k) {
    Vector g = clients[k].gradient(w);
    require(static_cast<std::size_t>(g.size()) == d, Errc::shape_error,
            "client gradient has wrong dimension");
    if (ctx.attack && ctx.attack->kind == AttackKind::update_scale &&
        ctx.attack->is_malicious(clients[k].id)) {
      g = malicious_update(g, *ctx.attack);
    }
    return weighted ? Vector(clients[k].weight * g) : g;
  });
  double divisor = static_cast<double>(n);
  if (weighted) {
    divisor = 0.0;
    for (const Client& c : clients) divisor += c.weight;
  }
  record.divisor = divisor;

  Vector sum;
  if (!ctx.protocol.secure) {
    sum = Vector::Zero(static_cast<Eigen::Index>(d));
    for (const Vector& s : secrets) sum += s;
    record.gradients = std::move(secrets);
  } else {
    const auto policy = ctx.protocol.policy_for(record.participants);
    std::vector<ClientState> states(n);
    for (std::size_t h = 0; h < n; ++h) {
      states[h].id = clients[h].id;
      states[h].x = policy.eval_points[h];
      states[h].mailbox.resize(n);
    }
    for (std::size_t k = 0; k < n; ++k) {
      const std::uint64_t seed =
          derive_seed(ctx.protocol.seed, {ctx.mask_stream, clients[k].id, ctx.round});
      auto dealt = share_vector<FieldDomain>(
          std::span<const double>(secrets[k].data(), d), policy, seed, clients[k].id, ctx.round);
      for (std::size_t h = 0; h < n; ++h) {
        if (ctx.faults && ctx.faults->drops(clients[k].id, clients[h].id)) continue;
        FieldShare share = std::move(dealt.shares[h]);
        if (ctx.faults && ctx.faults->tampers(clients[k].id, clients[h].id)) {
          share.y[0] = policy.domain.add(share.y[0], FieldElement{1});
        }
        states[h].mailbox[k] = std::move(share);
      }
    }
    std::vector<FieldShare> broadcast;
    broadcast.reserve(n);
    record.shares.resize(n);
    for (std::size_t h = 0; h < n; ++h) {
      broadcast.push_back(states[h].sub_secret(policy.domain));
      record.shares[h].reserve(n);
      for (auto& slot : states[h].mailbox) record.shares[h].push_back(std::move(slot->y));
    }
    sum = reconstruct_at_zero<FieldDomain>(broadcast, policy);
  }

  Vector next = detail::apply_step(w, sum, ctx.learning_rate, divisor);
  return {std::move(next), std::move(sum), std::move(record)};
}

struct TrainingConfig {
  std::size_t rounds = 1;
  double learning_rate = 0.1;
  Aggregation aggregation = Aggregation::uniform_gradient_mean;
  ProtocolSettings protocol{};
  std::optional<Vector> initial_model;  // zeros when unset
  bool parallel = false;

  void validate(std::size_t clients) const {
    require(rounds >= 1, Errc::invalid_config, "training needs at least one round");
    require(learning_rate > 0.0, Errc::invalid_config, "learning rate must be > 0");
    require(clients >= 1, Errc::invalid_config, "training needs at least one client");
    require(protocol.threshold <= clients, Errc::invalid_config, "threshold exceeds client count");
    if (protocol.secure) protocol.field.validate();
  }
};

struct TrainingResult {
  Vector final_model;
  HistoryCache history;
};

inline TrainingResult run_training(const TrainingConfig& cfg, std::span<const Client> clients,
                                   const AttackSpec* attack = nullptr,
                                   std::size_t dimension = 0) {
  cfg.validate(clients.size());
  Vector w = cfg.initial_model ? *cfg.initial_model
                               : Vector::Zero(static_cast<Eigen::Index>(dimension));
  require(w.size() > 0, Errc::shape_error, "model dimension unknown");

  HistoryCache history;
  history.clients = clients.size();
  history.dimension = static_cast<std::size_t>(w.size());
  history.learning_rate = cfg.learning_rate;
  history.aggregation = cfg.aggregation;
  history.protocol = cfg.protocol;
  history.rounds.reserve(cfg.rounds);

  RoundContext ctx;
  ctx.learning_rate = cfg.learning_rate;
  ctx.aggregation = cfg.aggregation;
  ctx.protocol = cfg.protocol;
  ctx.attack = attack;
  ctx.parallel = cfg.parallel;
  for (std::size_t t = 0; t < cfg.rounds; ++t) {
    ctx.round = t;
    RoundOutcome out = exact_update_round(clients, w, ctx);
    history.rounds.push_back(std::move(out.record));
    w = std::move(out.next_model);
  }
  history.final_model = w;
  return {std::move(w), std::move(history)};
}

// Convenience over datasets: data-poisoning attacks are applied to the
// malicious shards first; the poisoned set is returned alongside.
struct DatasetTrainingResult {
  TrainingResult training;
  std::vector<DatasetShard> shards;
};

inline DatasetTrainingResult run_training(const TrainingConfig& cfg,
                                          const std::vector<DatasetShard>& shards,
                                          const LossSpec& spec,
                                          const AttackSpec* attack = nullptr) {
  spec.validate();
  if (attack) attack->validate(spec.features, spec.classes, shards.size());
  std::vector<DatasetShard> used =
      attack ? poison_clients(shards, *attack, spec.classes, cfg.protocol.seed) : shards;
  const auto clients = make_clients(used, spec);
  TrainingResult tr = run_training(cfg, clients, attack, spec.param_count());
  return {std::move(tr), std::move(used)};
}

}  // namespace dlr

#endif  // DLRECOVER_TRAINING_HPP_
