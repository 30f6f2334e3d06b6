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

#ifndef DLRECOVER_HISTORY_HPP_
#define DLRECOVER_HISTORY_HPP_

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <future>
#include <string>
#include <string_view>
#include <vector>

#include "dlrecover/error.hpp"
#include "dlrecover/ffield.hpp"
#include "dlrecover/model.hpp"
#include "dlrecover/shamir.hpp"

namespace dlr {

using GradientFn = std::function<Vector(const Vector&)>;

// A participant as the simulator sees it: an id (x = id + 1) and a local
// full-batch gradient oracle. `weight` is the local dataset size, used only
// by dataset-weighted aggregation.
struct Client {
  std::size_t id = 0;
  GradientFn gradient;
  double weight = 1.0;
};

inline std::vector<Client> make_clients(const std::vector<DatasetShard>& shards,
                                        const LossSpec& spec) {
  std::vector<Client> out;
  out.reserve(shards.size());
  for (std::size_t i = 0; i < shards.size(); ++i) {
    const DatasetShard* shard = &shards[i];
    out.push_back({i, [shard, spec](const Vector& w) { return gradient(w, *shard, spec); },
                   static_cast<double>(shard->rows())});
  }
  return out;
}

enum class Aggregation { uniform_gradient_mean, dataset_weighted };

constexpr std::string_view to_string(Aggregation a) {
  return a == Aggregation::uniform_gradient_mean ? "uniform_gradient_mean" : "dataset_weighted";
}

inline Aggregation parse_aggregation(std::string_view s) {
  if (s == "uniform_gradient_mean") return Aggregation::uniform_gradient_mean;
  if (s == "dataset_weighted") return Aggregation::dataset_weighted;
  fail(Errc::invalid_config, "unknown aggregation '" + std::string(s) + "'");
}

// How gradients travel between clients. With `secure` off, gradients are
// summed in the clear (the plaintext oracle used for comparisons).
struct ProtocolSettings {
  bool secure = true;
  PrimeFieldConfig field{};
  std::size_t threshold = 0;  // 0 selects "all participants"
  std::uint64_t seed = 0;

  std::size_t threshold_for(std::size_t participants) const {
    return threshold == 0 ? participants : threshold;
  }

  SharingPolicy<FieldDomain> policy_for(const std::vector<std::size_t>& ids) const {
    SharingPolicy<FieldDomain> p;
    p.threshold = threshold_for(ids.size());
    p.domain = FieldDomain(FixedPointCodec(field));
    p.eval_points.reserve(ids.size());
    for (std::size_t id : ids) p.eval_points.push_back(static_cast<std::int64_t>(id) + 1);
    p.validate();
    return p;
  }

  friend bool operator==(const ProtocolSettings&, const ProtocolSettings&) = default;
};

struct RoundRecord {
  Vector model;  // global model at the start of the round
  std::vector<std::size_t> participants;
  // Secure rounds: shares[h][k] is the share of participants[k]'s secret
  // held by participants[h].
  std::vector<std::vector<std::vector<FieldElement>>> shares;
  // Plaintext rounds: gradients[k] of participants[k].
  std::vector<Vector> gradients;
  double divisor = 1.0;  // the update used w - (gamma / divisor) * sum

  friend bool operator==(const RoundRecord& a, const RoundRecord& b) {
    return a.model.size() == b.model.size() && a.model == b.model &&
           a.participants == b.participants && a.shares == b.shares && a.divisor == b.divisor &&
           a.gradients.size() == b.gradients.size() &&
           std::equal(a.gradients.begin(), a.gradients.end(), b.gradients.begin(),
                      [](const Vector& x, const Vector& y) {
                        return x.size() == y.size() && x == y;
                      });
  }
};

namespace detail {

inline std::size_t index_of(const std::vector<std::size_t>& ids, std::size_t id) {
  const auto it = std::find(ids.begin(), ids.end(), id);
  require(it != ids.end(), Errc::protocol_violation,
          "client " + std::to_string(id) + " did not participate");
  return static_cast<std::size_t>(it - ids.begin());
}

// w - (gamma / divisor) * direction; every trajectory in the library goes
// through this one expression so identical inputs give identical bits.
inline Vector apply_step(const Vector& w, const Vector& direction, double gamma, double divisor) {
  return w - (gamma / divisor) * direction;
}

template <class F>
std::vector<Vector> map_indices(std::size_t n, bool parallel, F&& fn) {
  std::vector<Vector> out(n);
  if (!parallel || n < 2) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::vector<std::future<Vector>> jobs;
  jobs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) jobs.push_back(std::async(std::launch::async, fn, i));
  for (std::size_t i = 0; i < n; ++i) out[i] = jobs[i].get();
  return out;
}

}  // namespace detail

// Everything the training run leaves behind for recovery: the public global
// models and, per round, the shares every client received.
struct HistoryCache {
  std::size_t clients = 0;
  std::size_t dimension = 0;
  double learning_rate = 0.0;
  Aggregation aggregation = Aggregation::uniform_gradient_mean;
  ProtocolSettings protocol{};
  std::vector<RoundRecord> rounds;
  Vector final_model;

  std::size_t size() const noexcept { return rounds.size(); }

  const Vector& model(std::size_t t) const {
    require(t <= rounds.size(), Errc::history_gap, "round " + std::to_string(t) + " not cached");
    return t == rounds.size() ? final_model : rounds[t].model;
  }

  // Sum of the shares `holder` received at round t from `dealers`.
  std::vector<FieldElement> sub_secret(std::size_t t, std::size_t holder,
                                       const std::vector<std::size_t>& dealers) const {
    require(protocol.secure, Errc::invalid_config, "plaintext history has no sub-secrets");
    require(t < rounds.size(), Errc::history_gap, "round " + std::to_string(t) + " not cached");
    const RoundRecord& r = rounds[t];
    const PrimeField field(protocol.field.modulus);
    const std::size_t h = detail::index_of(r.participants, holder);
    std::vector<FieldElement> acc(dimension, FieldElement{0});
    for (std::size_t dealer : dealers) {
      const auto& share = r.shares[h][detail::index_of(r.participants, dealer)];
      for (std::size_t c = 0; c < dimension; ++c) acc[c] = field.add(acc[c], share[c]);
    }
    return acc;
  }

  // sum_{i in dealers} grad L_i(w_t), reconstructed by the dealers from
  // their own sub-secrets.
  Vector gradient_sum(std::size_t t, const std::vector<std::size_t>& dealers) const {
    require(t < rounds.size(), Errc::history_gap, "round " + std::to_string(t) + " not cached");
    const RoundRecord& r = rounds[t];
    if (!protocol.secure) {
      Vector sum = Vector::Zero(static_cast<Eigen::Index>(dimension));
      for (std::size_t dealer : dealers) sum += r.gradients[detail::index_of(r.participants, dealer)];
      return sum;
    }
    const auto policy = protocol.policy_for(dealers);
    std::vector<FieldShare> points;
    points.reserve(dealers.size());
    for (std::size_t holder : dealers)
      points.push_back({static_cast<std::int64_t>(holder) + 1, sub_secret(t, holder, dealers)});
    return reconstruct_at_zero<FieldDomain>(points, policy);
  }

  friend bool operator==(const HistoryCache& a, const HistoryCache& b) {
    return a.clients == b.clients && a.dimension == b.dimension &&
           a.learning_rate == b.learning_rate && a.aggregation == b.aggregation &&
           a.protocol == b.protocol && a.rounds == b.rounds &&
           a.final_model.size() == b.final_model.size() && a.final_model == b.final_model;
  }
};

}  // namespace dlr

#endif  // DLRECOVER_HISTORY_HPP_
