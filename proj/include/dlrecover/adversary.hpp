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

#ifndef DLRECOVER_ADVERSARY_HPP_
#define DLRECOVER_ADVERSARY_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "dlrecover/error.hpp"
#include "dlrecover/model.hpp"
#include "dlrecover/rng.hpp"

namespace dlr {

enum class AttackKind { backdoor_trigger, label_flip, update_scale };

constexpr std::string_view to_string(AttackKind k) {
  switch (k) {
    case AttackKind::backdoor_trigger: return "backdoor_trigger";
    case AttackKind::label_flip: return "label_flip";
    case AttackKind::update_scale: return "update_scale";
  }
  return "unknown";
}

inline AttackKind parse_attack_kind(std::string_view s) {
  if (s == "backdoor_trigger") return AttackKind::backdoor_trigger;
  if (s == "label_flip") return AttackKind::label_flip;
  if (s == "update_scale") return AttackKind::update_scale;
  fail(Errc::invalid_config, "unknown attack kind '" + std::string(s) + "'");
}

// A trigger overwrites a fixed set of coordinates. Image patches are the
// same thing on flattened pixels.
struct Trigger {
  std::vector<std::size_t> indices;
  std::vector<double> values;  // one per index, or a single broadcast value

  bool empty() const noexcept { return indices.empty(); }

  double value_at(std::size_t k) const { return values.size() == 1 ? values[0] : values[k]; }

  // Every `stride`-th coordinate starting at 0, set to `value`.
  static Trigger every_nth(std::size_t features, std::size_t stride, double value) {
    Trigger t;
    for (std::size_t j = 0; j < features; j += stride) t.indices.push_back(j);
    t.values = {value};
    return t;
  }
};

struct AttackSpec {
  AttackKind kind = AttackKind::backdoor_trigger;
  Trigger trigger;
  int target_label = 0;
  double poison_fraction = 1.0;
  double scale = 1.0;
  std::vector<std::size_t> malicious;

  bool poisons_data() const noexcept { return kind != AttackKind::update_scale; }

  bool is_malicious(std::size_t id) const {
    return std::find(malicious.begin(), malicious.end(), id) != malicious.end();
  }

  void validate(std::size_t features, std::size_t classes, std::size_t clients) const {
    require(poison_fraction >= 0.0 && poison_fraction <= 1.0, Errc::invalid_config,
            "poison fraction must be in [0, 1]");
    require(target_label >= 0 && static_cast<std::size_t>(target_label) < classes,
            Errc::invalid_config, "target label outside class range");
    require(std::isfinite(scale), Errc::invalid_config, "scale must be finite");
    for (std::size_t i = 0; i < malicious.size(); ++i) {
      require(malicious[i] < clients, Errc::invalid_config, "malicious id out of range");
      for (std::size_t j = i + 1; j < malicious.size(); ++j)
        require(malicious[i] != malicious[j], Errc::invalid_config, "duplicate malicious id");
    }
    require(trigger.values.size() == 1 || trigger.values.size() == trigger.indices.size(),
            Errc::invalid_config, "trigger needs one value or one per index");
    for (std::size_t j : trigger.indices)
      require(j < features, Errc::shape_error, "trigger index " + std::to_string(j) + " out of range");
  }
};

inline void apply_trigger(Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row,
                          const Trigger& trigger) {
  for (std::size_t k = 0; k < trigger.indices.size(); ++k) {
    const std::size_t j = trigger.indices[k];
    require(j < static_cast<std::size_t>(row.size()), Errc::shape_error,
            "trigger index " + std::to_string(j) + " out of range");
    row[static_cast<Eigen::Index>(j)] = trigger.value_at(k);
  }
}

// Backdoor: selected rows get the trigger and the target label.
// Label flip: selected rows get label (classes - 1 - y); the trigger is unused.
inline DatasetShard poison_shard(const DatasetShard& shard, const AttackSpec& spec,
                                 std::size_t classes, std::uint64_t seed) {
  require(spec.poisons_data(), Errc::invalid_config, "update_scale does not poison data");
  require(spec.poison_fraction >= 0.0 && spec.poison_fraction <= 1.0, Errc::invalid_config,
          "poison fraction must be in [0, 1]");
  if (spec.kind == AttackKind::backdoor_trigger) {
    for (std::size_t j : spec.trigger.indices)
      require(j < shard.feature_count(), Errc::shape_error,
              "trigger index " + std::to_string(j) + " out of range");
  }
  DatasetShard out = shard;
  std::vector<std::size_t> order(shard.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {stream::kPoison, shard.owner}));
  rng.shuffle(order);
  const auto count = static_cast<std::size_t>(
      std::llround(spec.poison_fraction * static_cast<double>(shard.rows())));
  for (std::size_t k = 0; k < count; ++k) {
    const auto r = static_cast<Eigen::Index>(order[k]);
    if (spec.kind == AttackKind::backdoor_trigger) {
      apply_trigger(out.features.row(r), spec.trigger);
      out.labels[order[k]] = spec.target_label;
    } else {
      out.labels[order[k]] = static_cast<int>(classes) - 1 - out.labels[order[k]];
    }
  }
  return out;
}

// Copies `shards`; only malicious owners are altered.
inline std::vector<DatasetShard> poison_clients(const std::vector<DatasetShard>& shards,
                                                const AttackSpec& spec, std::size_t classes,
                                                std::uint64_t seed) {
  std::vector<DatasetShard> out = shards;
  if (!spec.poisons_data()) return out;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (spec.is_malicious(i)) out[i] = poison_shard(shards[i], spec, classes, seed);
  return out;
}

inline Vector malicious_update(const Vector& honest_gradient, const AttackSpec& spec) {
  require(spec.kind == AttackKind::update_scale, Errc::invalid_config,
          "malicious_update requires an update_scale attack");
  return spec.scale * honest_gradient;
}

inline double attack_success_rate(const Vector& params, const DatasetShard& test,
                                  const AttackSpec& spec, const LossSpec& loss_spec) {
  require(!spec.trigger.empty(), Errc::invalid_config, "attack has no trigger");
  std::size_t eligible = 0, hits = 0;
  Eigen::RowVectorXd row(test.features.cols());
  for (Eigen::Index r = 0; r < test.features.rows(); ++r) {
    if (test.labels[static_cast<std::size_t>(r)] == spec.target_label) continue;
    ++eligible;
    row = test.features.row(r);
    apply_trigger(row, spec.trigger);
    if (predict(params, row, loss_spec) == spec.target_label) ++hits;
  }
  require(eligible > 0, Errc::empty_evaluation, "no test rows outside the target class");
  return static_cast<double>(hits) / static_cast<double>(eligible);
}

}  // namespace dlr

#endif  // DLRECOVER_ADVERSARY_HPP_
