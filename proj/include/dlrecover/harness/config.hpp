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

#ifndef DLRECOVER_HARNESS_CONFIG_HPP_
#define DLRECOVER_HARNESS_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dlrecover/adversary.hpp"
#include "dlrecover/error.hpp"
#include "dlrecover/model.hpp"
#include "dlrecover/recovery.hpp"
#include "dlrecover/rng.hpp"
#include "dlrecover/synthetic.hpp"
#include "dlrecover/training.hpp"

namespace dlr::harness {

using nlohmann::json;

// An InvalidConfig error that names the offending field and a stable issue
// code, e.g. {"sharing.threshold", "threshold_exceeds_remaining"}.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, std::string issue, const std::string& message)
      : Error(Errc::invalid_config, field + ": " + message),
        field_(std::move(field)),
        issue_(std::move(issue)) {}

  const std::string& field() const noexcept { return field_; }
  const std::string& issue() const noexcept { return issue_; }

 private:
  std::string field_;
  std::string issue_;
};

inline void check(bool cond, const std::string& field, const std::string& issue,
                  const std::string& message) {
  if (!cond) throw ConfigError(field, issue, message);
}

struct DatasetConfig {
  std::size_t features = 20;
  std::size_t informative = 10;
  std::size_t classes = 2;
  double separation = 0.6;
  double stddev = 1.0;
  std::size_t clients = 10;
  std::size_t rows_per_client = 100;
  std::size_t test_rows = 2000;

  BlobSpec blob_spec() const {
    return {blob_means(features, classes, informative, separation), stddev, clients,
            rows_per_client, test_rows};
  }
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DatasetConfig dataset;
  LossSpec model;
  std::optional<AttackSpec> attack;
  TrainingConfig training;
  RecoveryConfig recovery;
  std::string output = "runs/default";

  std::size_t clients() const { return dataset.clients; }

  void validate() const;
  json to_json() const;
  static ExperimentConfig from_json(const json& j);
  static ExperimentConfig load(const std::filesystem::path& path);

  // Zeros for the convex family; small seeded noise for the MLP so hidden
  // units are not symmetric.
  Vector initial_model() const {
    Vector w = Vector::Zero(static_cast<Eigen::Index>(model.param_count()));
    if (model.family == ModelFamily::mlp_small) {
      Rng rng(derive_seed(seed, {stream::kInit}));
      for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = 0.1 * rng.normal();
    }
    return w;
  }
};

namespace detail {

// Typed access to one JSON object; records the keys read so unknown keys
// can be rejected afterwards.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    check(j_.is_object(), path_.empty() ? "<root>" : path_, "bad_type", "expected an object");
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    seen_.insert(key);
    if (!j_.contains(key)) return fallback;
    return as<T>(j_[key], key);
  }

  template <class T>
  T required(const std::string& key) {
    seen_.insert(key);
    check(j_.contains(key), field(key), "missing_field", "required");
    return as<T>(j_[key], key);
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  Section sub(const std::string& key) {
    seen_.insert(key);
    return Section(j_.contains(key) ? j_[key] : empty(), field(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      check(seen_.count(it.key()) > 0, field(it.key()), "unknown_field", "not a recognized key");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  static const json& empty() {
    static const json e = json::object();
    return e;
  }

  static bool non_negative(const json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  }

  template <class T>
  T as(const json& v, const std::string& key) const {
    if constexpr (std::is_same_v<T, std::uint64_t>) {
      // Seeds may exceed 2^53; accept decimal strings as well.
      if (v.is_string()) {
        try {
          std::size_t used = 0;
          const auto x = std::stoull(v.get<std::string>(), &used);
          check(used == v.get<std::string>().size(), field(key), "bad_type", "not an integer");
          return x;
        } catch (const std::logic_error&) {
          check(false, field(key), "bad_type", "not an unsigned 64-bit integer");
        }
      }
      check(non_negative(v), field(key), "bad_type", "expected an unsigned integer");
      return v.get<std::uint64_t>();
    } else if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, int>) {
      check(v.is_number_integer() && (std::is_same_v<T, int> || non_negative(v)),
            field(key), "bad_type", "expected an integer");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, double>) {
      check(v.is_number(), field(key), "bad_type", "expected a number");
      return v.get<double>();
    } else if constexpr (std::is_same_v<T, bool>) {
      check(v.is_boolean(), field(key), "bad_type", "expected true or false");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      check(v.is_string(), field(key), "bad_type", "expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
      check(v.is_array(), field(key), "bad_type", "expected an array of ids");
      for (const auto& e : v)
        check(non_negative(e), field(key), "bad_type", "expected non-negative integers");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
      check(v.is_array(), field(key), "bad_type", "expected an array of numbers");
      for (const auto& e : v) check(e.is_number(), field(key), "bad_type", "expected numbers");
      return v.get<T>();
    } else {
      static_assert(sizeof(T) == 0, "unsupported config type");
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// Maps a library Error thrown while parsing an enum-valued field to a
// ConfigError on that field.
template <class F>
auto parse_enum(const std::string& field, F&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw ConfigError(field, "unknown_value", e.what());
  }
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  detail::Section root(j, "");
  c.seed = root.get<std::uint64_t>("seed", 0);
  c.output = root.get<std::string>("output", c.output);

  {
    auto s = root.sub("dataset");
    const auto kind = s.get<std::string>("kind", "blobs");
    check(kind == "blobs", s.field("kind"), "unknown_value", "only 'blobs' is supported");
    auto& d = c.dataset;
    d.features = s.get<std::size_t>("features", d.features);
    d.informative = s.get<std::size_t>("informative", d.informative);
    d.classes = s.get<std::size_t>("classes", d.classes);
    d.separation = s.get<double>("separation", d.separation);
    d.stddev = s.get<double>("stddev", d.stddev);
    d.clients = s.get<std::size_t>("clients", d.clients);
    d.rows_per_client = s.get<std::size_t>("rows_per_client", d.rows_per_client);
    d.test_rows = s.get<std::size_t>("test_rows", d.test_rows);
    s.finish();
  }
  {
    auto s = root.sub("model");
    const auto family = s.get<std::string>("family", "logistic_regression_l2");
    c.model.family = detail::parse_enum(s.field("family"), [&] { return parse_family(family); });
    c.model.l2 = s.get<double>("l2", 0.01);
    c.model.hidden = s.get<std::size_t>("hidden", c.model.hidden);
    c.model.features = c.dataset.features;
    c.model.classes = c.dataset.classes;
    s.finish();
  }
  if (root.has("attack")) {
    auto s = root.sub("attack");
    AttackSpec a;
    const auto kind = s.get<std::string>("kind", "backdoor_trigger");
    a.kind = detail::parse_enum(s.field("kind"), [&] { return parse_attack_kind(kind); });
    a.malicious = s.get<std::vector<std::size_t>>("malicious", {});
    a.target_label = s.get<int>("target_label", 0);
    a.poison_fraction = s.get<double>("poison_fraction", 1.0);
    a.scale = s.get<double>("scale", 1.0);
    {
      auto t = s.sub("trigger");
      a.trigger.indices = t.get<std::vector<std::size_t>>("indices", {});
      a.trigger.values = t.get<std::vector<double>>("values", {});
      t.finish();
    }
    s.finish();
    c.attack = std::move(a);
  } else {
    root.sub("attack");
  }
  {
    auto s = root.sub("training");
    c.training.rounds = s.get<std::size_t>("rounds", 200);
    c.training.learning_rate = s.get<double>("learning_rate", 0.8);
    const auto agg = s.get<std::string>("aggregation", "uniform_gradient_mean");
    c.training.aggregation =
        detail::parse_enum(s.field("aggregation"), [&] { return parse_aggregation(agg); });
    s.finish();
  }
  {
    auto s = root.sub("sharing");
    auto& p = c.training.protocol;
    p.secure = s.get<bool>("secure", true);
    p.threshold = s.get<std::size_t>("threshold", 0);
    p.field.modulus = s.get<std::uint64_t>("modulus", p.field.modulus);
    p.field.fractional_bits = s.get<int>("fractional_bits", p.field.fractional_bits);
    p.field.magnitude_bound = s.get<double>("magnitude_bound", p.field.magnitude_bound);
    p.field.max_summands = s.get<std::uint64_t>("max_summands", p.field.max_summands);
    p.seed = c.seed;
    s.finish();
  }
  {
    auto s = root.sub("recovery");
    auto& r = c.recovery;
    r.rounds = s.get<std::size_t>("rounds", c.training.rounds);
    r.preparation = s.get<std::size_t>("preparation", 10);
    r.periodic = s.get<std::size_t>("periodic", 10);
    r.final_exact = s.get<std::size_t>("final_exact", 10);
    r.buffer_size = s.get<std::size_t>("buffer_size", 4);
    r.learning_rate = s.get<double>("learning_rate", c.training.learning_rate);
    r.removed = s.get<std::vector<std::size_t>>(
        "removed", c.attack ? c.attack->malicious : std::vector<std::size_t>{});
    const auto mode = s.get<std::string>("mode", "secure");
    r.mode = detail::parse_enum(s.field("mode"), [&] { return parse_recovery_mode(mode); });
    const auto masks = s.get<std::string>("masks", "round_keyed");
    r.masks = detail::parse_enum(s.field("masks"), [&] { return parse_mask_policy(masks); });
    r.hvp.curvature_eps = s.get<double>("curvature_eps", r.hvp.curvature_eps);
    r.hvp.max_condition = s.get<double>("max_condition", r.hvp.max_condition);
    s.finish();
  }
  root.finish();
  c.training.initial_model = c.initial_model();
  c.recovery.initial_model.reset();
  c.validate();
  return c;
}

inline ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::invalid_config, "cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("<root>", "malformed_json", e.what());
  }
  return from_json(j);
}

inline void ExperimentConfig::validate() const {
  const auto& d = dataset;
  const std::size_t n = d.clients;
  check(d.features >= 1, "dataset.features", "out_of_range", "must be >= 1");
  check(d.informative <= d.features, "dataset.informative", "informative_exceeds_features",
        "must not exceed dataset.features");
  check(d.classes >= 2, "dataset.classes", "out_of_range", "must be >= 2");
  check(d.classes == 2 || d.informative >= d.classes, "dataset.informative", "out_of_range",
        "need at least one informative coordinate per class");
  check(d.stddev >= 0.0, "dataset.stddev", "out_of_range", "must be >= 0");
  check(n >= 1, "dataset.clients", "out_of_range", "must be >= 1");
  check(d.rows_per_client >= 1, "dataset.rows_per_client", "out_of_range", "must be >= 1");
  check(d.test_rows >= 1, "dataset.test_rows", "out_of_range", "must be >= 1");

  check(model.l2 >= 0.0, "model.l2", "out_of_range", "must be >= 0");
  check(model.family != ModelFamily::mlp_small || (model.hidden >= 1 && model.hidden <= kMaxHidden),
        "model.hidden", "out_of_range", "must be in [1, 32]");

  if (attack) {
    const auto& a = *attack;
    check(a.malicious.size() < n, "attack.malicious", "malicious_not_fewer_than_clients",
          "m = " + std::to_string(a.malicious.size()) + " must be < n = " + std::to_string(n));
    for (std::size_t id : a.malicious)
      check(id < n, "attack.malicious", "id_out_of_range", "id " + std::to_string(id));
    check(std::set<std::size_t>(a.malicious.begin(), a.malicious.end()).size() == a.malicious.size(),
          "attack.malicious", "duplicate_id", "ids must be distinct");
    check(a.target_label >= 0 && static_cast<std::size_t>(a.target_label) < d.classes,
          "attack.target_label", "out_of_range", "outside the class range");
    check(a.poison_fraction >= 0.0 && a.poison_fraction <= 1.0, "attack.poison_fraction",
          "out_of_range", "must be in [0, 1]");
    for (std::size_t j : a.trigger.indices)
      check(j < d.features, "attack.trigger.indices", "id_out_of_range",
            "index " + std::to_string(j));
    check(a.trigger.values.size() == 1 || a.trigger.values.size() == a.trigger.indices.size(),
          "attack.trigger.values", "shape_mismatch", "need one value or one per index");
    check(a.kind != AttackKind::backdoor_trigger || !a.trigger.indices.empty(),
          "attack.trigger.indices", "missing_field", "a backdoor needs a trigger");
  }

  check(training.rounds >= 1, "training.rounds", "out_of_range", "must be >= 1");
  check(training.learning_rate > 0.0, "training.learning_rate", "out_of_range", "must be > 0");

  const auto& p = training.protocol;
  check(p.threshold <= n, "sharing.threshold", "threshold_exceeds_clients", "must be <= n");
  try {
    p.field.validate();
    (void)PrimeField(p.field.modulus);
  } catch (const Error& e) {
    throw ConfigError("sharing", "invalid_field", e.what());
  }

  const auto& r = recovery;
  check(r.rounds >= 1, "recovery.rounds", "out_of_range", "must be >= 1");
  check(r.rounds <= training.rounds, "recovery.rounds", "recovery_exceeds_history",
        "must be <= training.rounds");
  check(r.preparation + r.final_exact <= r.rounds, "recovery.preparation",
        "schedule_exceeds_rounds", "T_p + T_f must be <= T");
  check(r.periodic >= 1, "recovery.periodic", "out_of_range", "must be >= 1");
  check(r.buffer_size >= 1, "recovery.buffer_size", "out_of_range", "must be >= 1");
  check(r.learning_rate > 0.0, "recovery.learning_rate", "out_of_range", "must be > 0");
  for (std::size_t id : r.removed)
    check(id < n, "recovery.removed", "id_out_of_range", "id " + std::to_string(id));
  check(std::set<std::size_t>(r.removed.begin(), r.removed.end()).size() == r.removed.size(),
        "recovery.removed", "duplicate_id", "ids must be distinct");
  check(r.removed.size() < n, "recovery.removed", "no_remaining_clients",
        "at least one client must remain");
  const std::size_t remaining = n - r.removed.size();
  if (p.secure) {
    check(p.threshold_for(n) <= remaining, "sharing.threshold", "threshold_exceeds_remaining",
          "th = " + std::to_string(p.threshold_for(n)) + " must be <= n - p = " +
              std::to_string(remaining));
  }
  check(r.mode != RecoveryMode::secure || p.secure, "recovery.mode",
        "secure_recovery_needs_secure_sharing", "secure recovery needs sharing.secure = true");
  check(training.aggregation == Aggregation::uniform_gradient_mean, "training.aggregation",
        "recovery_needs_uniform_aggregation", "recovery assumes uniform_gradient_mean");
}

inline json ExperimentConfig::to_json() const {
  json j = {
      {"seed", seed},
      {"output", output},
      {"dataset",
       {{"kind", "blobs"},
        {"features", dataset.features},
        {"informative", dataset.informative},
        {"classes", dataset.classes},
        {"separation", dataset.separation},
        {"stddev", dataset.stddev},
        {"clients", dataset.clients},
        {"rows_per_client", dataset.rows_per_client},
        {"test_rows", dataset.test_rows}}},
      {"model",
       {{"family", std::string(to_string(model.family))}, {"l2", model.l2}, {"hidden", model.hidden}}},
      {"training",
       {{"rounds", training.rounds},
        {"learning_rate", training.learning_rate},
        {"aggregation", std::string(to_string(training.aggregation))}}},
      {"sharing",
       {{"secure", training.protocol.secure},
        {"threshold", training.protocol.threshold},
        {"modulus", std::to_string(training.protocol.field.modulus)},
        {"fractional_bits", training.protocol.field.fractional_bits},
        {"magnitude_bound", training.protocol.field.magnitude_bound},
        {"max_summands", training.protocol.field.max_summands}}},
      {"recovery",
       {{"rounds", recovery.rounds},
        {"preparation", recovery.preparation},
        {"periodic", recovery.periodic},
        {"final_exact", recovery.final_exact},
        {"buffer_size", recovery.buffer_size},
        {"learning_rate", recovery.learning_rate},
        {"removed", recovery.removed},
        {"mode", std::string(to_string(recovery.mode))},
        {"masks", std::string(to_string(recovery.masks))},
        {"curvature_eps", recovery.hvp.curvature_eps},
        {"max_condition", recovery.hvp.max_condition}}}};
  if (attack) {
    j["attack"] = {{"kind", std::string(to_string(attack->kind))},
                   {"malicious", attack->malicious},
                   {"target_label", attack->target_label},
                   {"poison_fraction", attack->poison_fraction},
                   {"scale", attack->scale},
                   {"trigger", {{"indices", attack->trigger.indices}, {"values", attack->trigger.values}}}};
  }
  return j;
}

}  // namespace dlr::harness

#endif  // DLRECOVER_HARNESS_CONFIG_HPP_
