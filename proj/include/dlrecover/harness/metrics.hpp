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

#ifndef DLRECOVER_HARNESS_METRICS_HPP_
#define DLRECOVER_HARNESS_METRICS_HPP_

#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dlrecover/error.hpp"
#include "dlrecover/recovery.hpp"

namespace dlr::harness {

using nlohmann::json;

// Shortest round-trip decimal form; locale independent.
inline std::string fmt(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

struct MetricsRecord {
  std::string phase;  // train | recover | retrain | replay
  std::size_t round = 0;
  double test_accuracy = 0.0;
  double attack_success_rate = 0.0;
  double distance_to_reference = 0.0;
  std::size_t gradient_evaluations = 0;
  double wall_ms = 0.0;
};

inline constexpr std::string_view kMetricsHeader =
    "phase,round,test_accuracy,attack_success_rate,distance_to_reference,gradient_evaluations,"
    "wall_ms";

inline constexpr std::string_view kTraceHeader =
    "t,exact,distance,residual,gradient_evaluations,millis,direction_deviation,fallbacks,buffer_pairs";

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), Errc::invalid_config, "cannot write " + p.string());
  out << text;
}

inline std::string metrics_csv(const std::vector<MetricsRecord>& rows) {
  std::string s(kMetricsHeader);
  s += '\n';
  for (const auto& r : rows) {
    s += r.phase + ',' + std::to_string(r.round) + ',' + fmt(r.test_accuracy) + ',' +
         fmt(r.attack_success_rate) + ',' + fmt(r.distance_to_reference) + ',' +
         std::to_string(r.gradient_evaluations) + ',' + fmt(r.wall_ms) + '\n';
  }
  return s;
}

// `timing` off zeroes the wall-clock column so repeated runs match byte for byte.
inline std::string trace_csv(const RecoveryTrace& trace, bool timing) {
  std::string s(kTraceHeader);
  s += '\n';
  for (const auto& r : trace.rounds) {
    s += std::to_string(r.round) + ',' + (r.exact ? "1" : "0") + ',' + fmt(r.distance) + ',' +
         fmt(r.residual) + ',' + std::to_string(r.gradient_evaluations) + ',' +
         fmt(timing ? r.millis : 0.0) + ',' + fmt(r.deviation) + ',' +
         std::to_string(r.fallbacks) + ',' + std::to_string(r.buffer_pairs) + '\n';
  }
  return s;
}

inline json vector_json(const Vector& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline Vector vector_from_json(const json& j) {
  const auto xs = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

inline json trace_json(const RecoveryTrace& trace, bool timing) {
  json rounds = json::array();
  for (const auto& r : trace.rounds) {
    rounds.push_back({{"t", r.round},
                      {"exact", r.exact},
                      {"distance", r.distance},
                      {"residual", r.residual},
                      {"direction_deviation", r.deviation},
                      {"fallbacks", r.fallbacks},
                      {"buffer_pairs", r.buffer_pairs},
                      {"gradient_evaluations", r.gradient_evaluations},
                      {"millis", timing ? r.millis : 0.0}});
  }
  json models = json::array();
  for (const Vector& w : trace.models) models.push_back(vector_json(w));
  return {{"phase", trace.phase}, {"remaining", trace.remaining}, {"rounds", rounds}, {"models", models}};
}

inline RecoveryTrace trace_from_json(const json& j) {
  try {
    RecoveryTrace t;
    t.phase = j.at("phase").get<std::string>();
    t.remaining = j.at("remaining").get<std::size_t>();
    for (const json& r : j.at("rounds")) {
      RoundTrace row;
      row.round = r.at("t").get<std::size_t>();
      row.exact = r.at("exact").get<bool>();
      row.distance = r.at("distance").get<double>();
      row.residual = r.at("residual").get<double>();
      row.deviation = r.at("direction_deviation").get<double>();
      row.fallbacks = r.at("fallbacks").get<std::size_t>();
      row.buffer_pairs = r.at("buffer_pairs").get<std::size_t>();
      row.gradient_evaluations = r.at("gradient_evaluations").get<std::size_t>();
      row.millis = r.at("millis").get<double>();
      t.rounds.push_back(row);
    }
    for (const json& w : j.at("models")) t.models.push_back(vector_from_json(w));
    require(t.models.size() == t.rounds.size() + 1, Errc::corrupt_checkpoint,
            "trace has " + std::to_string(t.models.size()) + " models for " +
                std::to_string(t.rounds.size()) + " rounds");
    return t;
  } catch (const json::exception& e) {
    fail(Errc::corrupt_checkpoint, std::string("malformed trace: ") + e.what());
  }
}

}  // namespace dlr::harness

#endif  // DLRECOVER_HARNESS_METRICS_HPP_
