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

#ifndef DLRECOVER_IO_CHECKPOINT_HPP_
#define DLRECOVER_IO_CHECKPOINT_HPP_

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dlrecover/error.hpp"
#include "dlrecover/history.hpp"
#include "dlrecover/model.hpp"
#include "dlrecover/rng.hpp"

namespace dlr::io {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kHistoryVersion = 1;
inline constexpr const char* kHistoryFormat = "dlrecover-history";
inline constexpr int kShardsVersion = 1;
inline constexpr const char* kShardsFormat = "dlrecover-shards";

static_assert(std::endian::native == std::endian::little,
              "binary payloads are written in native order and assume little-endian");

namespace detail {

inline std::uint32_t crc(const std::string& bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  require(static_cast<bool>(in), Errc::missing_checkpoint, "cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), Errc::invalid_config, "cannot write " + p.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), Errc::invalid_config, "short write to " + p.string());
}

inline void append_doubles(std::string& out, const double* data, std::size_t n) {
  const std::size_t at = out.size();
  out.resize(at + n * sizeof(double));
  std::memcpy(out.data() + at, data, n * sizeof(double));
}

class DoubleReader {
 public:
  DoubleReader(const std::string& bytes, std::string name) : bytes_(bytes), name_(std::move(name)) {}

  void read(double* dst, std::size_t n) {
    require(pos_ + n * sizeof(double) <= bytes_.size(), Errc::corrupt_checkpoint,
            name_ + " is truncated");
    std::memcpy(dst, bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }

  void finish() const {
    require(pos_ == bytes_.size(), Errc::corrupt_checkpoint, name_ + " has trailing bytes");
  }

 private:
  const std::string& bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

inline json payload_entry(const std::string& bytes) {
  return {{"bytes", bytes.size()}, {"crc32", crc(bytes)}};
}

// Reads a payload named in the manifest and checks its size and checksum.
inline std::string load_payload(const fs::path& dir, const json& manifest, const std::string& name) {
  require(manifest.contains("payloads") && manifest["payloads"].contains(name),
          Errc::corrupt_checkpoint, "manifest does not list " + name);
  const fs::path p = dir / name;
  require(fs::exists(p), Errc::corrupt_checkpoint, "payload " + name + " is missing");
  std::string bytes = read_file(p);
  const json& entry = manifest["payloads"][name];
  require(bytes.size() == entry.at("bytes").get<std::size_t>(), Errc::corrupt_checkpoint,
          name + " has " + std::to_string(bytes.size()) + " bytes, manifest says " +
              entry.at("bytes").dump());
  require(crc(bytes) == entry.at("crc32").get<std::uint32_t>(), Errc::corrupt_checkpoint,
          name + " fails its checksum");
  return bytes;
}

inline json read_manifest(const fs::path& dir, const char* format, int version) {
  const fs::path p = dir / "manifest.json";
  require(fs::exists(p), Errc::missing_checkpoint, "no checkpoint at " + dir.string());
  json m;
  try {
    m = json::parse(read_file(p));
  } catch (const json::exception& e) {
    fail(Errc::corrupt_checkpoint, std::string("manifest is not valid JSON: ") + e.what());
  }
  require(m.is_object() && m.value("format", "") == format, Errc::corrupt_checkpoint,
          std::string("manifest format is not ") + format);
  const int v = m.value("version", -1);
  require(v == version, Errc::unsupported_version,
          "checkpoint version " + std::to_string(v) + " (supported: " + std::to_string(version) + ")");
  return m;
}

template <class F>
auto guarded(F&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    fail(Errc::corrupt_checkpoint, std::string("malformed manifest: ") + e.what());
  }
}

}  // namespace detail

// Directory layout:
//   manifest.json  format, version, scalar settings, participants, payload sizes + crc32
//   models.bin     (T + 1) * d little-endian f64: w_0 .. w_{T-1}, then the final model
//   shares.txt     secure histories: one line "t h k v_1 .. v_d" per share, decimal
//   gradients.bin  plaintext histories: per round, per participant, d f64
inline void save_history(const HistoryCache& h, const fs::path& dir) {
  fs::create_directories(dir);
  const std::size_t d = h.dimension;

  std::string models;
  models.reserve((h.size() + 1) * d * sizeof(double));
  for (const RoundRecord& r : h.rounds) {
    require(static_cast<std::size_t>(r.model.size()) == d, Errc::shape_error, "model size");
    detail::append_doubles(models, r.model.data(), d);
  }
  require(static_cast<std::size_t>(h.final_model.size()) == d, Errc::shape_error, "final model size");
  detail::append_doubles(models, h.final_model.data(), d);

  json payloads = json::object();
  payloads["models.bin"] = detail::payload_entry(models);
  detail::write_file(dir / "models.bin", models);

  if (h.protocol.secure) {
    std::ostringstream os;
    for (std::size_t t = 0; t < h.size(); ++t) {
      const auto& shares = h.rounds[t].shares;
      for (std::size_t a = 0; a < shares.size(); ++a)
        for (std::size_t b = 0; b < shares[a].size(); ++b) {
          os << t << ' ' << a << ' ' << b;
          for (const FieldElement& e : shares[a][b]) os << ' ' << e.value;
          os << '\n';
        }
    }
    const std::string text = os.str();
    payloads["shares.txt"] = detail::payload_entry(text);
    detail::write_file(dir / "shares.txt", text);
  } else {
    std::string grads;
    for (const RoundRecord& r : h.rounds)
      for (const Vector& g : r.gradients) detail::append_doubles(grads, g.data(), d);
    payloads["gradients.bin"] = detail::payload_entry(grads);
    detail::write_file(dir / "gradients.bin", grads);
  }

  json participants = json::array();
  json divisors = json::array();
  for (const RoundRecord& r : h.rounds) {
    participants.push_back(r.participants);
    divisors.push_back(r.divisor);
  }
  const PrimeFieldConfig& f = h.protocol.field;
  json manifest = {
      {"format", kHistoryFormat},
      {"version", kHistoryVersion},
      {"rounds", h.size()},
      {"clients", h.clients},
      {"dimension", d},
      {"learning_rate", h.learning_rate},
      {"aggregation", std::string(to_string(h.aggregation))},
      {"protocol",
       {{"secure", h.protocol.secure},
        {"modulus", std::to_string(f.modulus)},
        {"fractional_bits", f.fractional_bits},
        {"magnitude_bound", f.magnitude_bound},
        {"max_summands", f.max_summands},
        {"threshold", h.protocol.threshold},
        {"seed", std::to_string(h.protocol.seed)}}},
      {"participants", participants},
      {"divisors", divisors},
      {"payloads", payloads}};
  detail::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

// Recomputes model(t + 1) from round t's stored shares or gradients for a
// deterministic 5% sample of rounds (at least one).
inline void audit_history(const HistoryCache& h) {
  if (h.size() == 0) return;
  std::vector<std::size_t> order(h.size());
  for (std::size_t t = 0; t < order.size(); ++t) order[t] = t;
  Rng rng(derive_seed(h.protocol.seed, {stream::kAudit, h.size()}));
  rng.shuffle(order);
  const auto sample = static_cast<std::size_t>(std::ceil(0.05 * static_cast<double>(h.size())));
  for (std::size_t k = 0; k < std::max<std::size_t>(1, sample); ++k) {
    const std::size_t t = order[k];
    const RoundRecord& r = h.rounds[t];
    const Vector next =
        dlr::detail::apply_step(r.model, h.gradient_sum(t, r.participants), h.learning_rate, r.divisor);
    require(next == h.model(t + 1), Errc::corrupt_checkpoint,
            "round " + std::to_string(t) + " does not reproduce the next cached model");
  }
}

inline HistoryCache load_history(const fs::path& dir) {
  const json m = detail::read_manifest(dir, kHistoryFormat, kHistoryVersion);
  HistoryCache h = detail::guarded([&] {
    HistoryCache out;
    out.clients = m.at("clients").get<std::size_t>();
    out.dimension = m.at("dimension").get<std::size_t>();
    out.learning_rate = m.at("learning_rate").get<double>();
    out.aggregation = parse_aggregation(m.at("aggregation").get<std::string>());
    const json& p = m.at("protocol");
    out.protocol.secure = p.at("secure").get<bool>();
    out.protocol.field.modulus = std::stoull(p.at("modulus").get<std::string>());
    out.protocol.field.fractional_bits = p.at("fractional_bits").get<int>();
    out.protocol.field.magnitude_bound = p.at("magnitude_bound").get<double>();
    out.protocol.field.max_summands = p.at("max_summands").get<std::size_t>();
    out.protocol.threshold = p.at("threshold").get<std::size_t>();
    out.protocol.seed = std::stoull(p.at("seed").get<std::string>());
    const auto rounds = m.at("rounds").get<std::size_t>();
    const json& parts = m.at("participants");
    const json& divs = m.at("divisors");
    require(parts.size() == rounds && divs.size() == rounds, Errc::corrupt_checkpoint,
            "participant list does not cover every round");
    out.rounds.resize(rounds);
    for (std::size_t t = 0; t < rounds; ++t) {
      out.rounds[t].participants = parts[t].get<std::vector<std::size_t>>();
      out.rounds[t].divisor = divs[t].get<double>();
      for (std::size_t id : out.rounds[t].participants)
        require(id < out.clients, Errc::corrupt_checkpoint, "participant id out of range");
    }
    return out;
  });
  const std::size_t d = h.dimension;
  const auto dim = static_cast<Eigen::Index>(d);

  const std::string models = detail::load_payload(dir, m, "models.bin");
  detail::DoubleReader mr(models, "models.bin");
  for (RoundRecord& r : h.rounds) {
    r.model.resize(dim);
    mr.read(r.model.data(), d);
  }
  h.final_model.resize(dim);
  mr.read(h.final_model.data(), d);
  mr.finish();

  if (h.protocol.secure) {
    const PrimeField field(h.protocol.field.modulus);
    for (RoundRecord& r : h.rounds) {
      const std::size_t n = r.participants.size();
      r.shares.assign(n, std::vector<std::vector<FieldElement>>(n));
    }
    const std::string text = detail::load_payload(dir, m, "shares.txt");
    std::istringstream is(text);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(is, line)) {
      std::istringstream ls(line);
      std::size_t t = 0, a = 0, b = 0;
      require(static_cast<bool>(ls >> t >> a >> b) && t < h.size() &&
                  a < h.rounds[t].participants.size() && b < h.rounds[t].participants.size(),
              Errc::corrupt_checkpoint, "bad share header at line " + std::to_string(lines + 1));
      auto& slot = h.rounds[t].shares[a][b];
      require(slot.empty(), Errc::corrupt_checkpoint, "duplicate share line");
      slot.resize(d);
      for (auto& e : slot) {
        require(static_cast<bool>(ls >> e.value) && e.value < field.modulus(),
                Errc::corrupt_checkpoint, "bad field element at line " + std::to_string(lines + 1));
      }
      std::string extra;
      require(!(ls >> extra), Errc::corrupt_checkpoint, "trailing data on a share line");
      ++lines;
    }
    for (const RoundRecord& r : h.rounds)
      for (const auto& row : r.shares)
        for (const auto& s : row) require(s.size() == d, Errc::corrupt_checkpoint, "missing share");
  } else {
    const std::string grads = detail::load_payload(dir, m, "gradients.bin");
    detail::DoubleReader gr(grads, "gradients.bin");
    for (RoundRecord& r : h.rounds) {
      r.gradients.assign(r.participants.size(), Vector(dim));
      for (Vector& g : r.gradients) gr.read(g.data(), d);
    }
    gr.finish();
  }
  audit_history(h);
  return h;
}

// Shards: manifest.json + shards.bin (per shard: features row-major f64,
// then labels as f64).
inline void save_shards(const std::vector<DatasetShard>& shards, const fs::path& dir) {
  fs::create_directories(dir);
  std::string bytes;
  json meta = json::array();
  for (const DatasetShard& s : shards) {
    meta.push_back({{"owner", std::to_string(s.owner)},
                    {"rows", s.features.rows()},
                    {"features", s.features.cols()}});
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = s.features;
    detail::append_doubles(bytes, rm.data(), static_cast<std::size_t>(rm.size()));
    std::vector<double> labels(s.labels.begin(), s.labels.end());
    detail::append_doubles(bytes, labels.data(), labels.size());
  }
  json manifest = {{"format", kShardsFormat},
                   {"version", kShardsVersion},
                   {"shards", meta},
                   {"payloads", {{"shards.bin", detail::payload_entry(bytes)}}}};
  detail::write_file(dir / "shards.bin", bytes);
  detail::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

inline std::vector<DatasetShard> load_shards(const fs::path& dir) {
  const json m = detail::read_manifest(dir, kShardsFormat, kShardsVersion);
  const std::string bytes = detail::load_payload(dir, m, "shards.bin");
  detail::DoubleReader rd(bytes, "shards.bin");
  std::vector<DatasetShard> out;
  detail::guarded([&] {
    for (const json& e : m.at("shards")) {
      DatasetShard s;
      s.owner = static_cast<std::size_t>(std::stoull(e.at("owner").get<std::string>()));
      const auto rows = e.at("rows").get<Eigen::Index>();
      const auto cols = e.at("features").get<Eigen::Index>();
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
      rd.read(rm.data(), static_cast<std::size_t>(rm.size()));
      s.features = rm;
      std::vector<double> labels(static_cast<std::size_t>(rows));
      rd.read(labels.data(), labels.size());
      for (double y : labels) s.labels.push_back(static_cast<int>(y));
      out.push_back(std::move(s));
    }
    return 0;
  });
  rd.finish();
  return out;
}

}  // namespace dlr::io

#endif  // DLRECOVER_IO_CHECKPOINT_HPP_
