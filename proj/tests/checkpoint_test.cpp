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

#include "dlrecover/io/checkpoint.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "fixtures.hpp"
#include "dlrecover/training.hpp"

namespace dlr::io {
namespace {

namespace fs = std::filesystem;

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::unsupported;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dlrecover_checkpoint_" + name);
  fs::remove_all(p);
  return p;
}

HistoryCache trained(bool secure, std::size_t rounds = 25) {
  auto data = testing::small_blobs(5, 20, 41);
  TrainingConfig cfg;
  cfg.rounds = rounds;
  cfg.learning_rate = 0.7;
  cfg.protocol.secure = secure;
  cfg.protocol.threshold = 3;
  cfg.protocol.seed = 0xfedcba9876543210ULL;  // above 2^53: must survive as a decimal string
  return run_training(cfg, data.clients, testing::small_logistic(4)).training.history;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary | std::ios::trunc) << s;
}

TEST(CheckpointTest, SecureRoundTripIsExact) {
  const auto h = trained(true);
  const auto dir = scratch("secure");
  save_history(h, dir);
  const auto back = load_history(dir);
  EXPECT_TRUE(back == h);
  EXPECT_EQ(back.protocol.seed, 0xfedcba9876543210ULL);
  const auto again = scratch("secure_again");
  save_history(back, again);
  for (const char* f : {"manifest.json", "models.bin", "shares.txt"})
    EXPECT_TRUE(slurp(dir / f) == slurp(again / f)) << f;
}

TEST(CheckpointTest, PlaintextRoundTripIsExact) {
  const auto h = trained(false);
  const auto dir = scratch("plain");
  save_history(h, dir);
  EXPECT_TRUE(fs::exists(dir / "gradients.bin"));
  EXPECT_FALSE(fs::exists(dir / "shares.txt"));
  EXPECT_TRUE(load_history(dir) == h);
}

TEST(CheckpointTest, MissingDirectory) {
  EXPECT_EQ(code_of([] { load_history(scratch("absent")); }), Errc::missing_checkpoint);
  EXPECT_EQ(code_of([] { load_shards(scratch("absent_shards")); }), Errc::missing_checkpoint);
}

TEST(CheckpointTest, TruncatedPayloadRejected) {
  const auto dir = scratch("truncated");
  save_history(trained(false), dir);
  const auto bytes = slurp(dir / "models.bin");
  spit(dir / "models.bin", bytes.substr(0, bytes.size() - 8));
  EXPECT_EQ(code_of([&] { load_history(dir); }), Errc::corrupt_checkpoint);
}

TEST(CheckpointTest, FlippedBitRejected) {
  for (const char* payload : {"models.bin", "shares.txt"}) {
    const auto dir = scratch(std::string("flip_") + payload);
    save_history(trained(true), dir);
    auto bytes = slurp(dir / payload);
    bytes[bytes.size() / 2] ^= 0x01;
    spit(dir / payload, bytes);
    EXPECT_EQ(code_of([&] { load_history(dir); }), Errc::corrupt_checkpoint) << payload;
  }
}

TEST(CheckpointTest, MalformedManifestRejected) {
  const auto dir = scratch("manifest");
  save_history(trained(false), dir);
  spit(dir / "manifest.json", "{ not json");
  EXPECT_EQ(code_of([&] { load_history(dir); }), Errc::corrupt_checkpoint);
}

TEST(CheckpointTest, VersionSkewRejected) {
  const auto dir = scratch("version");
  save_history(trained(false), dir);
  auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  m["version"] = kHistoryVersion + 1;
  spit(dir / "manifest.json", m.dump());
  EXPECT_EQ(code_of([&] { load_history(dir); }), Errc::unsupported_version);
  m["version"] = kHistoryVersion;
  m["format"] = "something-else";
  spit(dir / "manifest.json", m.dump());
  EXPECT_EQ(code_of([&] { load_history(dir); }), Errc::corrupt_checkpoint);
}

TEST(CheckpointTest, AuditCatchesManifestTamper) {
  // Payload checksums stay valid; only the replayed update exposes the edit.
  const auto dir = scratch("tamper");
  save_history(trained(false, 20), dir);
  auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  m["learning_rate"] = 0.7000001;
  spit(dir / "manifest.json", m.dump());
  EXPECT_EQ(code_of([&] { load_history(dir); }), Errc::corrupt_checkpoint);
}

TEST(CheckpointTest, AuditSamplesAtLeastOneRound) {
  auto h = trained(false, 3);
  EXPECT_NO_THROW(audit_history(h));
  for (auto& r : h.rounds) r.divisor += 1.0;
  EXPECT_EQ(code_of([&] { audit_history(h); }), Errc::corrupt_checkpoint);
}

TEST(CheckpointTest, ShardsRoundTrip) {
  const auto data = testing::small_blobs(3, 7, 5);
  const auto dir = scratch("shards");
  save_shards(data.clients, dir);
  const auto back = load_shards(dir);
  ASSERT_EQ(back.size(), data.clients.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_TRUE(back[i].features == data.clients[i].features);
    EXPECT_EQ(back[i].labels, data.clients[i].labels);
    EXPECT_EQ(back[i].owner, data.clients[i].owner);
  }
  auto bytes = slurp(dir / "shards.bin");
  bytes.push_back('\0');
  spit(dir / "shards.bin", bytes);
  EXPECT_EQ(code_of([&] { load_shards(dir); }), Errc::corrupt_checkpoint);
}

}  // namespace
}  // namespace dlr::io
