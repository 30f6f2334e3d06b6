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

#include "dlrecover/recovery.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "fixtures.hpp"

namespace dlr {
namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::unsupported;
}

struct Federation {
  SyntheticData data;
  LossSpec spec = testing::small_logistic(4);
  std::vector<Client> clients;
  HistoryCache history;

  Federation(bool secure, std::size_t rounds = 40, std::size_t threshold = 4, std::size_t n = 6)
      : data(testing::small_blobs(n, 40, 23)) {
    AttackSpec attack;
    attack.trigger = {{3}, {4.0}};
    attack.malicious = {0};
    TrainingConfig cfg;
    cfg.rounds = rounds;
    cfg.learning_rate = 1.0;
    cfg.protocol.secure = secure;
    cfg.protocol.threshold = threshold;
    cfg.protocol.seed = 31;
    auto out = run_training(cfg, data.clients, spec, &attack);
    data.clients = std::move(out.shards);
    clients = make_clients(data.clients, spec);
    history = std::move(out.training.history);
  }
};

RecoveryConfig schedule(std::size_t T, std::size_t tp, std::size_t tr, std::size_t tf,
                        std::vector<std::size_t> removed, RecoveryMode mode) {
  RecoveryConfig c;
  c.rounds = T;
  c.preparation = tp;
  c.periodic = tr;
  c.final_exact = tf;
  c.buffer_size = 3;
  c.learning_rate = 1.0;
  c.removed = std::move(removed);
  c.mode = mode;
  return c;
}

TEST(ScheduleTest, ExactRoundCountExamples) {
  EXPECT_EQ(exact_round_count(schedule(1000, 25, 30, 25, {}, RecoveryMode::secure)), 82u);
  EXPECT_EQ(exact_round_count(schedule(57, 5, 1, 9, {}, RecoveryMode::secure)), 57u);
  EXPECT_EQ(exact_round_count(schedule(40, 30, 7, 10, {}, RecoveryMode::secure)), 40u);
  EXPECT_EQ(exact_round_count(schedule(10, 0, 100, 0, {}, RecoveryMode::secure)), 1u);
}

TEST(ScheduleTest, FlagsMatchFormula) {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t T = 1 + rng.below(300);
    const std::size_t tp = rng.below(T + 1);
    const std::size_t tf = rng.below(T - tp + 1);
    const std::size_t tr = 1 + rng.below(40);
    const auto cfg = schedule(T, tp, tr, tf, {}, RecoveryMode::secure);
    std::size_t flags = 0;
    for (std::size_t t = 0; t < T; ++t) flags += is_exact_round(cfg, t) ? 1 : 0;
    EXPECT_EQ(flags, exact_round_count(cfg)) << T << " " << tp << " " << tr << " " << tf;
  }
}

TEST(RecoveryTest, IdentityPlaintextIsBitExact) {
  const Federation f(false);
  const auto cfg = schedule(40, 5, 4, 5, {}, RecoveryMode::plaintext_oracle);
  const auto out = recover(f.history, f.clients, cfg);
  ASSERT_EQ(out.trace.models.size(), 41u);
  for (std::size_t t = 0; t <= 40; ++t) EXPECT_TRUE(out.trace.models[t] == f.history.model(t)) << t;
  for (const auto& r : out.trace.rounds) {
    EXPECT_EQ(r.distance, 0.0);
    // v = 0 leaves no curvature information, so every approximate round
    // falls back to the stored gradient alone.
    EXPECT_EQ(r.fallbacks, r.exact ? 0u : 6u);
  }
}

TEST(RecoveryTest, IdentitySecureWithinQuantization) {
  const Federation f(true);
  const auto cfg = schedule(40, 5, 4, 5, {}, RecoveryMode::secure);
  const auto out = recover(f.history, f.clients, cfg);
  const double tol = 6 * FixedPointCodec{}.step();
  for (std::size_t t = 0; t <= 40; ++t)
    EXPECT_LE((out.trace.models[t] - f.history.model(t)).cwiseAbs().maxCoeff(), tol) << t;
}

TEST(RecoveryTest, BaselinesWithoutRemovalsReproduceTraining) {
  for (bool secure : {false, true}) {
    const Federation f(secure, 20);
    const auto cfg = schedule(20, 2, 3, 2, {}, secure ? RecoveryMode::secure
                                                      : RecoveryMode::plaintext_oracle);
    const auto replay = historical_replay_baseline(f.history, cfg);
    const auto retrain = retrain_baseline(f.history, f.clients, cfg);
    for (std::size_t t = 0; t <= 20; ++t) {
      EXPECT_TRUE(replay.trace.models[t] == f.history.model(t));
      EXPECT_TRUE(retrain.trace.models[t] == f.history.model(t));
    }
    EXPECT_EQ(replay.trace.gradient_evaluations(), 0u);
    EXPECT_EQ(retrain.trace.gradient_evaluations(), 20u * 6u);
  }
}

TEST(RecoveryTest, CostAccounting) {
  const Federation f(true);
  const auto cfg = schedule(40, 5, 4, 5, {0, 2}, RecoveryMode::secure);
  const auto rec = recover(f.history, f.clients, cfg);
  const auto ret = retrain_baseline(f.history, f.clients, cfg);
  EXPECT_EQ(rec.trace.exact_rounds(), exact_round_count(cfg));
  EXPECT_EQ(rec.trace.gradient_evaluations(), exact_round_count(cfg) * 4);
  EXPECT_EQ(ret.trace.gradient_evaluations(), 40u * 4u);
  EXPECT_EQ(rec.trace.remaining, 4u);
}

TEST(RecoveryTest, BufferDiscipline) {
  const Federation f(true);
  auto cfg = schedule(40, 5, 4, 5, {0}, RecoveryMode::secure);
  cfg.buffer_size = 2;
  const auto out = recover(f.history, f.clients, cfg);
  std::size_t prev = 0;
  for (const auto& r : out.trace.rounds) {
    const bool periodic = r.exact && r.round >= 5 && r.round + 5 < 40;
    if (periodic) {
      EXPECT_EQ(r.buffer_pairs, std::min<std::size_t>(prev + 1, 2));
    } else {
      EXPECT_EQ(r.buffer_pairs, prev) << "buffers changed outside a periodic round " << r.round;
    }
    EXPECT_LE(r.buffer_pairs, 2u);
    prev = r.buffer_pairs;
  }
}

TEST(RecoveryTest, SecureMatchesPlaintextWithCorrectionDisabled) {
  const Federation secure(true), plain(false);
  auto cfg = schedule(40, 5, 4, 5, {0}, RecoveryMode::secure);
  cfg.hvp.curvature_eps = 1e300;  // every HVP falls back
  const auto a = recover(secure.history, secure.clients, cfg);
  cfg.mode = RecoveryMode::plaintext_oracle;
  const auto b = recover(plain.history, plain.clients, cfg);
  for (std::size_t t = 0; t <= 40; ++t)
    EXPECT_LE((a.trace.models[t] - b.trace.models[t]).norm(), 1e-5) << t;
}

TEST(RecoveryTest, RoundKeyedMasksMakeSecureDirectionsMatchOracle) {
  const Federation f(true);
  auto cfg = schedule(40, 5, 4, 5, {0}, RecoveryMode::secure);
  const auto keyed = recover(f.history, f.clients, cfg);
  double worst = 0.0;
  for (const auto& r : keyed.trace.rounds) worst = std::max(worst, r.deviation);
  EXPECT_LE(worst, 1e-9);
  // Fresh masks leave mask noise in each per-client difference, so the
  // secure direction departs from the oracle or the model overflows the codec.
  cfg.masks = MaskPolicy::fresh;
  try {
    const auto fresh = recover(f.history, f.clients, cfg);
    double fresh_worst = 0.0;
    for (const auto& r : fresh.trace.rounds) fresh_worst = std::max(fresh_worst, r.deviation);
    EXPECT_GT(fresh_worst, 1.0);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::range_overflow);
  }
}

TEST(RecoveryTest, RecoveryTracksRetrain) {
  const Federation f(true);
  const auto cfg = schedule(40, 5, 4, 5, {0}, RecoveryMode::secure);
  const auto rec = recover(f.history, f.clients, cfg);
  const auto ret = retrain_baseline(f.history, f.clients, cfg);
  const auto rep = historical_replay_baseline(f.history, cfg);
  const double d_rec = (rec.model - ret.model).norm(), d_rep = (rep.model - ret.model).norm();
  EXPECT_LT(d_rec, 0.1 * d_rep);
}

TEST(RecoveryTest, ExactCurvatureOracleOnQuadraticsReproducesRetrain) {
  const auto qs = testing::random_quadratics(5, 6, 0.5, 2.0, 3);
  const auto clients = testing::quadratic_clients(qs);
  TrainingConfig tc;
  tc.rounds = 30;
  tc.learning_rate = 0.4;
  tc.protocol.secure = false;
  const auto trained = run_training(tc, clients, nullptr, 6);
  auto cfg = schedule(30, 2, 10, 2, {1}, RecoveryMode::plaintext_oracle);
  cfg.learning_rate = 0.4;
  cfg.curvature_oracle = [&](std::size_t, const Vector& v) {
    Vector hv = Vector::Zero(6);
    for (std::size_t i : {0u, 2u, 3u, 4u}) hv += qs[i].a * v;
    return hv;
  };
  const auto rec = recover(trained.history, clients, cfg);
  const auto ret = retrain_baseline(trained.history, clients, cfg);
  for (std::size_t t = 0; t <= 30; ++t)
    EXPECT_LE((rec.trace.models[t] - ret.trace.models[t]).norm(), 1e-10) << t;
  EXPECT_LE(rec.trace.max_residual(), 1e-10);
}

TEST(RecoveryTest, ParallelMatchesSerial) {
  const Federation f(true);
  auto cfg = schedule(40, 5, 4, 5, {0, 3}, RecoveryMode::secure);
  const auto a = recover(f.history, f.clients, cfg);
  cfg.parallel = true;
  const auto b = recover(f.history, f.clients, cfg);
  for (std::size_t t = 0; t <= 40; ++t) EXPECT_TRUE(a.trace.models[t] == b.trace.models[t]);
}

TEST(RecoveryTest, Errors) {
  const Federation f(true, 10);
  auto cfg = schedule(11, 1, 2, 1, {0}, RecoveryMode::secure);
  EXPECT_EQ(code_of([&] { recover(f.history, f.clients, cfg); }), Errc::history_gap);
  EXPECT_EQ(code_of([&] { historical_replay_baseline(f.history, cfg); }), Errc::history_gap);
  cfg = schedule(10, 1, 2, 1, {0, 1, 2}, RecoveryMode::secure);  // th = 4 > 3 remaining
  EXPECT_EQ(code_of([&] { recover(f.history, f.clients, cfg); }), Errc::invalid_config);
  cfg = schedule(10, 6, 2, 6, {0}, RecoveryMode::secure);
  EXPECT_EQ(code_of([&] { recover(f.history, f.clients, cfg); }), Errc::invalid_config);
  const Federation plain(false, 10);
  cfg = schedule(10, 1, 2, 1, {0}, RecoveryMode::secure);
  EXPECT_EQ(code_of([&] { recover(plain.history, plain.clients, cfg); }), Errc::invalid_config);
  cfg.mode = RecoveryMode::plaintext_oracle;
  const std::vector<Client> missing(f.clients.begin(), f.clients.begin() + 3);
  EXPECT_EQ(code_of([&] { recover(plain.history, missing, cfg); }), Errc::invalid_config);
}

RecoveryTrace synthetic_trace(const std::vector<double>& offsets, double residual) {
  RecoveryTrace t;
  t.remaining = 1;
  for (std::size_t k = 0; k < offsets.size(); ++k) {
    t.models.push_back(Vector::Constant(1, offsets[k]));
    if (k + 1 < offsets.size()) {
      RoundTrace r;
      r.round = k;
      r.residual = residual;
      t.rounds.push_back(r);
    }
  }
  return t;
}

TEST(RecoveryBoundTest, DegenerateCaseForcesEquality) {
  const auto ref = synthetic_trace({0, 0, 0, 0}, 0.0);
  const auto same = synthetic_trace({0, 0, 0, 0}, 0.0);
  const auto rep = bound_check(same, ref, 0.5, 1.0);
  EXPECT_TRUE(rep.holds);
  EXPECT_EQ(rep.min_margin, 0.0);
  const auto drift = synthetic_trace({0, 1e-6, 0, 0}, 0.0);
  EXPECT_FALSE(bound_check(drift, ref, 0.5, 1.0).holds);
}

TEST(RecoveryBoundTest, BoundArithmetic) {
  // gamma mu = 0.75, c = 0.5, Z = 0.2: bound_t = 0.5^t d0 + 0.2 (1 - 0.5^t) / 0.5.
  const auto ref = synthetic_trace({0, 0, 0}, 0.0);
  const auto rec = synthetic_trace({1.0, 0.7, 0.55}, 0.2);
  const auto rep = bound_check(rec, ref, 0.75, 1.0);
  ASSERT_EQ(rep.bounds.size(), 3u);
  EXPECT_DOUBLE_EQ(rep.contraction, 0.5);
  EXPECT_DOUBLE_EQ(rep.z, 0.2);
  EXPECT_DOUBLE_EQ(rep.bounds[1], 0.5 + 0.2);
  EXPECT_DOUBLE_EQ(rep.bounds[2], 0.25 + 0.3);
  EXPECT_TRUE(rep.holds);
  EXPECT_NEAR(rep.min_margin, 0.0, 1e-15);
  EXPECT_NEAR(rep.max_step_ratio, 0.55 / 0.7, 1e-15);
  const auto over = synthetic_trace({1.0, 0.7, 0.56}, 0.2);
  EXPECT_FALSE(bound_check(over, ref, 0.75, 1.0).holds);
}

TEST(RecoveryBoundTest, Preconditions) {
  const auto t = synthetic_trace({0, 0}, 0.0);
  EXPECT_EQ(code_of([&] { bound_check(t, t, 1.0, 1.0); }), Errc::precondition_failed);
  EXPECT_EQ(code_of([&] { bound_check(t, t, 0.0, 1.0); }), Errc::precondition_failed);
  EXPECT_EQ(code_of([&] { bound_check(t, t, 2.0, 0.6); }), Errc::precondition_failed);
}

TEST(CurvatureTest, QuadraticRange) {
  Matrix h = Matrix::Zero(2, 2);
  h.diagonal() << 0.5, 3.0;
  const auto r = curvature_range({Vector::Zero(2), Vector::Ones(2)}, [&](const Vector&) { return h; });
  EXPECT_DOUBLE_EQ(r.mu, 0.5);
  EXPECT_DOUBLE_EQ(r.smoothness, 3.0);
}

}  // namespace
}  // namespace dlr
