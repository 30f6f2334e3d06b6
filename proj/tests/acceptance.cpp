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

// Acceptance runner: one PASS/FAIL line per criterion; exits nonzero if any
// criterion fails.

#include <boost/math/distributions/chi_squared.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "dlrecover/harness/experiment.hpp"
#include "dlrecover/io/checkpoint.hpp"
#include "fixtures.hpp"

namespace dlr {
namespace {

namespace fs = std::filesystem;
using harness::ExperimentConfig;

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Detail {
 public:
  template <class T>
  Detail& operator()(const std::string& key, const T& value) {
    if (!first_) os_ << ", ";
    first_ = false;
    os_ << key << "=" << value;
    return *this;
  }
  std::string str() const { return os_.str(); }

 private:
  std::ostringstream os_;
  bool first_ = true;
};

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

// Benchmark artefacts shared by criteria 5 to 8.
struct Benchmark {
  ExperimentConfig cfg;
  harness::TrainedExperiment trained;
  RecoveryResult recovered, retrained, replayed;
};

const Benchmark& benchmark() {
  static const Benchmark b = [] {
    Benchmark out;
    out.cfg = testing::load_config("benchmark.json");
    out.trained = harness::train_experiment(out.cfg);
    out.recovered = harness::run_phase("recover", out.cfg, out.trained.history, out.trained.shards);
    out.retrained = harness::run_phase("retrain", out.cfg, out.trained.history, out.trained.shards);
    out.replayed = harness::run_phase("replay", out.cfg, out.trained.history, out.trained.shards);
    return out;
  }();
  return b;
}

Outcome sharing_correctness() {
  Rng rng(1001);
  const FieldDomain domain{FixedPointCodec{}};
  std::size_t failures = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 1 + rng.below(256);
    const std::size_t n = 1 + rng.below(16);
    const std::size_t th = 1 + rng.below(n);
    const SharingPolicy<FieldDomain> policy{th, default_eval_points(n), domain};
    std::vector<double> a(d), b(d);
    for (std::size_t c = 0; c < d; ++c) {
      a[c] = rng.uniform(-100.0, 100.0);
      b[c] = rng.uniform(-100.0, 100.0);
    }
    const auto sa = share_vector<FieldDomain>(a, policy, rng.next());
    const auto sb = share_vector<FieldDomain>(b, policy, rng.next());

    // Any th-subset interpolates to the encoded secret exactly.
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<FieldShare> subset_a, sums;
    for (std::size_t k = 0; k < th; ++k) subset_a.push_back(sa.shares[order[k]]);
    for (std::size_t i = 0; i < n; ++i) {
      const std::vector<FieldShare> pair = {sa.shares[i], sb.shares[i]};
      sums.push_back(aggregate_shares<FieldElement, FieldDomain>(pair, domain));
    }
    const auto ra = interpolate_at_zero<FieldElement, FieldDomain>(subset_a, domain);
    const auto rsum = interpolate_at_zero<FieldElement, FieldDomain>(sums, domain);
    const auto decoded = reconstruct_at_zero<FieldDomain>(sa.shares, policy);
    for (std::size_t c = 0; c < d; ++c) {
      const FieldElement ea = domain.encode(a[c]), eb = domain.encode(b[c]);
      bool ok = ra[c] == ea && rsum[c] == domain.add(ea, eb) &&
                decoded[static_cast<Eigen::Index>(c)] == domain.decode(ea);
      if (!ok) ++failures;
    }
  }
  return {failures == 0, Detail()("secrets", 1000)("mismatched_coordinates", failures).str()};
}

Outcome privacy_marginal() {
  PrimeFieldConfig fc;
  fc.modulus = 97;
  fc.fractional_bits = 0;
  fc.magnitude_bound = 40;
  fc.max_summands = 1;
  const std::size_t n = 5, dealings = 50000, q = 97;
  const SharingPolicy<FieldDomain> policy{3, default_eval_points(n), FieldDomain(FixedPointCodec(fc))};
  const std::vector<double> secret = {17.0};
  std::vector<std::vector<std::uint64_t>> y(n, std::vector<std::uint64_t>(dealings));
  for (std::size_t k = 0; k < dealings; ++k) {
    const auto dealt = share_vector<FieldDomain>(secret, policy, derive_seed(97, {k}));
    for (std::size_t i = 0; i < n; ++i) y[i][k] = dealt.shares[i].y[0].value;
  }
  const boost::math::chi_squared dist(static_cast<double>(q * q - 1));
  const double expected = static_cast<double>(dealings) / static_cast<double>(q * q);
  double worst_p = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      std::vector<double> counts(q * q, 0.0);
      for (std::size_t k = 0; k < dealings; ++k) counts[y[i][k] * q + y[j][k]] += 1.0;
      double stat = 0.0;
      for (double c : counts) stat += (c - expected) * (c - expected) / expected;
      worst_p = std::min(worst_p, boost::math::cdf(boost::math::complement(dist, stat)));
    }
  }
  return {worst_p > 0.01, Detail()("pairs", n * (n - 1) / 2)("dealings", dealings)("min_p", num(worst_p)).str()};
}

Outcome lbfgs_oracle() {
  constexpr Eigen::Index d = 16;
  constexpr std::size_t s = 16;
  Rng rng(3003);
  const Matrix h = testing::random_spd(d, 1.0, 10.0, rng);
  double dense_err = 0.0, true_err = 0.0, secant_err = 0.0, sym_err = 0.0;

  DifferenceBuffers random_buf(s);
  std::vector<Vector> dw, dg;
  for (std::size_t k = 0; k < s; ++k) {
    const Vector w = testing::random_vector(d, rng);
    dw.push_back(w);
    dg.push_back(h * w);
    random_buf.push_pair(w, h * w);
  }
  const Matrix b = testing::dense_bfgs(dw, dg);
  for (int i = 0; i < 20; ++i) {
    const Vector v = testing::random_vector(d, rng);
    dense_err = std::max(dense_err, (hvp(random_buf, v) - b * v).norm() / (b * v).norm());
    const Vector u = testing::random_vector(d, rng);
    const double x = u.dot(hvp(random_buf, v)), y = v.dot(hvp(random_buf, u));
    sym_err = std::max(sym_err, std::fabs(x - y) / std::max(std::fabs(x), 1.0));
  }
  secant_err = (hvp(random_buf, dw.back()) - dg.back()).norm() / dg.back().norm();

  DifferenceBuffers conj_buf(s);
  const auto dirs = testing::h_conjugate(h, s, rng);
  for (const Vector& w : dirs) conj_buf.push_pair(w, h * w);
  for (int i = 0; i < 20; ++i) {
    Vector v = Vector::Zero(d);
    for (const Vector& w : dirs) v += rng.normal() * w;
    true_err = std::max(true_err, (hvp(conj_buf, v) - h * v).norm() / (h * v).norm());
  }
  const bool ok = dense_err <= 1e-6 && true_err <= 1e-6 && secant_err <= 1e-8 && sym_err <= 1e-10;
  return {ok, Detail()("dense_rel", num(dense_err))("true_hv_rel", num(true_err))(
                  "secant_rel", num(secant_err))("symmetry", num(sym_err))
                  .str()};
}

Outcome identity_recovery() {
  ExperimentConfig cfg = testing::load_config("benchmark.json");
  cfg.recovery.removed.clear();
  double plain_max = 0.0, secure_max = 0.0;
  for (bool secure : {false, true}) {
    cfg.training.protocol.secure = secure;
    cfg.recovery.mode = secure ? RecoveryMode::secure : RecoveryMode::plaintext_oracle;
    const auto trained = harness::train_experiment(cfg);
    const auto rec = harness::run_phase("recover", cfg, trained.history, trained.shards);
    double& worst = secure ? secure_max : plain_max;
    for (std::size_t t = 0; t <= cfg.recovery.rounds; ++t) {
      const double diff = (rec.trace.models[t] - trained.history.model(t)).cwiseAbs().maxCoeff();
      worst = std::max(worst, diff);
    }
  }
  const double tol = static_cast<double>(cfg.clients()) * FixedPointCodec(cfg.training.protocol.field).step();
  return {plain_max == 0.0 && secure_max <= tol,
          Detail()("plaintext_max_abs", num(plain_max))("secure_max_abs", num(secure_max))(
              "tolerance", num(tol))
              .str()};
}

Outcome end_to_end() {
  const Benchmark& b = benchmark();
  const auto& test = b.trained.test;
  const auto poisoned = harness::evaluate(b.trained.history.final_model, test, b.cfg);
  const auto rec = harness::evaluate(b.recovered.model, test, b.cfg);
  const auto ret = harness::evaluate(b.retrained.model, test, b.cfg);
  const auto rep = harness::evaluate(b.replayed.model, test, b.cfg);
  const bool a = poisoned.attack_success >= 0.8;
  const bool bb = std::fabs(rec.accuracy - ret.accuracy) <= 0.02 && rec.attack_success <= 0.05;
  const bool c = rep.accuracy < rec.accuracy;
  return {a && bb && c, Detail()("poisoned_asr", num(poisoned.attack_success))(
                            "recover_acc", num(rec.accuracy))("retrain_acc", num(ret.accuracy))(
                            "recover_asr", num(rec.attack_success))("replay_acc", num(rep.accuracy))
                            .str()};
}

Outcome cost_accounting() {
  Rng rng(6006);
  const auto qs = testing::random_quadratics(4, 3, 0.5, 2.0, 66);
  const auto clients = testing::quadratic_clients(qs);
  TrainingConfig tc;
  tc.rounds = 120;
  tc.learning_rate = 0.3;
  tc.protocol.secure = false;
  const auto trained = run_training(tc, clients, nullptr, 3);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 50; ++trial) {
    RecoveryConfig rc;
    rc.rounds = 1 + rng.below(120);
    rc.preparation = rng.below(rc.rounds + 1);
    rc.final_exact = rng.below(rc.rounds - rc.preparation + 1);
    rc.periodic = 1 + rng.below(40);
    rc.learning_rate = 0.3;
    rc.removed = {1};
    rc.mode = RecoveryMode::plaintext_oracle;
    const auto out = recover(trained.history, clients, rc);
    std::size_t flags = 0;
    for (const auto& r : out.trace.rounds) flags += r.exact ? 1 : 0;
    if (flags != exact_round_count(rc) || out.trace.gradient_evaluations() != 3 * flags) ++mismatches;
  }

  const ExperimentConfig long_run = testing::load_config("long_schedule.json");
  const std::size_t long_count = exact_round_count(long_run.recovery);
  const auto& b = benchmark();
  const double ratio = static_cast<double>(b.recovered.trace.gradient_evaluations()) /
                       static_cast<double>(b.retrained.trace.gradient_evaluations());
  const double long_ratio = static_cast<double>(long_count) / static_cast<double>(long_run.recovery.rounds);
  return {mismatches == 0 && long_count == 82 && ratio <= 0.15,
          Detail()("schedule_mismatches", mismatches)("long_schedule_exact_rounds", long_count)(
              "benchmark_eval_ratio", num(ratio))("long_schedule_eval_ratio", num(long_ratio))
              .str()};
}

Outcome bound_checks() {
  const Benchmark& b = benchmark();
  std::vector<Vector> along = b.recovered.trace.models;
  along.insert(along.end(), b.retrained.trace.models.begin(), b.retrained.trace.models.end());
  const auto curv = harness::measure_curvature(b.cfg, b.trained.shards, along);
  if (!curv) return {false, "curvature not measurable"};
  const auto report =
      bound_check(b.recovered.trace, b.retrained.trace, curv->mu, b.cfg.recovery.learning_rate);

  // Quadratic with an exact curvature oracle: the only gap to retrain is the
  // starting offset, which must contract by at most sqrt(1 - gamma mu).
  const std::size_t n = 5;
  const Eigen::Index d = 6;
  const double gamma = 0.4;
  const auto qs = testing::random_quadratics(n, d, 0.5, 2.0, 77);
  const auto clients = testing::quadratic_clients(qs);
  TrainingConfig tc;
  tc.rounds = 60;
  tc.learning_rate = gamma;
  tc.protocol.secure = false;
  const auto trained = run_training(tc, clients, nullptr, static_cast<std::size_t>(d));
  Matrix hsum = Matrix::Zero(d, d);
  for (std::size_t i = 1; i < n; ++i) hsum += qs[i].a;
  const double mu = Eigen::SelfAdjointEigenSolver<Matrix>(hsum / (n - 1)).eigenvalues().minCoeff();
  RecoveryConfig rc;
  rc.rounds = 60;
  rc.preparation = 2;
  rc.periodic = 15;
  rc.final_exact = 2;
  rc.learning_rate = gamma;
  rc.removed = {0};
  rc.mode = RecoveryMode::plaintext_oracle;
  Rng rng(78);
  rc.initial_model = Vector(trained.history.model(0) + testing::random_vector(d, rng));
  rc.curvature_oracle = [&](std::size_t, const Vector& v) { return Vector(hsum * v); };
  const auto rec = recover(trained.history, clients, rc);
  rc.initial_model.reset();
  const auto ret = retrain_baseline(trained.history, clients, rc);
  const auto quad = bound_check(rec.trace, ret.trace, mu, gamma);
  const double c = std::sqrt(1.0 - gamma * mu);

  const bool ok = report.holds && quad.holds && quad.max_step_ratio <= c + 1e-6;
  return {ok, Detail()("benchmark_mu", num(curv->mu))("benchmark_Z", num(report.z))(
                  "benchmark_min_margin", num(report.min_margin))(
                  "quadratic_step_ratio", num(quad.max_step_ratio))("sqrt_1_minus_gamma_mu", num(c))
                  .str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary | std::ios::trunc) << s;
}

Errc load_error(const fs::path& dir) {
  try {
    io::load_history(dir);
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::unsupported;
}

Outcome persistence() {
  const HistoryCache& h = benchmark().trained.history;
  const fs::path root = fs::temp_directory_path() / "dlrecover_acceptance_checkpoint";
  fs::remove_all(root);
  io::save_history(h, root / "ok");
  const bool round_trip = io::load_history(root / "ok") == h;

  std::size_t rejected = 0, cases = 0;
  auto corrupt = [&](const std::string& name, const std::string& file,
                     const std::function<void(std::string&)>& edit, Errc want) {
    const fs::path dir = root / name;
    fs::copy(root / "ok", dir);
    std::string bytes = slurp(dir / file);
    edit(bytes);
    spit(dir / file, bytes);
    ++cases;
    if (load_error(dir) == want) ++rejected;
  };
  corrupt("flip_models", "models.bin", [](std::string& s) { s[s.size() / 3] ^= 0x10; },
          Errc::corrupt_checkpoint);
  corrupt("flip_shares", "shares.txt", [](std::string& s) { s[s.size() / 2] ^= 0x01; },
          Errc::corrupt_checkpoint);
  corrupt("truncate", "models.bin", [](std::string& s) { s.resize(s.size() - 8); },
          Errc::corrupt_checkpoint);
  corrupt("version", "manifest.json",
          [](std::string& s) {
            auto m = nlohmann::json::parse(s);
            m["version"] = io::kHistoryVersion + 1;
            s = m.dump();
          },
          Errc::unsupported_version);
  fs::remove_all(root);
  return {round_trip && rejected == cases,
          Detail()("lossless", round_trip ? "yes" : "no")("corruptions_rejected",
                                                           std::to_string(rejected) + "/" +
                                                               std::to_string(cases))
              .str()};
}

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;
  std::function<Outcome()> run;
};

}  // namespace
}  // namespace dlr

int main() {
  using namespace dlr;
  // Criterion 6's limit covers the schedule checks only; the shared benchmark
  // is built before it is timed.
  const std::vector<Criterion> criteria = {
      {1, "sharing correctness and linearity", 10, sharing_correctness},
      {2, "privacy marginal (chi-square)", 30, privacy_marginal},
      {3, "compact L-BFGS oracle equivalence", 5, lbfgs_oracle},
      {4, "identity recovery", 60, identity_recovery},
      {5, "end-to-end benchmark", 300, end_to_end},
      {6, "cost accounting", 5, cost_accounting},
      {7, "contraction bound and quadratic contraction", 120, bound_checks},
      {8, "checkpoint persistence", 10, persistence},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    if (c.id == 6) benchmark();
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.limit_seconds;
    const bool pass = out.pass && in_time;
    failed += pass ? 0 : 1;
    std::printf("%s criterion %d: %s (%s) [%.2f s, limit %.0f s%s]\n", pass ? "PASS" : "FAIL", c.id,
                c.name, out.detail.c_str(), secs, c.limit_seconds, in_time ? "" : ", exceeded");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
