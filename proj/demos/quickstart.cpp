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

// Trains a small secure decentralized model with two backdoor clients,
// removes them with the recovery procedure and compares against a full
// retrain of the remaining clients.

#include <cstdio>

#include "dlrecover.hpp"

int main() {
  using namespace dlr;

  const BlobSpec blobs{two_blob_means(20, 10, 0.6), 1.0, 10, 100, 2000};
  const SyntheticData data = make_synthetic(blobs, 7);
  const LossSpec model{ModelFamily::logistic_regression_l2, 0.01, 20};

  AttackSpec attack;
  attack.trigger = {{15, 16, 17, 18, 19}, {3.0}};
  attack.target_label = 0;
  attack.malicious = {0, 1};

  TrainingConfig training;
  training.rounds = 200;
  training.learning_rate = 0.8;
  training.protocol.threshold = 8;
  training.protocol.seed = 7;
  const auto trained = run_training(training, data.clients, model, &attack);
  const auto clients = make_clients(trained.shards, model);

  RecoveryConfig cfg;
  cfg.rounds = 200;
  cfg.preparation = cfg.periodic = cfg.final_exact = 10;
  cfg.buffer_size = 4;
  cfg.learning_rate = training.learning_rate;
  cfg.removed = attack.malicious;

  const auto recovered = recover(trained.training.history, clients, cfg);
  const auto retrained = retrain_baseline(trained.training.history, clients, cfg);

  auto show = [&](const char* name, const Vector& w, std::size_t evals) {
    std::printf("%-9s accuracy %.4f  attack success %.4f  gradient evaluations %zu\n", name,
                accuracy(w, data.test, model), attack_success_rate(w, data.test, attack, model),
                evals);
  };
  show("poisoned", trained.training.final_model, training.rounds * blobs.clients);
  show("recovered", recovered.model, recovered.trace.gradient_evaluations());
  show("retrained", retrained.model, retrained.trace.gradient_evaluations());
  std::printf("exact rounds %zu of %zu\n", recovered.trace.exact_rounds(), cfg.rounds);
  return 0;
}
