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

#ifndef DLRECOVER_TESTS_FIXTURES_HPP_
#define DLRECOVER_TESTS_FIXTURES_HPP_

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "dlrecover.hpp"
#include "dlrecover/harness/config.hpp"

namespace dlr::testing {

inline std::filesystem::path source_path(const std::string& rel) {
  return std::filesystem::path(DLRECOVER_SOURCE_DIR) / rel;
}

inline harness::ExperimentConfig load_config(const std::string& name) {
  return harness::ExperimentConfig::load(source_path("configs/" + name));
}

// Random SPD matrix with eigenvalues in [lo, hi].
inline Matrix random_spd(Eigen::Index d, double lo, double hi, Rng& rng) {
  Matrix a(d, d);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  const Matrix q = Eigen::HouseholderQR<Matrix>(a).householderQ();
  Vector ev(d);
  for (Eigen::Index i = 0; i < d; ++i)
    ev[i] = d == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(d - 1);
  return q * ev.asDiagonal() * q.transpose();
}

inline Vector random_vector(Eigen::Index d, Rng& rng, double scale = 1.0) {
  Vector v(d);
  for (Eigen::Index i = 0; i < d; ++i) v[i] = scale * rng.normal();
  return v;
}

// Client i minimizes 0.5 w'A_i w - b_i'w.
struct Quadratic {
  Matrix a;
  Vector b;
};

inline std::vector<Quadratic> random_quadratics(std::size_t n, Eigen::Index d, double lo, double hi,
                                                std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Quadratic> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({random_spd(d, lo, hi, rng), random_vector(d, rng)});
  return out;
}

inline std::vector<Client> quadratic_clients(const std::vector<Quadratic>& qs) {
  std::vector<Client> out;
  for (std::size_t i = 0; i < qs.size(); ++i) {
    const Quadratic q = qs[i];
    out.push_back({i, [q](const Vector& w) { return Vector(q.a * w - q.b); }, 1.0});
  }
  return out;
}

inline LossSpec small_logistic(std::size_t features = 4) {
  return {ModelFamily::logistic_regression_l2, 0.01, features};
}

inline SyntheticData small_blobs(std::size_t clients, std::size_t rows, std::uint64_t seed,
                                 std::size_t features = 4) {
  return make_synthetic({two_blob_means(features, features / 2, 1.0), 1.0, clients, rows, 200}, seed);
}

// Dense BFGS from B_0 = rho I with rho taken from the newest pair, applying
// the pairs oldest first. Independent of the compact representation.
inline Matrix dense_bfgs(const std::vector<Vector>& dw, const std::vector<Vector>& dg) {
  const Vector& s_new = dw.back();
  const double rho = s_new.dot(dg.back()) / s_new.squaredNorm();
  Matrix b = rho * Matrix::Identity(s_new.size(), s_new.size());
  for (std::size_t k = 0; k < dw.size(); ++k) {
    const Vector bs = b * dw[k];
    b += -bs * bs.transpose() / dw[k].dot(bs) + dg[k] * dg[k].transpose() / dg[k].dot(dw[k]);
  }
  return b;
}

// `count` mutually H-conjugate directions (modified Gram-Schmidt in the H
// inner product, applied twice).
inline std::vector<Vector> h_conjugate(const Matrix& h, std::size_t count, Rng& rng) {
  std::vector<Vector> out;
  for (std::size_t k = 0; k < count; ++k) {
    Vector p = random_vector(h.rows(), rng);
    for (int pass = 0; pass < 2; ++pass)
      for (const Vector& q : out) p -= (q.dot(h * p) / q.dot(h * q)) * q;
    out.push_back(p / p.norm());
  }
  return out;
}

}  // namespace dlr::testing

#endif  // DLRECOVER_TESTS_FIXTURES_HPP_
