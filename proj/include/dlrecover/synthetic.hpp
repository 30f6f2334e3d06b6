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

#ifndef DLRECOVER_SYNTHETIC_HPP_
#define DLRECOVER_SYNTHETIC_HPP_

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dlrecover/error.hpp"
#include "dlrecover/model.hpp"
#include "dlrecover/rng.hpp"

namespace dlr {

// Isotropic Gaussian blobs, one mean per class.
struct BlobSpec {
  std::vector<Vector> means;
  double stddev = 1.0;
  std::size_t clients = 1;
  std::size_t rows_per_client = 1;
  std::size_t test_rows = 0;

  std::size_t features() const { return means.empty() ? 0 : static_cast<std::size_t>(means[0].size()); }
  std::size_t classes() const { return means.size(); }
};

// Two classes at +-separation on the first `informative` coordinates; the
// remaining coordinates are pure noise.
inline std::vector<Vector> two_blob_means(std::size_t features, std::size_t informative,
                                          double separation) {
  require(informative <= features, Errc::invalid_config, "informative > features");
  Vector m0 = Vector::Zero(static_cast<Eigen::Index>(features));
  Vector m1 = Vector::Zero(static_cast<Eigen::Index>(features));
  for (std::size_t j = 0; j < informative; ++j) {
    m0[static_cast<Eigen::Index>(j)] = -separation;
    m1[static_cast<Eigen::Index>(j)] = separation;
  }
  return {m0, m1};
}

// K classes: class c sits at +separation on the informative coordinates
// j with j % K == c; two classes use the symmetric layout above.
inline std::vector<Vector> blob_means(std::size_t features, std::size_t classes,
                                      std::size_t informative, double separation) {
  require(classes >= 2, Errc::invalid_config, "need at least two classes");
  if (classes == 2) return two_blob_means(features, informative, separation);
  require(informative <= features, Errc::invalid_config, "informative > features");
  require(informative >= classes, Errc::invalid_config, "need an informative coordinate per class");
  std::vector<Vector> means(classes, Vector::Zero(static_cast<Eigen::Index>(features)));
  for (std::size_t j = 0; j < informative; ++j)
    means[j % classes][static_cast<Eigen::Index>(j)] = separation;
  return means;
}

struct SyntheticData {
  std::vector<DatasetShard> clients;
  DatasetShard test;
};

namespace detail {

inline DatasetShard sample_blobs(const BlobSpec& spec, std::size_t rows, std::size_t owner,
                                 Rng& rng) {
  const std::size_t k = spec.classes();
  std::vector<int> labels(rows);
  for (std::size_t r = 0; r < rows; ++r) labels[r] = static_cast<int>(r % k);
  rng.shuffle(labels);
  DatasetShard shard{Matrix(rows, spec.features()), labels, owner};
  for (std::size_t r = 0; r < rows; ++r) {
    const Vector& mean = spec.means[static_cast<std::size_t>(labels[r])];
    for (Eigen::Index j = 0; j < mean.size(); ++j)
      shard.features(static_cast<Eigen::Index>(r), j) = mean[j] + spec.stddev * rng.normal();
  }
  return shard;
}

}  // namespace detail

// Deterministic in `seed`; per-client label counts differ by at most one.
inline SyntheticData make_synthetic(const BlobSpec& spec, std::uint64_t seed) {
  require(spec.classes() >= 2, Errc::invalid_config, "need at least two class means");
  for (const auto& m : spec.means)
    require(m.size() == spec.means[0].size(), Errc::invalid_config, "class means differ in size");
  require(spec.features() >= 1, Errc::invalid_config, "zero features");
  require(spec.clients >= 1 && spec.rows_per_client >= 1, Errc::invalid_config,
          "need at least one client and one row per client");
  require(spec.stddev >= 0.0, Errc::invalid_config, "stddev must be >= 0");

  SyntheticData out;
  out.clients.reserve(spec.clients);
  for (std::size_t i = 0; i < spec.clients; ++i) {
    Rng rng(derive_seed(seed, {stream::kData, i}));
    out.clients.push_back(detail::sample_blobs(spec, spec.rows_per_client, i, rng));
  }
  if (spec.test_rows > 0) {
    Rng rng(derive_seed(seed, {stream::kData, UINT64_MAX}));
    out.test = detail::sample_blobs(spec, spec.test_rows, SIZE_MAX, rng);
  }
  return out;
}

}  // namespace dlr

#endif  // DLRECOVER_SYNTHETIC_HPP_
