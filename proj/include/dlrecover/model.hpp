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

#ifndef DLRECOVER_MODEL_HPP_
#define DLRECOVER_MODEL_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dlrecover/error.hpp"

namespace dlr {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct DatasetShard {
  Matrix features;          // rows x features
  std::vector<int> labels;  // one per row
  std::size_t owner = 0;

  std::size_t rows() const noexcept { return static_cast<std::size_t>(features.rows()); }
  std::size_t feature_count() const noexcept {
    return static_cast<std::size_t>(features.cols());
  }

  friend bool operator==(const DatasetShard& a, const DatasetShard& b) {
    return a.owner == b.owner && a.labels == b.labels &&
           a.features.rows() == b.features.rows() &&
           a.features.cols() == b.features.cols() && a.features == b.features;
  }
};

enum class ModelFamily { logistic_regression_l2, mlp_small };

constexpr std::string_view to_string(ModelFamily f) {
  return f == ModelFamily::logistic_regression_l2 ? "logistic_regression_l2" : "mlp_small";
}

inline ModelFamily parse_family(std::string_view s) {
  if (s == "logistic_regression_l2") return ModelFamily::logistic_regression_l2;
  if (s == "mlp_small") return ModelFamily::mlp_small;
  fail(Errc::invalid_config, "unknown model family '" + std::string(s) + "'");
}

inline constexpr std::size_t kMaxHidden = 32;
inline constexpr std::size_t kMaxHessianDim = 64;

// Mean per-sample cross-entropy plus (l2/2)||w||^2 over all parameters.
//
// Layouts:
//  * logistic, 2 classes: [w (features), bias]; sigmoid of the class-1 logit.
//  * logistic, K > 2 classes: K blocks of [w_k (features), bias_k]; softmax.
//  * mlp: [W1 (hidden x features, row-major), b1, W2 (classes x hidden,
//    row-major), b2]; tanh hidden layer, softmax output.
struct LossSpec {
  ModelFamily family = ModelFamily::logistic_regression_l2;
  double l2 = 0.0;
  std::size_t features = 0;
  std::size_t classes = 2;
  std::size_t hidden = 16;

  bool binary() const noexcept { return classes == 2; }

  std::size_t param_count() const {
    if (family == ModelFamily::logistic_regression_l2) {
      return binary() ? features + 1 : classes * (features + 1);
    }
    return hidden * features + hidden + classes * hidden + classes;
  }

  void validate() const {
    require(l2 >= 0.0 && std::isfinite(l2), Errc::invalid_config, "l2 weight must be >= 0");
    require(features >= 1, Errc::invalid_config, "feature count must be >= 1");
    require(classes >= 2, Errc::invalid_config, "class count must be >= 2");
    if (family == ModelFamily::mlp_small) {
      require(hidden >= 1 && hidden <= kMaxHidden, Errc::invalid_config,
              "mlp hidden width must be in [1, 32]");
    }
  }
};

namespace detail {

inline void check_shapes(const Vector& params, const DatasetShard& shard, const LossSpec& spec) {
  require(shard.feature_count() == spec.features, Errc::shape_error,
          "shard has " + std::to_string(shard.feature_count()) + " features, model expects " +
              std::to_string(spec.features));
  require(static_cast<std::size_t>(params.size()) == spec.param_count(), Errc::shape_error,
          "params have dimension " + std::to_string(params.size()) + ", model expects " +
              std::to_string(spec.param_count()));
  require(shard.labels.size() == shard.rows(), Errc::shape_error, "label count != row count");
  require(shard.rows() >= 1, Errc::shape_error, "empty shard");
  for (int y : shard.labels) {
    require(y >= 0 && static_cast<std::size_t>(y) < spec.classes, Errc::shape_error,
            "label " + std::to_string(y) + " outside class range");
  }
}

// log(1 + exp(z)) without overflow.
inline double softplus(double z) {
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Softmax in place; returns log-sum-exp.
inline double softmax(Eigen::Ref<Vector> z) {
  const double m = z.maxCoeff();
  z = (z.array() - m).exp();
  const double s = z.sum();
  z /= s;
  return m + std::log(s);
}

inline Matrix weight_block(const Vector& params, std::size_t classes, std::size_t features) {
  // classes x (features + 1), row-major in params.
  Matrix w(classes, features + 1);
  for (std::size_t k = 0; k < classes; ++k)
    for (std::size_t j = 0; j <= features; ++j)
      w(k, j) = params[static_cast<Eigen::Index>(k * (features + 1) + j)];
  return w;
}

struct MlpView {
  Matrix w1;  // hidden x features
  Vector b1;
  Matrix w2;  // classes x hidden
  Vector b2;
};

inline MlpView unpack_mlp(const Vector& p, const LossSpec& s) {
  MlpView v{Matrix(s.hidden, s.features), Vector(s.hidden), Matrix(s.classes, s.hidden),
            Vector(s.classes)};
  Eigen::Index o = 0;
  for (std::size_t h = 0; h < s.hidden; ++h)
    for (std::size_t j = 0; j < s.features; ++j) v.w1(h, j) = p[o++];
  for (std::size_t h = 0; h < s.hidden; ++h) v.b1[h] = p[o++];
  for (std::size_t k = 0; k < s.classes; ++k)
    for (std::size_t h = 0; h < s.hidden; ++h) v.w2(k, h) = p[o++];
  for (std::size_t k = 0; k < s.classes; ++k) v.b2[k] = p[o++];
  return v;
}

// Class scores for one input row.
inline Vector logits(const Vector& params, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                     const LossSpec& spec) {
  const auto f = static_cast<Eigen::Index>(spec.features);
  if (spec.family == ModelFamily::logistic_regression_l2) {
    if (spec.binary()) {
      Vector z(2);
      z[0] = 0.0;
      z[1] = x.dot(params.head(f)) + params[f];
      return z;
    }
    const Matrix w = weight_block(params, spec.classes, spec.features);
    return w.leftCols(f) * x.transpose() + w.col(f);
  }
  const MlpView m = unpack_mlp(params, spec);
  const Vector hidden = (m.w1 * x.transpose() + m.b1).array().tanh().matrix();
  return m.w2 * hidden + m.b2;
}

}  // namespace detail

inline double loss(const Vector& params, const DatasetShard& shard, const LossSpec& spec) {
  detail::check_shapes(params, shard, spec);
  const auto rows = static_cast<Eigen::Index>(shard.rows());
  double total = 0.0;
  if (spec.family == ModelFamily::logistic_regression_l2 && spec.binary()) {
    const auto f = static_cast<Eigen::Index>(spec.features);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const double z = shard.features.row(r).dot(params.head(f)) + params[f];
      total += detail::softplus(z) - (shard.labels[r] == 1 ? z : 0.0);
    }
  } else {
    for (Eigen::Index r = 0; r < rows; ++r) {
      Vector z = detail::logits(params, shard.features.row(r), spec);
      const double picked = z[shard.labels[r]];
      const double lse = detail::softmax(z);
      total += lse - picked;
    }
  }
  return total / static_cast<double>(rows) + 0.5 * spec.l2 * params.squaredNorm();
}

inline Vector gradient(const Vector& params, const DatasetShard& shard, const LossSpec& spec) {
  detail::check_shapes(params, shard, spec);
  const auto rows = static_cast<Eigen::Index>(shard.rows());
  const auto f = static_cast<Eigen::Index>(spec.features);
  const double inv_rows = 1.0 / static_cast<double>(rows);
  Vector g = Vector::Zero(params.size());

  if (spec.family == ModelFamily::logistic_regression_l2) {
    if (spec.binary()) {
      for (Eigen::Index r = 0; r < rows; ++r) {
        const auto x = shard.features.row(r);
        const double z = x.dot(params.head(f)) + params[f];
        const double err = detail::sigmoid(z) - (shard.labels[r] == 1 ? 1.0 : 0.0);
        g.head(f) += err * x.transpose();
        g[f] += err;
      }
    } else {
      const Eigen::Index stride = f + 1;
      for (Eigen::Index r = 0; r < rows; ++r) {
        const auto x = shard.features.row(r);
        Vector p = detail::logits(params, x, spec);
        detail::softmax(p);
        p[shard.labels[r]] -= 1.0;
        for (Eigen::Index k = 0; k < p.size(); ++k) {
          g.segment(k * stride, f) += p[k] * x.transpose();
          g[k * stride + f] += p[k];
        }
      }
    }
  } else {
    const detail::MlpView m = detail::unpack_mlp(params, spec);
    const auto H = static_cast<Eigen::Index>(spec.hidden);
    const auto K = static_cast<Eigen::Index>(spec.classes);
    Matrix gw1 = Matrix::Zero(H, f);
    Vector gb1 = Vector::Zero(H);
    Matrix gw2 = Matrix::Zero(K, H);
    Vector gb2 = Vector::Zero(K);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const Vector x = shard.features.row(r).transpose();
      const Vector a = (m.w1 * x + m.b1).array().tanh().matrix();
      Vector p = m.w2 * a + m.b2;
      detail::softmax(p);
      p[shard.labels[r]] -= 1.0;
      gw2 += p * a.transpose();
      gb2 += p;
      const Vector delta = ((m.w2.transpose() * p).array() * (1.0 - a.array().square())).matrix();
      gw1 += delta * x.transpose();
      gb1 += delta;
    }
    Eigen::Index o = 0;
    for (Eigen::Index h = 0; h < H; ++h)
      for (Eigen::Index j = 0; j < f; ++j) g[o++] = gw1(h, j);
    for (Eigen::Index h = 0; h < H; ++h) g[o++] = gb1[h];
    for (Eigen::Index k = 0; k < K; ++k)
      for (Eigen::Index h = 0; h < H; ++h) g[o++] = gw2(k, h);
    for (Eigen::Index k = 0; k < K; ++k) g[o++] = gb2[k];
  }
  g *= inv_rows;
  g += spec.l2 * params;
  return g;
}

inline Matrix exact_hessian(const Vector& params, const DatasetShard& shard, const LossSpec& spec) {
  require(spec.family == ModelFamily::logistic_regression_l2, Errc::unsupported,
          "exact Hessian is only available for logistic_regression_l2");
  require(spec.param_count() <= kMaxHessianDim, Errc::unsupported,
          "exact Hessian limited to 64 parameters");
  detail::check_shapes(params, shard, spec);
  const auto rows = static_cast<Eigen::Index>(shard.rows());
  const auto f = static_cast<Eigen::Index>(spec.features);
  const auto d = params.size();
  Matrix h = Matrix::Zero(d, d);
  Vector xa(f + 1);
  for (Eigen::Index r = 0; r < rows; ++r) {
    xa.head(f) = shard.features.row(r).transpose();
    xa[f] = 1.0;
    if (spec.binary()) {
      const double p = detail::sigmoid(xa.dot(params));
      h.noalias() += p * (1.0 - p) * xa * xa.transpose();
    } else {
      Vector p = detail::logits(params, shard.features.row(r), spec);
      detail::softmax(p);
      const Matrix outer = xa * xa.transpose();
      const Eigen::Index stride = f + 1;
      for (Eigen::Index a = 0; a < p.size(); ++a)
        for (Eigen::Index b = 0; b < p.size(); ++b) {
          const double c = (a == b ? p[a] : 0.0) - p[a] * p[b];
          h.block(a * stride, b * stride, stride, stride) += c * outer;
        }
    }
  }
  h /= static_cast<double>(rows);
  h.diagonal().array() += spec.l2;
  return h;
}

inline int predict(const Vector& params, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                   const LossSpec& spec) {
  const Vector z = detail::logits(params, x, spec);
  Eigen::Index best = 0;
  z.maxCoeff(&best);
  return static_cast<int>(best);
}

inline double accuracy(const Vector& params, const DatasetShard& shard, const LossSpec& spec) {
  detail::check_shapes(params, shard, spec);
  std::size_t correct = 0;
  for (Eigen::Index r = 0; r < shard.features.rows(); ++r)
    if (predict(params, shard.features.row(r), spec) == shard.labels[r]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(shard.rows());
}

// Upper bound on the Hessian spectrum of the mean loss over `shards`:
// c * sigma_max(sum_i X_i^T X_i / rows_i) / count + l2, with c = 1/4 for the
// sigmoid and 1/2 for softmax.
inline double smoothness_bound(const std::vector<const DatasetShard*>& shards,
                               const LossSpec& spec) {
  require(spec.family == ModelFamily::logistic_regression_l2, Errc::unsupported,
          "smoothness bound is only available for logistic_regression_l2");
  require(!shards.empty(), Errc::shape_error, "no shards");
  const auto f = static_cast<Eigen::Index>(spec.features);
  Matrix gram = Matrix::Zero(f + 1, f + 1);
  for (const DatasetShard* s : shards) {
    Matrix xa(s->features.rows(), f + 1);
    xa.leftCols(f) = s->features;
    xa.col(f).setOnes();
    gram += xa.transpose() * xa / static_cast<double>(s->rows());
  }
  gram /= static_cast<double>(shards.size());
  const double sigma = Eigen::SelfAdjointEigenSolver<Matrix>(gram).eigenvalues().maxCoeff();
  return (spec.binary() ? 0.25 : 0.5) * sigma + spec.l2;
}

}  // namespace dlr

#endif  // DLRECOVER_MODEL_HPP_
