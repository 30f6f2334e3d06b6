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

#ifndef DLRECOVER_LBFGS_HPP_
#define DLRECOVER_LBFGS_HPP_

#include <cmath>
#include <cstddef>
#include <deque>
#include <string>

#include <Eigen/Dense>

#include "dlrecover/error.hpp"
#include "dlrecover/model.hpp"

namespace dlr {

// Sliding windows of model differences (W) and gradient differences (G).
// Pairs enter together and the oldest pair leaves first.
class DifferenceBuffers {
 public:
  explicit DifferenceBuffers(std::size_t capacity = 4) : capacity_(capacity) {
    require(capacity >= 1, Errc::invalid_config, "buffer capacity must be >= 1");
  }

  void push_pair(const Vector& dw, const Vector& dg) {
    require(dw.size() == dg.size() && dw.size() > 0, Errc::shape_error,
            "difference pair dimensions differ");
    if (!dw_.empty()) {
      require(dw.size() == dw_.front().size(), Errc::shape_error,
              "difference pair dimension changed");
    }
    dw_.push_back(dw);
    dg_.push_back(dg);
    if (dw_.size() > capacity_) {
      dw_.pop_front();
      dg_.pop_front();
    }
  }

  std::size_t size() const noexcept { return dw_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  bool empty() const noexcept { return dw_.empty(); }
  const std::deque<Vector>& model_diffs() const noexcept { return dw_; }
  const std::deque<Vector>& gradient_diffs() const noexcept { return dg_; }

 private:
  std::size_t capacity_;
  std::deque<Vector> dw_;
  std::deque<Vector> dg_;
};

struct HvpOptions {
  double curvature_eps = 1e-10;
  double max_condition = 1e12;
};

// Compact-form L-BFGS Hessian-vector product B v with B_0 = rho I:
//
//   A = W^T G,  D = diag(A),  M = strictly-lower(A),
//   rho = (dg_s . dw_s) / (dw_s . dw_s),
//   [ -D    M^T        ] p = [ G^T v       ]
//   [  M    rho W^T W  ]     [ rho W^T v   ]
//   B v = rho v - [G, rho W] p
inline Vector hvp(const DifferenceBuffers& buffers, const Vector& v, const HvpOptions& opts = {}) {
  require(!buffers.empty(), Errc::insufficient_curvature, "empty difference buffers");
  const auto s = static_cast<Eigen::Index>(buffers.size());
  const auto d = buffers.model_diffs().front().size();
  require(v.size() == d, Errc::shape_error, "direction has wrong dimension");

  Matrix W(d, s), G(d, s);
  for (Eigen::Index j = 0; j < s; ++j) {
    W.col(j) = buffers.model_diffs()[static_cast<std::size_t>(j)];
    G.col(j) = buffers.gradient_diffs()[static_cast<std::size_t>(j)];
  }
  const double ww = W.col(s - 1).squaredNorm();
  const double wg = W.col(s - 1).dot(G.col(s - 1));
  require(ww > 0.0 && wg > opts.curvature_eps * ww, Errc::insufficient_curvature,
          "newest pair fails the curvature safeguard");
  const double rho = wg / ww;

  const Matrix A = W.transpose() * G;
  Matrix K = Matrix::Zero(2 * s, 2 * s);
  K.topLeftCorner(s, s) = -Matrix(A.diagonal().asDiagonal());
  const Matrix M = A.triangularView<Eigen::StrictlyLower>();
  K.topRightCorner(s, s) = M.transpose();
  K.bottomLeftCorner(s, s) = M;
  K.bottomRightCorner(s, s) = rho * (W.transpose() * W);

  Vector rhs(2 * s);
  rhs.head(s) = G.transpose() * v;
  rhs.tail(s) = rho * (W.transpose() * v);

  const Eigen::PartialPivLU<Matrix> lu(K);
  const double rcond = lu.rcond();
  require(std::isfinite(rcond) && rcond * opts.max_condition >= 1.0, Errc::singular_curvature,
          "block system condition estimate " + std::to_string(1.0 / rcond) + " too large");
  const Vector p = lu.solve(rhs);
  return rho * v - G * p.head(s) - rho * (W * p.tail(s));
}

}  // namespace dlr

#endif  // DLRECOVER_LBFGS_HPP_
