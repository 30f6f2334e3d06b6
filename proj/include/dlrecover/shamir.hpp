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

#ifndef DLRECOVER_SHAMIR_HPP_
#define DLRECOVER_SHAMIR_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dlrecover/error.hpp"
#include "dlrecover/ffield.hpp"
#include "dlrecover/rng.hpp"

namespace dlr {

// Share arithmetic over F_q. Secrets are fixed-point encoded through the
// codec; reconstruction is exact and decodes at the very end.
class FieldDomain {
 public:
  using value_type = FieldElement;
  static constexpr bool kExact = true;

  explicit FieldDomain(FixedPointCodec codec = FixedPointCodec{}) : codec_(codec) {}

  const FixedPointCodec& codec() const noexcept { return codec_; }
  const PrimeField& field() const noexcept { return codec_.field(); }

  value_type zero() const { return {0}; }
  value_type add(value_type a, value_type b) const { return field().add(a, b); }
  value_type sub(value_type a, value_type b) const { return field().sub(a, b); }
  value_type mul(value_type a, value_type b) const { return field().mul(a, b); }
  value_type point(std::int64_t x) const { return field().from_signed(x); }
  value_type encode(double x) const { return codec_.encode(x); }
  double decode(value_type v) const { return codec_.decode(v); }
  value_type random_coefficient(Rng& rng, double /*bound*/) const {
    return field().random(rng);
  }

  // l_i(target) = prod_{j != i} (target - x_j) / (x_i - x_j)
  std::vector<value_type> basis_at(std::span<const std::int64_t> xs,
                                   std::int64_t target) const {
    std::vector<value_type> out(xs.size());
    const value_type t = point(target);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      value_type num{1 % field().modulus()};
      value_type den{1 % field().modulus()};
      const value_type xi = point(xs[i]);
      for (std::size_t j = 0; j < xs.size(); ++j) {
        if (j == i) continue;
        const value_type xj = point(xs[j]);
        num = mul(num, field().sub(t, xj));
        den = mul(den, field().sub(xi, xj));
      }
      out[i] = field().div(num, den);
    }
    return out;
  }

 private:
  FixedPointCodec codec_;
};

// Floating-point shares; used where shares pass through nonlinear operators.
class RealDomain {
 public:
  using value_type = double;
  static constexpr bool kExact = false;

  value_type zero() const { return 0.0; }
  value_type add(value_type a, value_type b) const { return a + b; }
  value_type sub(value_type a, value_type b) const { return a - b; }
  value_type mul(value_type a, value_type b) const { return a * b; }
  value_type point(std::int64_t x) const { return static_cast<double>(x); }
  value_type encode(double x) const {
    require(std::isfinite(x), Errc::range_overflow, "non-finite secret coordinate");
    return x;
  }
  double decode(value_type v) const { return v; }
  value_type random_coefficient(Rng& rng, double bound) const {
    return rng.uniform(-bound, bound);
  }

  std::vector<value_type> basis_at(std::span<const std::int64_t> xs,
                                   std::int64_t target) const {
    std::vector<value_type> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      double num = 1.0, den = 1.0;
      for (std::size_t j = 0; j < xs.size(); ++j) {
        if (j == i) continue;
        num *= static_cast<double>(target - xs[j]);
        den *= static_cast<double>(xs[i] - xs[j]);
      }
      out[i] = num / den;
    }
    return out;
  }
};

inline constexpr std::size_t kMaxRealShares = 32;

template <class Domain>
struct SharingPolicy {
  std::size_t threshold = 1;
  std::vector<std::int64_t> eval_points;
  Domain domain{};
  // Real mode only: coefficients are uniform in [-b, b] with
  // b = coeff_bound_factor * max|secret coordinate|.
  double coeff_bound_factor = 10.0;

  std::size_t size() const noexcept { return eval_points.size(); }

  void validate() const {
    require(!eval_points.empty(), Errc::invalid_config, "no evaluation points");
    require(threshold >= 1 && threshold <= eval_points.size(), Errc::invalid_config,
            "threshold must be in [1, n]");
    if constexpr (!Domain::kExact) {
      require(eval_points.size() <= kMaxRealShares, Errc::invalid_config,
              "real-mode sharing supports at most 32 evaluation points");
    }
    std::vector<std::uint64_t> seen;
    for (std::int64_t x : eval_points) {
      std::uint64_t key;
      if constexpr (Domain::kExact) {
        key = domain.point(x).value;
      } else {
        key = static_cast<std::uint64_t>(x);
      }
      require(key != 0, Errc::invalid_config, "evaluation point must be nonzero");
      require(std::find(seen.begin(), seen.end(), key) == seen.end(),
              Errc::invalid_config, "evaluation points must be distinct");
      seen.push_back(key);
    }
  }
};

// Evaluation points x_i = i + 1 for clients 0..n-1.
inline std::vector<std::int64_t> default_eval_points(std::size_t n) {
  std::vector<std::int64_t> xs(n);
  for (std::size_t i = 0; i < n; ++i) xs[i] = static_cast<std::int64_t>(i) + 1;
  return xs;
}

template <class T>
struct SharePoint {
  std::int64_t x = 0;
  std::vector<T> y;

  std::size_t dimension() const noexcept { return y.size(); }
  friend bool operator==(const SharePoint&, const SharePoint&) = default;
};

template <class T>
struct SharedSecretSet {
  std::size_t dealer = 0;
  std::size_t round = 0;
  std::vector<SharePoint<T>> shares;
};

using FieldShare = SharePoint<FieldElement>;
using RealShare = SharePoint<double>;

// Evaluates, for every coordinate c, the polynomial
//   constants[c] + sum_k coefficients[c][k-1] x^k
// at each policy point.
template <class Domain>
SharedSecretSet<typename Domain::value_type> deal_polynomials(
    const std::vector<typename Domain::value_type>& constants,
    const std::vector<std::vector<typename Domain::value_type>>& coefficients,
    const SharingPolicy<Domain>& policy, std::size_t dealer = 0,
    std::size_t round = 0) {
  using T = typename Domain::value_type;
  const Domain& dom = policy.domain;
  require(coefficients.size() == constants.size(), Errc::shape_error,
          "one coefficient row per coordinate required");
  SharedSecretSet<T> out{dealer, round, {}};
  out.shares.reserve(policy.size());
  for (std::int64_t xi : policy.eval_points) {
    const T x = dom.point(xi);
    SharePoint<T> share{xi, std::vector<T>(constants.size(), dom.zero())};
    for (std::size_t c = 0; c < constants.size(); ++c) {
      const auto& row = coefficients[c];
      T acc = dom.zero();
      for (std::size_t k = row.size(); k > 0; --k) acc = dom.add(dom.mul(acc, x), row[k - 1]);
      share.y[c] = dom.add(dom.mul(acc, x), constants[c]);
    }
    out.shares.push_back(std::move(share));
  }
  return out;
}

template <class Domain>
SharedSecretSet<typename Domain::value_type> share_vector(
    std::span<const double> secret, const SharingPolicy<Domain>& policy,
    std::uint64_t rng_seed, std::size_t dealer = 0, std::size_t round = 0) {
  using T = typename Domain::value_type;
  require(!secret.empty(), Errc::empty_secret, "secret has dimension zero");
  const Domain& dom = policy.domain;

  std::vector<T> constants;
  constants.reserve(secret.size());
  double max_abs = 0.0;
  for (double s : secret) {
    constants.push_back(dom.encode(s));
    max_abs = std::max(max_abs, std::fabs(s));
  }
  const double bound = policy.coeff_bound_factor * (max_abs > 0.0 ? max_abs : 1.0);

  // Real mode scales the degree-k bound by x_max^-k so no term of p(x_i)
  // exceeds `bound`; this keeps Lagrange recombination well conditioned.
  double x_max = 1.0;
  for (std::int64_t x : policy.eval_points)
    x_max = std::max(x_max, std::fabs(static_cast<double>(x)));
  Rng rng(rng_seed);
  std::vector<std::vector<T>> coefficients(secret.size());
  for (auto& row : coefficients) {
    row.reserve(policy.threshold - 1);
    double scaled = bound;
    for (std::size_t k = 1; k < policy.threshold; ++k) {
      scaled /= x_max;
      row.push_back(dom.random_coefficient(rng, scaled));
    }
  }
  return deal_polynomials(constants, coefficients, policy, dealer, round);
}

template <class T, class Domain>
SharePoint<T> aggregate_shares(std::span<const SharePoint<T>> shares,
                               const Domain& domain) {
  require(!shares.empty(), Errc::share_mismatch, "nothing to aggregate");
  SharePoint<T> out{shares.front().x,
                    std::vector<T>(shares.front().dimension(), domain.zero())};
  for (const auto& s : shares) {
    require(s.x == out.x, Errc::share_mismatch, "shares held at different points");
    require(s.dimension() == out.dimension(), Errc::share_mismatch,
            "share dimensions differ");
    for (std::size_t c = 0; c < out.y.size(); ++c) out.y[c] = domain.add(out.y[c], s.y[c]);
  }
  return out;
}

template <class Domain>
std::vector<typename Domain::value_type> lagrange_weights(
    std::span<const std::int64_t> xs, const Domain& domain) {
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t j = i + 1; j < xs.size(); ++j) {
      require(domain.point(xs[i]) != domain.point(xs[j]), Errc::share_mismatch,
              "duplicate evaluation point " + std::to_string(xs[i]));
    }
  }
  return domain.basis_at(xs, 0);
}

namespace detail {

template <class T>
std::vector<std::int64_t> points_of(std::span<const SharePoint<T>> points) {
  std::vector<std::int64_t> xs;
  xs.reserve(points.size());
  for (const auto& p : points) xs.push_back(p.x);
  return xs;
}

template <class T, class Domain>
std::vector<T> combine(std::span<const SharePoint<T>> points, std::span<const T> weights,
                       const Domain& domain) {
  const std::size_t d = points.front().dimension();
  std::vector<T> out(d, domain.zero());
  for (std::size_t i = 0; i < points.size(); ++i) {
    require(points[i].dimension() == d, Errc::share_mismatch, "share dimensions differ");
    for (std::size_t c = 0; c < d; ++c) {
      out[c] = domain.add(out[c], domain.mul(points[i].y[c], weights[i]));
    }
  }
  return out;
}

}  // namespace detail

// Sum_i y_i * l_i(0) over every supplied point, without threshold checks
// or decoding.
template <class T, class Domain>
std::vector<T> interpolate_at_zero(std::span<const SharePoint<T>> points,
                                   const Domain& domain) {
  require(!points.empty(), Errc::insufficient_shares, "no shares supplied");
  const auto xs = detail::points_of(points);
  const auto w = lagrange_weights<Domain>(xs, domain);
  return detail::combine<T, Domain>(points, w, domain);
}

template <class Domain>
Eigen::VectorXd reconstruct_at_zero(
    std::span<const SharePoint<typename Domain::value_type>> points,
    const SharingPolicy<Domain>& policy) {
  using T = typename Domain::value_type;
  const Domain& dom = policy.domain;
  require(points.size() >= policy.threshold, Errc::insufficient_shares,
          std::to_string(points.size()) + " shares, threshold " +
              std::to_string(policy.threshold));
  const auto xs = detail::points_of(points);
  const auto weights = lagrange_weights<Domain>(xs, dom);

  if constexpr (Domain::kExact) {
    if (points.size() > policy.threshold) {
      // Every extra point must lie on the polynomial fixed by the first th.
      const std::size_t th = policy.threshold;
      const auto base = points.first(th);
      const auto base_xs = std::span<const std::int64_t>(xs).first(th);
      for (std::size_t k = th; k < points.size(); ++k) {
        const auto basis = dom.basis_at(base_xs, xs[k]);
        const auto predicted = detail::combine<T, Domain>(base, basis, dom);
        require(predicted == points[k].y, Errc::corrupt_share,
                "share at x=" + std::to_string(xs[k]) + " is inconsistent");
      }
    }
  }

  const auto raw = detail::combine<T, Domain>(points, weights, dom);
  Eigen::VectorXd out(static_cast<Eigen::Index>(raw.size()));
  for (std::size_t c = 0; c < raw.size(); ++c) out[static_cast<Eigen::Index>(c)] = dom.decode(raw[c]);
  return out;
}

}  // namespace dlr

#endif  // DLRECOVER_SHAMIR_HPP_
