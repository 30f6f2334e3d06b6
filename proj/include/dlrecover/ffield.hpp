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

#ifndef DLRECOVER_FFIELD_HPP_
#define DLRECOVER_FFIELD_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dlrecover/error.hpp"
#include "dlrecover/rng.hpp"

namespace dlr {

inline constexpr std::uint64_t kMersenne61 = (std::uint64_t{1} << 61) - 1;

namespace detail {

inline std::uint64_t mulmod(std::uint64_t a, std::uint64_t b, std::uint64_t m) {
  return static_cast<std::uint64_t>(static_cast<unsigned __int128>(a) * b % m);
}

inline std::uint64_t powmod(std::uint64_t base, std::uint64_t exp,
                            std::uint64_t m) {
  std::uint64_t result = 1 % m;
  base %= m;
  while (exp > 0) {
    if (exp & 1) result = mulmod(result, base, m);
    base = mulmod(base, base, m);
    exp >>= 1;
  }
  return result;
}

}  // namespace detail

// Deterministic Miller-Rabin; the first twelve prime bases are sufficient
// for every 64-bit input.
inline bool is_prime(std::uint64_t n) {
  if (n < 2) return false;
  constexpr std::uint64_t kBases[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
  for (std::uint64_t p : kBases) {
    if (n % p == 0) return n == p;
  }
  std::uint64_t d = n - 1;
  int r = 0;
  while ((d & 1) == 0) {
    d >>= 1;
    ++r;
  }
  for (std::uint64_t a : kBases) {
    std::uint64_t x = detail::powmod(a, d, n);
    if (x == 1 || x == n - 1) continue;
    bool composite = true;
    for (int i = 1; i < r; ++i) {
      x = detail::mulmod(x, x, n);
      if (x == n - 1) {
        composite = false;
        break;
      }
    }
    if (composite) return false;
  }
  return true;
}

struct FieldElement {
  std::uint64_t value = 0;

  friend bool operator==(FieldElement, FieldElement) = default;
};

// Arithmetic in Z_q for a runtime prime q < 2^63.
class PrimeField {
 public:
  explicit PrimeField(std::uint64_t modulus = kMersenne61) : q_(modulus) {
    require(modulus < (std::uint64_t{1} << 63), Errc::invalid_config,
            "field modulus must be below 2^63");
    require(is_prime(modulus), Errc::invalid_config,
            "field modulus " + std::to_string(modulus) + " is not prime");
  }

  std::uint64_t modulus() const noexcept { return q_; }

  FieldElement element(std::uint64_t v) const { return {v % q_}; }

  // Maps a signed integer to its residue; negatives become q - |v|.
  FieldElement from_signed(std::int64_t v) const {
    if (v >= 0) return element(static_cast<std::uint64_t>(v));
    const std::uint64_t mag = static_cast<std::uint64_t>(-(v + 1)) + 1;
    const std::uint64_t r = mag % q_;
    return {r == 0 ? 0 : q_ - r};
  }

  // Centered lift into (-q/2, q/2].
  std::int64_t to_signed(FieldElement a) const {
    if (a.value <= q_ / 2) return static_cast<std::int64_t>(a.value);
    return -static_cast<std::int64_t>(q_ - a.value);
  }

  FieldElement add(FieldElement a, FieldElement b) const {
    std::uint64_t s = a.value + b.value;
    return {s >= q_ ? s - q_ : s};
  }

  FieldElement sub(FieldElement a, FieldElement b) const {
    return {a.value >= b.value ? a.value - b.value : a.value + q_ - b.value};
  }

  FieldElement neg(FieldElement a) const { return {a.value == 0 ? 0 : q_ - a.value}; }

  FieldElement mul(FieldElement a, FieldElement b) const {
    return {detail::mulmod(a.value, b.value, q_)};
  }

  FieldElement pow(FieldElement a, std::uint64_t e) const {
    return {detail::powmod(a.value, e, q_)};
  }

  // Extended Euclid.
  FieldElement inv(FieldElement a) const {
    require(a.value != 0, Errc::division_by_zero, "inverse of zero");
    __int128 t = 0, new_t = 1;
    __int128 r = q_, new_r = a.value;
    while (new_r != 0) {
      __int128 quot = r / new_r;
      __int128 tmp = t - quot * new_t;
      t = new_t;
      new_t = tmp;
      tmp = r - quot * new_r;
      r = new_r;
      new_r = tmp;
    }
    if (t < 0) t += q_;
    return {static_cast<std::uint64_t>(t)};
  }

  FieldElement div(FieldElement a, FieldElement b) const { return mul(a, inv(b)); }

  FieldElement random(Rng& rng) const { return {rng.below(q_)}; }

  friend bool operator==(const PrimeField&, const PrimeField&) = default;

 private:
  std::uint64_t q_;
};

// Field parameters of the fixed-point encoding. `max_summands` is the largest
// number of encoded values that may be added before decoding.
struct PrimeFieldConfig {
  std::uint64_t modulus = kMersenne61;
  int fractional_bits = 24;
  double magnitude_bound = 65536.0;
  std::uint64_t max_summands = 4096;

  void validate() const {
    require(fractional_bits >= 0 && fractional_bits <= 52, Errc::invalid_config,
            "fractional_bits must be in [0, 52]");
    require(magnitude_bound > 0.0 && std::isfinite(magnitude_bound),
            Errc::invalid_config, "magnitude_bound must be positive");
    require(max_summands >= 1, Errc::invalid_config, "max_summands must be >= 1");
    const long double headroom = std::ldexp(static_cast<long double>(magnitude_bound),
                                            fractional_bits) *
                                 static_cast<long double>(max_summands);
    require(headroom < static_cast<long double>(modulus) / 2, Errc::invalid_config,
            "2^f * magnitude_bound * max_summands must stay below q/2");
  }

  friend bool operator==(const PrimeFieldConfig&, const PrimeFieldConfig&) = default;
};

// Real <-> field mapping: round(x * 2^f) with half-away-from-zero rounding,
// negatives stored as q - |v|. Only linear combinations survive decoding.
class FixedPointCodec {
 public:
  explicit FixedPointCodec(PrimeFieldConfig config = {})
      : config_((config.validate(), config)), field_(config.modulus) {}

  const PrimeFieldConfig& config() const noexcept { return config_; }
  const PrimeField& field() const noexcept { return field_; }
  double step() const { return std::ldexp(1.0, -config_.fractional_bits); }

  FieldElement encode(double x) const {
    require(std::isfinite(x) && std::fabs(x) <= config_.magnitude_bound,
            Errc::range_overflow,
            "value " + std::to_string(x) + " exceeds magnitude bound " +
                std::to_string(config_.magnitude_bound));
    const double scaled = std::ldexp(x, config_.fractional_bits);
    return field_.from_signed(static_cast<std::int64_t>(std::llround(scaled)));
  }

  double decode(FieldElement e) const {
    return std::ldexp(static_cast<double>(field_.to_signed(e)),
                      -config_.fractional_bits);
  }

  std::vector<FieldElement> encode(std::span<const double> xs) const {
    std::vector<FieldElement> out;
    out.reserve(xs.size());
    for (double x : xs) out.push_back(encode(x));
    return out;
  }

  std::vector<double> decode(std::span<const FieldElement> es) const {
    std::vector<double> out;
    out.reserve(es.size());
    for (FieldElement e : es) out.push_back(decode(e));
    return out;
  }

 private:
  PrimeFieldConfig config_;
  PrimeField field_;
};

}  // namespace dlr

#endif  // DLRECOVER_FFIELD_HPP_
