/*
 * Copyright 2026 The CrowdFL Authors.
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

// Big-integer helpers on top of GMP and the seedable randomness source used
// everywhere randomness is consumed.

#ifndef CROWDFL_BIGINT_HPP_
#define CROWDFL_BIGINT_HPP_

#include <gmpxx.h>

#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <string_view>
#include <vector>

#include "crowdfl/error.hpp"

namespace crowdfl {

using BigInt = mpz_class;

inline std::size_t bit_length(const BigInt& x) {
  if (x == 0) return 0;
  return mpz_sizeinbase(x.get_mpz_t(), 2);
}

inline BigInt pow2(unsigned long bits) {
  BigInt out;
  mpz_ui_pow_ui(out.get_mpz_t(), 2, bits);
  return out;
}

inline BigInt pow10(unsigned long exponent) {
  BigInt out;
  mpz_ui_pow_ui(out.get_mpz_t(), 10, exponent);
  return out;
}

inline BigInt powm(const BigInt& base, const BigInt& exponent,
                   const BigInt& modulus) {
  BigInt out;
  mpz_powm(out.get_mpz_t(), base.get_mpz_t(), exponent.get_mpz_t(),
           modulus.get_mpz_t());
  return out;
}

// Least non-negative residue.
inline BigInt mod(const BigInt& x, const BigInt& modulus) {
  BigInt out;
  mpz_mod(out.get_mpz_t(), x.get_mpz_t(), modulus.get_mpz_t());
  return out;
}

inline BigInt floor_div(const BigInt& a, const BigInt& b) {
  BigInt out;
  mpz_fdiv_q(out.get_mpz_t(), a.get_mpz_t(), b.get_mpz_t());
  return out;
}

inline BigInt gcd(const BigInt& a, const BigInt& b) {
  BigInt out;
  mpz_gcd(out.get_mpz_t(), a.get_mpz_t(), b.get_mpz_t());
  return out;
}

inline bool invert(BigInt& out, const BigInt& x, const BigInt& modulus) {
  return mpz_invert(out.get_mpz_t(), x.get_mpz_t(), modulus.get_mpz_t()) != 0;
}

// Miller-Rabin with 40 rounds after GMP's trial division and Baillie-PSW:
// error probability at most 4^-40 = 2^-80.
inline bool is_probable_prime(const BigInt& x) {
  return mpz_probab_prime_p(x.get_mpz_t(), 40) != 0;
}

// Unsigned big-endian magnitude; zero encodes as an empty array.
inline std::vector<std::uint8_t> to_bytes(const BigInt& x) {
  require(x >= 0, ErrorCode::kCodec, "cannot serialize a negative integer");
  std::size_t count = (bit_length(x) + 7) / 8;
  std::vector<std::uint8_t> out(count);
  if (count > 0) {
    std::size_t written = 0;
    mpz_export(out.data(), &written, 1, 1, 1, 0, x.get_mpz_t());
  }
  return out;
}

inline BigInt from_bytes(const std::uint8_t* data, std::size_t size) {
  BigInt out;
  if (size > 0) mpz_import(out.get_mpz_t(), size, 1, 1, 1, 0, data);
  return out;
}

// Deterministic when constructed from a seed. fork() derives independent child
// streams, so a single root seed can feed every role of a simulation.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed)
      : state_(std::make_unique<gmp_randclass>(gmp_randinit_mt)) {
    state_->seed(BigInt(static_cast<unsigned long>(splitmix(seed))));
  }

  static Rng from_entropy() {
    std::random_device device;
    std::uint64_t seed = (static_cast<std::uint64_t>(device()) << 32) ^ device();
    return Rng(seed);
  }

  Rng(Rng&&) noexcept = default;
  Rng& operator=(Rng&&) noexcept = default;

  // Uniform in [0, 2^bits).
  BigInt bits(unsigned long count) {
    if (count == 0) return 0;
    return state_->get_z_bits(count);
  }

  // Uniform in [0, bound).
  BigInt below(const BigInt& bound) {
    require(bound > 0, ErrorCode::kDomain, "empty sampling range");
    return state_->get_z_range(bound);
  }

  // Uniform in [lo, hi).
  BigInt between(const BigInt& lo, const BigInt& hi) {
    require(hi > lo, ErrorCode::kDomain, "empty sampling range");
    return lo + below(hi - lo);
  }

  // Uniform with exactly `count` bits (top bit set).
  BigInt exact_bits(unsigned long count) {
    require(count >= 1, ErrorCode::kDomain, "bit count must be positive");
    return pow2(count - 1) + bits(count - 1);
  }

  std::uint64_t next_u64() { return bits(64).get_ui(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform01() {
    return static_cast<double>(bits(53).get_ui()) * 0x1.0p-53;
  }

  std::uint64_t uniform_index(std::uint64_t bound) {
    return below(BigInt(static_cast<unsigned long>(bound))).get_ui();
  }

  Rng fork(std::string_view label) {
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : label) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
    return Rng(next_u64() ^ h);
  }

  // UniformRandomBitGenerator, for std::shuffle and friends.
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }
  result_type operator()() { return next_u64(); }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::unique_ptr<gmp_randclass> state_;
};

}  // namespace crowdfl

#endif  // CROWDFL_BIGINT_HPP_
