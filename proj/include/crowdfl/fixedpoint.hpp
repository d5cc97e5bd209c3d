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

#ifndef CROWDFL_FIXEDPOINT_HPP_
#define CROWDFL_FIXEDPOINT_HPP_

#include <algorithm>
#include <cctype>
#include <string>
#include <string_view>
#include <utility>

#include "crowdfl/bigint.hpp"
#include "crowdfl/error.hpp"
#include "crowdfl/pctd.hpp"

namespace crowdfl {

// Exact signed rational. Model weights, averages and rewards are carried as
// Decimals wherever exactness matters; doubles only appear inside training.
using Decimal = mpq_class;

// Parses [+-]digits[.digits] exactly.
inline Decimal parse_decimal(std::string_view text) {
  std::size_t i = 0;
  bool negative = false;
  if (i < text.size() && (text[i] == '-' || text[i] == '+')) {
    negative = text[i] == '-';
    ++i;
  }
  std::string digits;
  int places = 0;
  bool seen_point = false;
  bool seen_digit = false;
  for (; i < text.size(); ++i) {
    char c = text[i];
    if (c == '.' && !seen_point) {
      seen_point = true;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      digits.push_back(c);
      seen_digit = true;
      if (seen_point) ++places;
    } else {
      fail(ErrorCode::kDomain, "malformed decimal '" + std::string(text) + "'");
    }
  }
  require(seen_digit, ErrorCode::kDomain,
          "malformed decimal '" + std::string(text) + "'");
  Decimal value(BigInt(digits, 10), pow10(places));
  value.canonicalize();
  return negative ? Decimal(-value) : value;
}

// Exact binary value of a double.
inline Decimal from_double(double v) { return Decimal(v); }

inline BigInt floor_scaled(const Decimal& v, int places) {
  BigInt num = v.get_num() * pow10(places);
  return floor_div(num, v.get_den());
}

// Largest multiple of 10^-places not above v.
inline Decimal floor_to_places(const Decimal& v, int places) {
  Decimal out(floor_scaled(v, places), pow10(places));
  out.canonicalize();
  return out;
}

// Fixed notation with exactly `places` digits, truncated toward -infinity.
inline std::string format_decimal(const Decimal& v, int places) {
  BigInt scaled = floor_scaled(v, places);
  bool negative = scaled < 0;
  BigInt magnitude = negative ? BigInt(-scaled) : scaled;
  std::string digits = magnitude.get_str();
  if (places > 0) {
    if (digits.size() <= static_cast<std::size_t>(places)) {
      digits.insert(0, places + 1 - digits.size(), '0');
    }
    digits.insert(digits.size() - places, ".");
  }
  return (negative ? "-" : "") + digits;
}

inline double to_double(const Decimal& v) { return v.get_d(); }

// Signed fixed point in Z_N: a decimal a becomes floor(a * 10^L) mod N, and
// residues above N/2 read back as negative.
struct FixedPointCodec {
  int L = 6;
  int kappa = 32;
  BigInt n;

  static FixedPointCodec make(int L, int kappa, const BigInt& n) {
    require(L >= 0 && kappa > 0, ErrorCode::kConfig,
            "L must be non-negative and kappa positive");
    require(pow10(L) < pow2(kappa), ErrorCode::kConfig, "10^L must be < 2^kappa");
    require(pow2(kappa + 2) < n, ErrorCode::kConfig,
            "2^(kappa+2) must be below N");
    return FixedPointCodec{L, kappa, n};
  }

  BigInt magnitude_bound() const { return pow2(kappa); }

  // Signed integer into Z_N; |v| must be below 2^kappa.
  BigInt encode_integer(const BigInt& v) const {
    require(abs(v) < magnitude_bound(), ErrorCode::kRange,
            "magnitude exceeds 2^kappa");
    return mod(v, n);
  }

  BigInt encode(const Decimal& value) const {
    return encode_integer(floor_scaled(value, L));
  }

  BigInt to_signed(const BigInt& element) const {
    require(element >= 0 && element < n, ErrorCode::kDomain,
            "element outside Z_N");
    return 2 * element > n ? BigInt(element - n) : element;
  }

  Decimal decode(const BigInt& element, int scale) const {
    require(scale >= 0, ErrorCode::kScale, "negative scale");
    Decimal out(to_signed(element), pow10(scale));
    out.canonicalize();
    return out;
  }
};

// Lifts c to `target_scale` by a public factor 10^(target - c.scale). The
// worst-case plaintext 2^kappa * 10^diff must stay below N/2.
inline Ciphertext rescale(const PublicKey& pk, const FixedPointCodec& codec,
                          const Ciphertext& c, int target_scale) {
  require(target_scale >= c.scale, ErrorCode::kScale,
          "cannot lower a ciphertext's scale");
  if (target_scale == c.scale) return c;
  BigInt factor = pow10(target_scale - c.scale);
  require(2 * codec.magnitude_bound() * factor < pk.n, ErrorCode::kRange,
          "rescaled plaintext may exceed N/2");
  Ciphertext out = pmul(pk, c, factor);
  out.scale = target_scale;
  return out;
}

inline std::pair<Ciphertext, Ciphertext> align_scales(
    const PublicKey& pk, const FixedPointCodec& codec, const Ciphertext& c1,
    const Ciphertext& c2) {
  int target = std::max(c1.scale, c2.scale);
  return {rescale(pk, codec, c1, target), rescale(pk, codec, c2, target)};
}

}  // namespace crowdfl

#endif  // CROWDFL_FIXEDPOINT_HPP_
