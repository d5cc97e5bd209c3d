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

// Paillier cryptosystem with a two-way additive split of the decryption
// exponent. A split (l1, l2) satisfies l1 + l2 = 0 mod lambda and
// l1 + l2 = 1 mod N, so c^l1 * c^l2 = 1 + m*N mod N^2 and neither share alone
// decrypts.
//
// All functions are pure over immutable values and safe to call concurrently.

#ifndef CROWDFL_PCTD_HPP_
#define CROWDFL_PCTD_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "crowdfl/bigint.hpp"
#include "crowdfl/bytes.hpp"
#include "crowdfl/error.hpp"

namespace crowdfl {

struct PublicKey {
  BigInt n;
  BigInt g;  // always n + 1
  BigInt n_squared;
  unsigned zeta = 0;

  static PublicKey from_modulus(const BigInt& n, unsigned zeta) {
    require(n > 3 && mpz_odd_p(n.get_mpz_t()), ErrorCode::kDomain,
            "modulus must be odd");
    return PublicKey{n, n + 1, n * n, zeta};
  }

  friend bool operator==(const PublicKey&, const PublicKey&) = default;
};

struct PrivateKey {
  BigInt lambda;  // (p-1)(q-1)
  BigInt u;       // lambda^-1 mod N

  friend bool operator==(const PrivateKey&, const PrivateKey&) = default;
};

struct KeyPair {
  PublicKey pk;
  PrivateKey sk;
};

// One half of a split. `index` is 1 or 2; shares from the same split carry the
// same pairing_id.
struct KeyShare {
  BigInt value;
  std::uint64_t pairing_id = 0;
  int index = 0;

  friend bool operator==(const KeyShare&, const KeyShare&) = default;
};

struct SplitKey {
  KeyShare first;
  KeyShare second;
};

enum class SplitMode {
  kUniform,
  // Second share fixed to 2. Faster partial decryption for its holder, but
  // whoever holds the first share learns epsilon = first + 2.
  kSmallSecondShare,
};

// `scale` is public metadata: the plaintext encodes value * 10^scale.
struct Ciphertext {
  BigInt value;
  int scale = 0;

  friend bool operator==(const Ciphertext&, const Ciphertext&) = default;
};

struct PartialDecryption {
  BigInt value;
  std::uint64_t pairing_id = 0;
  int share_index = 0;
};

struct KeygenOptions {
  // Permits zeta below the deployment minimum of 1024 bits.
  bool test_mode = false;
};

inline constexpr unsigned kDeploymentZeta = 1024;
inline constexpr unsigned kMinTestZeta = 16;

namespace detail {

inline BigInt random_prime(unsigned bits, Rng& rng) {
  const unsigned long max_attempts = 2000ul * bits;
  for (unsigned long attempt = 0; attempt < max_attempts; ++attempt) {
    BigInt candidate = rng.exact_bits(bits);
    candidate |= 1;
    if (is_probable_prime(candidate)) return candidate;
  }
  fail(ErrorCode::kGeneration,
       "no prime found after " + std::to_string(max_attempts) + " draws");
}

// L(x) = (x - 1) / N, with the divisibility the decryption identity requires.
inline BigInt l_function(const BigInt& x, const BigInt& n) {
  BigInt numerator = x - 1;
  require(mpz_divisible_p(numerator.get_mpz_t(), n.get_mpz_t()) != 0,
          ErrorCode::kCorruptedCiphertext,
          "L-function numerator is not divisible by N");
  BigInt out;
  mpz_divexact(out.get_mpz_t(), numerator.get_mpz_t(), n.get_mpz_t());
  return out;
}

}  // namespace detail

// Builds a key pair from explicit primes. Used for toy keys in tests and by
// keygen itself.
inline KeyPair keys_from_primes(const BigInt& p, const BigInt& q,
                                unsigned zeta = 0) {
  require(p != q, ErrorCode::kGeneration, "p and q must differ");
  require(is_probable_prime(p) && is_probable_prime(q), ErrorCode::kGeneration,
          "p and q must be prime");
  require(p > 2 && q > 2, ErrorCode::kGeneration, "p and q must be odd");
  BigInt n = p * q;
  BigInt lambda = (p - 1) * (q - 1);
  BigInt u;
  require(invert(u, lambda, n), ErrorCode::kGeneration,
          "gcd(lambda, N) != 1");
  if (zeta == 0) zeta = static_cast<unsigned>(bit_length(p));
  return KeyPair{PublicKey::from_modulus(n, zeta), PrivateKey{lambda, u}};
}

inline KeyPair keygen(unsigned zeta, Rng& rng, KeygenOptions options = {}) {
  require(zeta >= kMinTestZeta, ErrorCode::kDomain,
          "zeta must be at least 16");
  require(options.test_mode || zeta >= kDeploymentZeta, ErrorCode::kDomain,
          "zeta below 1024 requires test mode");
  for (int attempt = 0; attempt < 64; ++attempt) {
    BigInt p = detail::random_prime(zeta, rng);
    BigInt q = detail::random_prime(zeta, rng);
    if (p == q) continue;
    BigInt n = p * q;
    if (gcd((p - 1) * (q - 1), n) != 1) continue;
    return keys_from_primes(p, q, zeta);
  }
  fail(ErrorCode::kGeneration, "could not find a valid prime pair");
}

// epsilon = lambda * u mod (lambda * N); it is 0 mod lambda and 1 mod N.
inline BigInt share_sum(const PrivateKey& sk, const PublicKey& pk) {
  return mod(sk.lambda * sk.u, sk.lambda * pk.n);
}

inline SplitKey split_key(const PrivateKey& sk, const PublicKey& pk,
                          SplitMode mode, Rng& rng) {
  const BigInt epsilon = share_sum(sk, pk);
  const std::uint64_t pairing_id = rng.next_u64();
  BigInt first;
  if (mode == SplitMode::kSmallSecondShare) {
    first = epsilon - 2;
  } else {
    // first in [1, epsilon - 1]; neither share may equal lambda.
    do {
      first = rng.between(1, epsilon);
    } while (first == sk.lambda || epsilon - first == sk.lambda);
  }
  BigInt second = epsilon - first;
  return SplitKey{KeyShare{first, pairing_id, 1},
                  KeyShare{second, pairing_id, 2}};
}

// Throws kCorruptedCiphertext unless 0 < c < N^2 and gcd(c, N) = 1.
inline void validate(const PublicKey& pk, const Ciphertext& c) {
  require(c.value > 0 && c.value < pk.n_squared,
          ErrorCode::kCorruptedCiphertext, "ciphertext out of range");
  require(gcd(c.value, pk.n) == 1, ErrorCode::kCorruptedCiphertext,
          "ciphertext is not a unit mod N^2");
  require(c.scale >= 0, ErrorCode::kScale, "negative scale");
}

// Uniform r in Z_N^*.
inline BigInt sample_unit(const PublicKey& pk, Rng& rng) {
  for (;;) {
    BigInt r = rng.between(1, pk.n);
    if (gcd(r, pk.n) == 1) return r;
  }
}

inline Ciphertext enc_with_randomness(const PublicKey& pk, const BigInt& m,
                                      int scale, const BigInt& r) {
  require(m >= 0 && m < pk.n, ErrorCode::kDomain, "plaintext outside Z_N");
  require(scale >= 0, ErrorCode::kScale, "negative scale");
  BigInt head = mod(1 + m * pk.n, pk.n_squared);
  BigInt value = mod(head * powm(r, pk.n, pk.n_squared), pk.n_squared);
  return Ciphertext{value, scale};
}

// (1 + m*N) * r^N mod N^2 with fresh r.
inline Ciphertext enc(const PublicKey& pk, const BigInt& m, int scale,
                      Rng& rng) {
  require(m >= 0 && m < pk.n, ErrorCode::kDomain, "plaintext outside Z_N");
  return enc_with_randomness(pk, m, scale, sample_unit(pk, rng));
}

inline BigInt dec(const PrivateKey& sk, const PublicKey& pk,
                  const Ciphertext& c) {
  validate(pk, c);
  BigInt x = powm(c.value, sk.lambda, pk.n_squared);
  return mod(detail::l_function(x, pk.n) * sk.u, pk.n);
}

inline PartialDecryption pdec(const KeyShare& share, const PublicKey& pk,
                              const Ciphertext& c) {
  validate(pk, c);
  return PartialDecryption{powm(c.value, share.value, pk.n_squared),
                           share.pairing_id, share.index};
}

// L(a * b mod N^2) without any pairing check; nullopt when the numerator is
// not divisible by N. Exposed so tests can show one share does not decrypt.
inline std::optional<BigInt> combine_partials(const PublicKey& pk,
                                              const BigInt& a,
                                              const BigInt& b) {
  BigInt x = mod(a * b, pk.n_squared);
  BigInt numerator = x - 1;
  if (mpz_divisible_p(numerator.get_mpz_t(), pk.n.get_mpz_t()) == 0) {
    return std::nullopt;
  }
  return mod(numerator / pk.n, pk.n);
}

inline BigInt tdec(const PartialDecryption& pd1, const PartialDecryption& pd2,
                   const PublicKey& pk) {
  require(pd1.pairing_id == pd2.pairing_id, ErrorCode::kPairing,
          "partial decryptions come from different splits");
  require(pd1.share_index != pd2.share_index, ErrorCode::kPairing,
          "both partial decryptions use the same share");
  BigInt x = mod(pd1.value * pd2.value, pk.n_squared);
  return mod(detail::l_function(x, pk.n), pk.n);
}

inline Ciphertext padd(const PublicKey& pk, const Ciphertext& c1,
                       const Ciphertext& c2) {
  require(c1.scale == c2.scale, ErrorCode::kScale,
          "scale mismatch: " + std::to_string(c1.scale) + " vs " +
              std::to_string(c2.scale));
  return Ciphertext{mod(c1.value * c2.value, pk.n_squared), c1.scale};
}

// Scalar product; k is an unscaled integer in [0, N).
inline Ciphertext pmul(const PublicKey& pk, const Ciphertext& c,
                       const BigInt& k) {
  require(k >= 0 && k < pk.n, ErrorCode::kDomain, "scalar outside Z_N");
  return Ciphertext{powm(c.value, k, pk.n_squared), c.scale};
}

// [[-a]] as the inverse mod N^2; same plaintext as pmul(c, N - 1).
inline Ciphertext pneg(const PublicKey& pk, const Ciphertext& c) {
  BigInt inverse;
  require(invert(inverse, c.value, pk.n_squared),
          ErrorCode::kCorruptedCiphertext, "ciphertext is not invertible");
  return Ciphertext{inverse, c.scale};
}

inline Ciphertext psub(const PublicKey& pk, const Ciphertext& c1,
                       const Ciphertext& c2) {
  return padd(pk, c1, pneg(pk, c2));
}

// Everything the key generation center produces. The server split is shared
// between CSP (first) and SP (second); the participant split between the
// participants (first) and SP (second).
struct KeyMaterial {
  PublicKey pk;
  PrivateKey sk;
  SplitKey server_split;
  SplitKey participant_split;

  const KeyShare& csp_share() const { return server_split.first; }
  const KeyShare& sp_server_share() const { return server_split.second; }
  const KeyShare& participant_share() const { return participant_split.first; }
  const KeyShare& sp_participant_share() const {
    return participant_split.second;
  }
};

struct KeyMaterialOptions {
  KeygenOptions keygen;
  SplitMode server_split = SplitMode::kUniform;
  SplitMode participant_split = SplitMode::kUniform;
};

inline KeyMaterial generate_key_material(unsigned zeta, Rng& rng,
                                         KeyMaterialOptions options = {}) {
  KeyPair keys = keygen(zeta, rng, options.keygen);
  SplitKey server = split_key(keys.sk, keys.pk, options.server_split, rng);
  SplitKey participant =
      split_key(keys.sk, keys.pk, options.participant_split, rng);
  return KeyMaterial{keys.pk, keys.sk, server, participant};
}

inline constexpr std::uint8_t kKeyFormatVersion = 1;

inline Bytes serialize_key_material(const KeyMaterial& km) {
  ByteWriter w;
  w.u8(kKeyFormatVersion);
  w.u32(km.pk.zeta);
  w.big(km.pk.n);
  w.big(km.sk.lambda);
  w.big(km.sk.u);
  for (const SplitKey* split : {&km.server_split, &km.participant_split}) {
    w.u64(split->first.pairing_id);
    w.big(split->first.value);
    w.big(split->second.value);
  }
  return std::move(w).bytes();
}

inline KeyMaterial deserialize_key_material(std::span<const std::uint8_t> in) {
  ByteReader r(in);
  require(r.u8() == kKeyFormatVersion, ErrorCode::kCodec,
          "unsupported key format version");
  unsigned zeta = r.u32();
  BigInt n = r.big();
  require(n > 3 && mpz_odd_p(n.get_mpz_t()), ErrorCode::kCodec,
          "invalid modulus");
  KeyMaterial km;
  km.pk = PublicKey::from_modulus(n, zeta);
  km.sk.lambda = r.big();
  km.sk.u = r.big();
  for (SplitKey* split : {&km.server_split, &km.participant_split}) {
    std::uint64_t id = r.u64();
    split->first = KeyShare{r.big(), id, 1};
    split->second = KeyShare{r.big(), id, 2};
  }
  require(r.done(), ErrorCode::kCodec, "trailing bytes in key material");
  require(mod(km.sk.lambda * km.sk.u, km.pk.n) == 1, ErrorCode::kCodec,
          "inconsistent private key");
  return km;
}

inline Bytes serialize_ciphertext(const Ciphertext& c) {
  require(c.scale >= 0 && c.scale <= 127, ErrorCode::kScale,
          "scale does not fit a signed byte");
  ByteWriter w;
  w.big(c.value);
  w.u8(static_cast<std::uint8_t>(static_cast<std::int8_t>(c.scale)));
  return std::move(w).bytes();
}

inline Ciphertext deserialize_ciphertext(std::span<const std::uint8_t> in) {
  ByteReader r(in);
  Ciphertext c;
  c.value = r.big();
  c.scale = static_cast<std::int8_t>(r.u8());
  require(r.done(), ErrorCode::kCodec, "trailing bytes in ciphertext");
  require(c.scale >= 0, ErrorCode::kCodec, "negative scale");
  return c;
}

}  // namespace crowdfl

#endif  // CROWDFL_PCTD_HPP_
