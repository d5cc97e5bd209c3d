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

// Secure division and secure multiplication between the sensing platform (SP,
// holds one share of the server split) and the computation service provider
// (CSP, holds the other share).
//
// Each protocol is three steps: SP masks and partially decrypts (step 1), CSP
// completes decryption of the masked values, computes, re-encrypts (step 2),
// SP strips the masks homomorphically (step 3). One request carries a batch of
// independent items so that a whole model vector costs one message each way.
//
// Secure division returns [[floor(x / y * 10^L)]] for x, y in (0, 2^kappa),
// at scale sx - sy + L. Secure multiplication returns [[x * y mod N]] at scale
// sx + sy, exact for signed inputs whose product stays below N/2.

#ifndef CROWDFL_PROTOCOLS_HPP_
#define CROWDFL_PROTOCOLS_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "crowdfl/bigint.hpp"
#include "crowdfl/error.hpp"
#include "crowdfl/pctd.hpp"
#include "crowdfl/wire.hpp"

namespace crowdfl {

struct MaskingParams {
  int sigma = 80;
  int kappa = 32;
  int L = 6;

  // Lower end of the division mask r. The bound 10^L * 2^(2 kappa) keeps
  // 10^L * e / r below 2^-kappa, so removing floor(10^L * e / r) never
  // disturbs floor(10^L * x / y).
  BigInt division_mask_lower() const {
    BigInt base = pow2(kappa + 1);
    BigInt exact = pow10(L) * pow2(2 * kappa);
    return exact > base ? exact : base;
  }

  // 2^(log2 N - kappa - sigma - 2), with log2 N rounded down.
  BigInt division_mask_upper(const PublicKey& pk) const {
    long exponent = static_cast<long>(bit_length(pk.n)) - 1 - kappa - sigma - 2;
    return exponent > 0 ? pow2(exponent) : BigInt(1);
  }

  void validate(const PublicKey& pk) const {
    require(sigma >= 2 && kappa >= 2 && L >= 0, ErrorCode::kConfig,
            "sigma and kappa must be at least 2, L non-negative");
    require(division_mask_upper(pk) > 4 * division_mask_lower(), ErrorCode::kConfig,
            "division mask interval is empty: N has " +
                std::to_string(bit_length(pk.n)) + " bits, kappa=" +
                std::to_string(kappa) + " sigma=" + std::to_string(sigma) +
                " L=" + std::to_string(L));
    require(pow2(2 * kappa + 2) < pk.n, ErrorCode::kConfig,
            "2^(2 kappa + 2) must be below N");
  }
};

// r = a * b with odd a, b, drawn until lo <= r < hi.
inline BigInt random_composite(const BigInt& lo, const BigInt& hi, Rng& rng) {
  require(hi > 4 * lo, ErrorCode::kDomain, "composite interval too narrow");
  const unsigned long half = bit_length(lo) / 2 + 1;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    BigInt a = rng.exact_bits(half) | 1;
    BigInt b_min = floor_div(lo + a - 1, a);
    BigInt b_max = floor_div(hi - 1, a);
    if (b_min < 3 || b_max <= b_min) continue;
    BigInt b = rng.between(b_min, b_max + 1) | 1;
    BigInt r = a * b;
    if (r >= lo && r < hi) return r;
  }
  fail(ErrorCode::kGeneration, "could not draw a composite mask");
}

// Called with every plaintext a protocol party recovers, tagged by purpose.
using DecryptionObserver =
    std::function<void(std::string_view purpose, const BigInt& plaintext)>;

// SP's connection to CSP. One call carries one request and yields its response.
class CspLink {
 public:
  virtual ~CspLink() = default;
  virtual WireMessage exchange(const WireMessage& request) = 0;
};

// CSP side of both protocols (step 2). Stateless across sessions except for
// replay detection.
class ComputeServer {
 public:
  ComputeServer(PublicKey pk, KeyShare share, Rng rng,
                DecryptionObserver observer = {})
      : pk_(std::move(pk)),
        share_(std::move(share)),
        rng_(std::move(rng)),
        observer_(std::move(observer)) {}

  WireMessage handle(const WireMessage& request) {
    switch (request.type) {
      case MessageType::kSdivRequest: return sdiv_step2(request);
      case MessageType::kSmulRequest: return smul_step2(request);
      default:
        fail(ErrorCode::kStateMachine,
             "CSP cannot handle " +
                 std::string(message_type_name(request.type)));
    }
  }

  WireMessage sdiv_step2(const WireMessage& request) {
    require(request.type == MessageType::kSdivRequest, ErrorCode::kStateMachine,
            "expected SDIV_REQ");
    claim_session(request.session_id);
    FieldReader in(request);
    check_pairing(in.small(UINT64_MAX));
    const int L = static_cast<int>(in.small(4096));
    const std::uint64_t count = in.small(1u << 20);
    require(in.remaining() == 4 * count, ErrorCode::kCodec,
            "SDIV_REQ item count mismatch");
    const BigInt factor = pow10(L);
    WireMessage out{MessageType::kSdivResponse, request.session_id,
                    request.round, {}};
    out.fields.push_back(BigInt(static_cast<unsigned long>(count)));
    for (std::uint64_t i = 0; i < count; ++i) {
      const BigInt& x_masked_c = in.big();
      BigInt x_masked = finish_decryption(x_masked_c, in.big(), "sdiv-masked-x");
      const BigInt& y_masked_c = in.big();
      BigInt y_masked = finish_decryption(y_masked_c, in.big(), "sdiv-masked-y");
      require(y_masked != 0, ErrorCode::kCorruptedSession,
              "masked divisor decrypts to zero");
      BigInt quotient = floor_div(x_masked * factor, y_masked);
      require(quotient < pk_.n, ErrorCode::kCorruptedSession,
              "masked quotient exceeds N");
      out.fields.push_back(enc(pk_, quotient, 0, rng_).value);
    }
    return out;
  }

  WireMessage smul_step2(const WireMessage& request) {
    require(request.type == MessageType::kSmulRequest, ErrorCode::kStateMachine,
            "expected SMUL_REQ");
    claim_session(request.session_id);
    FieldReader in(request);
    check_pairing(in.small(UINT64_MAX));
    const std::uint64_t count = in.small(1u << 20);
    require(in.remaining() == 4 * count, ErrorCode::kCodec,
            "SMUL_REQ item count mismatch");
    WireMessage out{MessageType::kSmulResponse, request.session_id,
                    request.round, {}};
    out.fields.push_back(BigInt(static_cast<unsigned long>(count)));
    for (std::uint64_t i = 0; i < count; ++i) {
      const BigInt& x_masked_c = in.big();
      BigInt x_masked = finish_decryption(x_masked_c, in.big(), "smul-masked-x");
      const BigInt& y_masked_c = in.big();
      BigInt y_masked = finish_decryption(y_masked_c, in.big(), "smul-masked-y");
      BigInt product = mod(x_masked * y_masked, pk_.n);
      out.fields.push_back(enc(pk_, product, 0, rng_).value);
    }
    return out;
  }

  const PublicKey& public_key() const { return pk_; }

 private:
  void claim_session(std::uint64_t id) {
    require(seen_.insert(id).second, ErrorCode::kStateMachine,
            "session " + std::to_string(id) + " was already served");
  }

  void check_pairing(std::uint64_t pairing_id) const {
    require(pairing_id == share_.pairing_id, ErrorCode::kPairing,
            "SP partial decryptions come from a different split");
  }

  BigInt finish_decryption(const BigInt& ciphertext, const BigInt& sp_partial,
                           std::string_view purpose) {
    Ciphertext c{ciphertext, 0};
    PartialDecryption mine = pdec(share_, pk_, c);
    PartialDecryption theirs{sp_partial, share_.pairing_id,
                             share_.index == 1 ? 2 : 1};
    BigInt plain = tdec(theirs, mine, pk_);
    if (observer_) observer_(purpose, plain);
    return plain;
  }

  PublicKey pk_;
  KeyShare share_;
  Rng rng_;
  DecryptionObserver observer_;
  std::set<std::uint64_t> seen_;
};

// In-process link. Requests and responses still go through the byte codec.
class LocalCspLink : public CspLink {
 public:
  explicit LocalCspLink(ComputeServer& server) : server_(server) {}

  WireMessage exchange(const WireMessage& request) override {
    WireMessage delivered = decode_message(encode_message(request));
    WireMessage response = server_.handle(delivered);
    ++exchanges_;
    return decode_message(encode_message(response));
  }

  std::uint64_t exchanges() const { return exchanges_; }

 private:
  ComputeServer& server_;
  std::uint64_t exchanges_ = 0;
};

enum class SessionStage { kFresh, kSent, kDone };

struct DivisionInput {
  Ciphertext numerator;
  Ciphertext denominator;
};

struct ProductInput {
  Ciphertext left;
  Ciphertext right;
};

namespace detail {

inline void check_response(const WireMessage& response, MessageType expected,
                           std::uint64_t session_id, std::size_t count) {
  require(response.type == expected, ErrorCode::kStateMachine,
          "unexpected response type " +
              std::string(message_type_name(response.type)));
  require(response.session_id == session_id, ErrorCode::kStateMachine,
          "response belongs to another session");
  require(response.fields.size() == count + 1 &&
              response.fields[0] == static_cast<unsigned long>(count),
          ErrorCode::kCodec, "response item count mismatch");
}

}  // namespace detail

// SP side of secure division. Single use: step1 once, then step3 once.
class SdivSession {
 public:
  struct Mask {
    BigInt r;      // random composite
    BigInt alpha;  // sigma-bit
    BigInt e;      // kappa-bit
    int output_scale = 0;
  };

  SdivSession(const PublicKey& pk, const KeyShare& sp_share,
              const MaskingParams& params, std::uint64_t session_id,
              std::uint32_t round = 0)
      : pk_(pk),
        share_(sp_share),
        params_(params),
        id_(session_id),
        round_(round) {}

  WireMessage step1(std::span<const DivisionInput> items, Rng& rng) {
    require(stage_ == SessionStage::kFresh, ErrorCode::kStateMachine,
            "SDIV step 1 already ran for this session");
    const BigInt lo = params_.division_mask_lower();
    const BigInt hi = params_.division_mask_upper(pk_);
    WireMessage out{MessageType::kSdivRequest, id_, round_, {}};
    out.fields.push_back(BigInt(static_cast<unsigned long>(share_.pairing_id)));
    out.fields.push_back(BigInt(params_.L));
    out.fields.push_back(BigInt(static_cast<unsigned long>(items.size())));
    for (const DivisionInput& item : items) {
      require(item.numerator.scale >= item.denominator.scale, ErrorCode::kScale,
              "numerator scale must not be below denominator scale");
      Mask mask{random_composite(lo, hi, rng), rng.bits(params_.sigma),
                rng.bits(params_.kappa),
                item.numerator.scale - item.denominator.scale + params_.L};
      // X = [[x]]^r * [[y]]^(r alpha + e) = [[r x + (r alpha + e) y]]
      // Y = [[y]]^r = [[r y]]
      BigInt big_x = mod(powm(item.numerator.value, mask.r, pk_.n_squared) *
                             powm(item.denominator.value,
                                  mask.r * mask.alpha + mask.e, pk_.n_squared),
                         pk_.n_squared);
      BigInt big_y = powm(item.denominator.value, mask.r, pk_.n_squared);
      out.fields.push_back(big_x);
      out.fields.push_back(pdec(share_, pk_, Ciphertext{big_x, 0}).value);
      out.fields.push_back(big_y);
      out.fields.push_back(pdec(share_, pk_, Ciphertext{big_y, 0}).value);
      masks_.push_back(std::move(mask));
    }
    stage_ = SessionStage::kSent;
    return out;
  }

  std::vector<Ciphertext> step3(const WireMessage& response, Rng& rng) {
    require(stage_ == SessionStage::kSent, ErrorCode::kStateMachine,
            stage_ == SessionStage::kFresh ? "SDIV step 3 before step 1"
                                           : "SDIV session already finished");
    detail::check_response(response, MessageType::kSdivResponse, id_,
                           masks_.size());
    const BigInt factor = pow10(params_.L);
    std::vector<Ciphertext> out;
    out.reserve(masks_.size());
    for (std::size_t i = 0; i < masks_.size(); ++i) {
      const Mask& mask = masks_[i];
      Ciphertext masked{response.fields[i + 1], mask.output_scale};
      validate(pk_, masked);
      // Remove alpha * 10^L and floor(e * 10^L / r) with one fresh encryption
      // of their negation; same plaintext as [[alpha]]^(N - 10^L) *
      // [[e / r]]^(N - 1).
      BigInt noise = mask.alpha * factor + floor_div(mask.e * factor, mask.r);
      Ciphertext correction = enc(pk_, mod(-noise, pk_.n), mask.output_scale, rng);
      out.push_back(padd(pk_, masked, correction));
    }
    stage_ = SessionStage::kDone;
    return out;
  }

  SessionStage stage() const { return stage_; }
  std::uint64_t id() const { return id_; }
  const std::vector<Mask>& masks() const { return masks_; }

 private:
  const PublicKey& pk_;
  const KeyShare& share_;
  MaskingParams params_;
  std::uint64_t id_;
  std::uint32_t round_;
  SessionStage stage_ = SessionStage::kFresh;
  std::vector<Mask> masks_;
};

// SP side of secure multiplication. Single use.
class SmulSession {
 public:
  struct Mask {
    BigInt r1;
    BigInt r2;
    int output_scale = 0;
  };

  SmulSession(const PublicKey& pk, const KeyShare& sp_share,
              const MaskingParams& params, std::uint64_t session_id,
              std::uint32_t round = 0)
      : pk_(pk),
        share_(sp_share),
        params_(params),
        id_(session_id),
        round_(round) {}

  WireMessage step1(std::span<const ProductInput> items, Rng& rng) {
    require(stage_ == SessionStage::kFresh, ErrorCode::kStateMachine,
            "SMUL step 1 already ran for this session");
    WireMessage out{MessageType::kSmulRequest, id_, round_, {}};
    out.fields.push_back(BigInt(static_cast<unsigned long>(share_.pairing_id)));
    out.fields.push_back(BigInt(static_cast<unsigned long>(items.size())));
    for (const ProductInput& item : items) {
      // sigma-bit masks with the top bit set, so r >= 2^(sigma - 1).
      Mask mask{rng.exact_bits(params_.sigma), rng.exact_bits(params_.sigma),
                item.left.scale + item.right.scale};
      Ciphertext big_x = padd(pk_, item.left,
                              enc(pk_, mask.r1, item.left.scale, rng));
      Ciphertext big_y = padd(pk_, item.right,
                              enc(pk_, mask.r2, item.right.scale, rng));
      out.fields.push_back(big_x.value);
      out.fields.push_back(pdec(share_, pk_, big_x).value);
      out.fields.push_back(big_y.value);
      out.fields.push_back(pdec(share_, pk_, big_y).value);
      masks_.push_back(std::move(mask));
      inputs_.push_back(item);
    }
    stage_ = SessionStage::kSent;
    return out;
  }

  std::vector<Ciphertext> step3(const WireMessage& response, Rng& rng) {
    require(stage_ == SessionStage::kSent, ErrorCode::kStateMachine,
            stage_ == SessionStage::kFresh ? "SMUL step 3 before step 1"
                                           : "SMUL session already finished");
    detail::check_response(response, MessageType::kSmulResponse, id_,
                           masks_.size());
    std::vector<Ciphertext> out;
    out.reserve(masks_.size());
    for (std::size_t i = 0; i < masks_.size(); ++i) {
      const Mask& mask = masks_[i];
      const ProductInput& item = inputs_[i];
      Ciphertext masked{response.fields[i + 1], mask.output_scale};
      validate(pk_, masked);
      // [[r2 x]] * [[r1 y]] * [[r1 r2]], removed in one inversion; same
      // plaintext as raising each to N - 1.
      BigInt noise = mod(powm(item.left.value, mask.r2, pk_.n_squared) *
                             powm(item.right.value, mask.r1, pk_.n_squared),
                         pk_.n_squared);
      noise = mod(noise * enc(pk_, mod(mask.r1 * mask.r2, pk_.n), 0, rng).value,
                  pk_.n_squared);
      out.push_back(psub(pk_, masked, Ciphertext{noise, mask.output_scale}));
    }
    stage_ = SessionStage::kDone;
    return out;
  }

  SessionStage stage() const { return stage_; }
  std::uint64_t id() const { return id_; }
  const std::vector<Mask>& masks() const { return masks_; }

 private:
  const PublicKey& pk_;
  const KeyShare& share_;
  MaskingParams params_;
  std::uint64_t id_;
  std::uint32_t round_;
  SessionStage stage_ = SessionStage::kFresh;
  std::vector<Mask> masks_;
  std::vector<ProductInput> inputs_;
};

// SP-side driver: runs whole sessions over a link, numbering them.
class SecureOps {
 public:
  SecureOps(PublicKey pk, KeyShare sp_share, MaskingParams params,
            CspLink& link, Rng rng)
      : pk_(std::move(pk)),
        share_(std::move(sp_share)),
        params_(params),
        link_(link),
        rng_(std::move(rng)) {
    params_.validate(pk_);
    // Random starting id so independent drivers sharing one CSP do not clash.
    next_session_ = rng_.next_u64() >> 1;
  }

  std::vector<Ciphertext> sdiv(std::span<const DivisionInput> items) {
    if (items.empty()) return {};
    SdivSession session(pk_, share_, params_, next_session_++, round_);
    WireMessage request = session.step1(items, rng_);
    return session.step3(call(request), rng_);
  }

  Ciphertext sdiv(const Ciphertext& x, const Ciphertext& y) {
    DivisionInput item{x, y};
    return sdiv(std::span<const DivisionInput>(&item, 1)).front();
  }

  std::vector<Ciphertext> smul(std::span<const ProductInput> items) {
    if (items.empty()) return {};
    SmulSession session(pk_, share_, params_, next_session_++, round_);
    WireMessage request = session.step1(items, rng_);
    return session.step3(call(request), rng_);
  }

  Ciphertext smul(const Ciphertext& x, const Ciphertext& y) {
    ProductInput item{x, y};
    return smul(std::span<const ProductInput>(&item, 1)).front();
  }

  void set_round(std::uint32_t round) { round_ = round; }

  const PublicKey& pk() const { return pk_; }
  const MaskingParams& params() const { return params_; }
  Rng& rng() { return rng_; }

 private:
  WireMessage call(const WireMessage& request) {
    try {
      return link_.exchange(request);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kCodec || e.code() == ErrorCode::kIo) {
        throw Error(ErrorCode::kProtocolAbort, e.what());
      }
      throw;
    }
  }

  PublicKey pk_;
  KeyShare share_;
  MaskingParams params_;
  CspLink& link_;
  Rng rng_;
  std::uint64_t next_session_ = 0;
  std::uint32_t round_ = 0;
};

}  // namespace crowdfl

#endif  // CROWDFL_PROTOCOLS_HPP_
