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

// Reward allocation. Participant i gets
//
//   d_i  = sum_j (w_ij - avg_j)^2,   d'_i = d_i + eps,   eps = 10^-L
//   w_i  = (delta_i / sum delta) * (sum_k d'_k) / d'_i
//   mu_i = b_t * w_i / sum_k w_k
//
// so models closer to the average and larger datasets earn more, and the
// payouts sum to the round budget b_t. The encrypted form runs the same chain
// on ciphertexts with secure multiplication and division; rounding only ever
// floors, so the encrypted payouts never exceed the budget.
//
// Scale chain (10^s factor carried by each value):
//   model, avg         L, 2L      d_ij        2L
//   d_i, d'_i, Omega   4L         w_up, w_dn  4L
//   w_i                L          b_t         L
//   b_t * w_i          2L         W = sum w   2L (lifted by 10^L)
//   mu_i               L

#ifndef CROWDFL_REWARDS_HPP_
#define CROWDFL_REWARDS_HPP_

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "crowdfl/bigint.hpp"
#include "crowdfl/error.hpp"
#include "crowdfl/fedavg.hpp"
#include "crowdfl/fixedpoint.hpp"
#include "crowdfl/pctd.hpp"
#include "crowdfl/protocols.hpp"

namespace crowdfl {

struct RewardConfig {
  Decimal b_t = 36;
  int L = 6;

  Decimal epsilon() const {
    return Decimal(BigInt(1), pow10(L));
  }

  void validate() const {
    require(b_t > 0, ErrorCode::kConfig, "budget must be positive");
    require(L >= 0, ErrorCode::kConfig, "L must be non-negative");
  }
};

struct RewardPlain {
  std::vector<Decimal> distance;  // d_i, unguarded
  std::vector<Decimal> weight;    // w_i
  std::vector<Decimal> reward;    // mu_i
};

// Exact rational evaluation.
inline RewardPlain reward_plain(const std::vector<ModelVector>& models,
                                const std::vector<Decimal>& avg,
                                const RewardConfig& cfg) {
  cfg.validate();
  require(!models.empty(), ErrorCode::kDomain, "no participants");
  const Decimal eps = cfg.epsilon();
  RewardPlain out;
  Decimal omega = 0;
  Decimal pi = 0;
  for (const ModelVector& m : models) {
    require(m.dim() == avg.size(), ErrorCode::kShape, "model/average dimension mismatch");
    Decimal d = 0;
    for (std::size_t j = 0; j < avg.size(); ++j) {
      Decimal diff = m.weights[j] - avg[j];
      d += diff * diff;
    }
    d.canonicalize();
    out.distance.push_back(d);
    omega += d + eps;
    pi += Decimal(static_cast<unsigned long>(m.delta));
  }
  Decimal total_w = 0;
  for (std::size_t i = 0; i < models.size(); ++i) {
    Decimal w = Decimal(static_cast<unsigned long>(models[i].delta)) / pi * omega /
                (out.distance[i] + eps);
    w.canonicalize();
    out.weight.push_back(w);
    total_w += w;
  }
  for (const Decimal& w : out.weight) {
    Decimal mu = cfg.b_t * w / total_w;
    mu.canonicalize();
    out.reward.push_back(mu);
  }
  return out;
}

// Worst-case integer magnitude anywhere in the encrypted chain, for models
// bounded by |w| <= weight_bound and datasets of at most max_delta samples.
inline BigInt reward_magnitude_bound(std::size_t n, std::size_t dim,
                                     const BigInt& weight_bound,
                                     const BigInt& max_delta,
                                     const Decimal& b_t, int L) {
  const BigInt n_big(static_cast<unsigned long>(n));
  const BigInt diff = 2 * weight_bound * pow10(2 * L);
  const BigInt d_max = BigInt(static_cast<unsigned long>(dim)) * diff * diff + pow10(3 * L);
  const BigInt omega_max = n_big * d_max;
  const BigInt up_max = max_delta * omega_max;
  const BigInt dn_max = n_big * max_delta * d_max;
  // w_i <= omega / eps, at scale L.
  const BigInt w_max = floor_div(omega_max, pow10(2 * L)) + 1;
  const BigInt b_int = floor_scaled(b_t, L) + 1;
  const BigInt candidates[] = {dn_max, BigInt(b_int * w_max),
                               BigInt(n_big * w_max * pow10(L))};
  BigInt worst = up_max;
  for (const BigInt& v : candidates) {
    if (v > worst) worst = v;
  }
  return worst;
}

struct RewardParticipant {
  std::uint64_t participant_id = 0;
  std::vector<Ciphertext> enc_model;  // [[w + C]], scale L
  Ciphertext enc_delta;               // [[delta]], scale 0
};

namespace detail {

template <typename F>
auto reward_step(const char* what, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    throw e.with_context(std::string("reward ") + what);
  }
}

}  // namespace detail

// Encrypted rewards for one round. enc_avg is [[avg + C]] at scale 2L as
// produced by the averaging division; enc_budget is [[b_t]] at scale L.
// Returns [[mu_i]] at scale L in participant order.
inline std::vector<Ciphertext> prirwd(const std::vector<RewardParticipant>& parts,
                                      const std::vector<Ciphertext>& enc_avg,
                                      const Ciphertext& enc_budget,
                                      const FixedPointCodec& codec,
                                      SecureOps& ops) {
  const PublicKey& pk = ops.pk();
  const int L = codec.L;
  require(!parts.empty(), ErrorCode::kEmptyRound, "no participants to reward");
  require(enc_budget.scale == L, ErrorCode::kScale, "budget must be at scale L");
  for (const Ciphertext& c : enc_avg) {
    require(c.scale == 2 * L, ErrorCode::kScale, "average must be at scale 2L");
  }
  const std::size_t n = parts.size();

  // d_i = sum_j (model_ij - avg_j)^2, then d'_i = d_i + eps.
  std::vector<Ciphertext> d_guarded(n);
  const Ciphertext eps = enc(pk, pow10(3 * L), 4 * L, ops.rng());
  for (std::size_t i = 0; i < n; ++i) {
    require(parts[i].enc_model.size() == enc_avg.size(), ErrorCode::kShape,
            "participant " + std::to_string(parts[i].participant_id) +
                ": model dimension mismatch");
    std::vector<ProductInput> squares;
    for (std::size_t j = 0; j < enc_avg.size(); ++j) {
      Ciphertext d = psub(pk, rescale(pk, codec, parts[i].enc_model[j], 2 * L), enc_avg[j]);
      squares.push_back({d, d});
    }
    std::vector<Ciphertext> sq =
        detail::reward_step("squared distance", [&] { return ops.smul(squares); });
    Ciphertext sum = eps;
    for (const Ciphertext& s : sq) sum = padd(pk, sum, s);
    d_guarded[i] = sum;
  }

  // pi = sum delta, Omega = sum d'.
  Ciphertext pi = parts[0].enc_delta;
  Ciphertext omega = d_guarded[0];
  for (std::size_t i = 1; i < n; ++i) {
    pi = padd(pk, pi, parts[i].enc_delta);
    omega = padd(pk, omega, d_guarded[i]);
  }

  // w_i = (delta_i * Omega) / (pi * d'_i).
  std::vector<Ciphertext> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    Ciphertext down = detail::reward_step(
        "weight denominator", [&] { return ops.smul(pi, d_guarded[i]); });
    Ciphertext up = detail::reward_step(
        "weight numerator", [&] { return ops.smul(parts[i].enc_delta, omega); });
    w[i] = detail::reward_step("weight", [&] { return ops.sdiv(up, down); });
  }

  std::vector<Ciphertext> budget_share(n);
  for (std::size_t i = 0; i < n; ++i) {
    budget_share[i] = detail::reward_step(
        "budget product", [&] { return ops.smul(enc_budget, w[i]); });
  }

  // W = (product of [[w_i]])^(10^L), lifting sum w from scale L to 2L.
  Ciphertext total = w[0];
  for (std::size_t i = 1; i < n; ++i) total = padd(pk, total, w[i]);
  total = rescale(pk, codec, total, 2 * L);

  std::vector<Ciphertext> mu(n);
  for (std::size_t i = 0; i < n; ++i) {
    mu[i] = detail::reward_step(
        "reward", [&] { return ops.sdiv(budget_share[i], total); });
  }
  return mu;
}

inline ReleasedValue release_reward(const PublicKey& pk,
                                    const KeyShare& sp_participant_share,
                                    const Ciphertext& enc_mu) {
  return {enc_mu, pdec(sp_participant_share, pk, enc_mu)};
}

inline Decimal participant_reward(const PublicKey& pk, const KeyShare& participant_share,
                                  const FixedPointCodec& codec, const ReleasedValue& r) {
  return decrypt_released(pk, participant_share, codec, r);
}

// Budget held by SP on the requester's behalf. Each round's budget is debited
// once, when the first reward of that round is released; every participant is
// released to at most once per round.
class RewardLedger {
 public:
  explicit RewardLedger(Decimal prepaid) : prepaid_(std::move(prepaid)) {
    require(prepaid_ >= 0, ErrorCode::kLedger, "negative prepayment");
  }

  void record_release(std::uint32_t round, std::uint64_t participant_id,
                      const Decimal& round_budget) {
    auto& released = released_[round];
    require(released.count(participant_id) == 0, ErrorCode::kLedger,
            "reward for participant " + std::to_string(participant_id) +
                " in round " + std::to_string(round) + " already released");
    if (released.empty()) {
      require(paid_ + round_budget <= prepaid_, ErrorCode::kLedger,
              "round " + std::to_string(round) + " would overdraw the prepaid budget");
      paid_ += round_budget;
    }
    released.insert(participant_id);
  }

  const Decimal& prepaid() const { return prepaid_; }
  const Decimal& paid() const { return paid_; }
  Decimal remaining() const { return prepaid_ - paid_; }

 private:
  Decimal prepaid_;
  Decimal paid_ = 0;
  std::map<std::uint32_t, std::set<std::uint64_t>> released_;
};

}  // namespace crowdfl

#endif  // CROWDFL_REWARDS_HPP_
