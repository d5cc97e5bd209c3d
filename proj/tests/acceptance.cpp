// Copyright 2026 The CrowdFL Authors.
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails. Oracles here are computed independently of the
// library code under test (machine integers, hand-rolled rationals).

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <iostream>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "crowdfl/crowdfl.hpp"

namespace {

using namespace crowdfl;
using i128 = __int128;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string str(i128 v) {
  if (v == 0) return "0";
  bool neg = v < 0;
  unsigned __int128 m = neg ? static_cast<unsigned __int128>(-v) : static_cast<unsigned __int128>(v);
  std::string s;
  while (m > 0) {
    s.push_back(static_cast<char>('0' + static_cast<int>(m % 10)));
    m /= 10;
  }
  if (neg) s.push_back('-');
  return {s.rbegin(), s.rend()};
}

BigInt big(i128 v) { return BigInt(str(v), 10); }

i128 floor_div128(i128 a, i128 b) {
  i128 q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

Decimal ratio(const BigInt& num, const BigInt& den) {
  Decimal d(num, den);
  d.canonicalize();
  return d;
}

// SP, CSP and the link between them over one key set.
struct Env {
  KeyMaterial km;
  ComputeServer csp;
  LocalCspLink link;
  SecureOps ops;

  Env(KeyMaterial keys, MaskingParams params, std::uint64_t seed)
      : km(std::move(keys)),
        csp(km.pk, km.csp_share(), Rng(seed).fork("csp")),
        link(csp),
        ops(km.pk, km.sp_server_share(), params, link, Rng(seed).fork("sp")) {}
};

std::unique_ptr<Env> make_env(unsigned zeta, MaskingParams params, std::uint64_t seed) {
  Rng rng = Rng(seed).fork("kgc");
  KeyMaterial km = generate_key_material(zeta, rng, {.keygen = {.test_mode = zeta < 1024}});
  return std::make_unique<Env>(std::move(km), params, seed);
}

// ------------------------------------------------------------------ 1

Outcome pctd_algebra() {
  Outcome out;
  std::ostringstream detail;
  for (unsigned zeta : {16u, 512u}) {
    const auto start = Clock::now();
    Rng rng(100 + zeta);
    KeyMaterial km = generate_key_material(zeta, rng, {.keygen = {.test_mode = true}});
    const PublicKey& pk = km.pk;
    std::size_t fail_rt = 0, fail_th = 0, fail_add = 0, fail_mul = 0;
    for (int i = 0; i < 1000; ++i) {
      BigInt m1 = rng.below(pk.n), m2 = rng.below(pk.n), k = rng.below(pk.n);
      Ciphertext c1 = enc(pk, m1, 0, rng), c2 = enc(pk, m2, 0, rng);
      if (dec(km.sk, pk, c1) != m1) ++fail_rt;
      bool th = tdec(pdec(km.csp_share(), pk, c1), pdec(km.sp_server_share(), pk, c1), pk) == m1 &&
                tdec(pdec(km.sp_participant_share(), pk, c2),
                     pdec(km.participant_share(), pk, c2), pk) == m2;
      if (!th) ++fail_th;
      BigInt sum = m1 + m2;
      if (sum >= pk.n) sum -= pk.n;
      if (dec(km.sk, pk, padd(pk, c1, c2)) != sum) ++fail_add;
      BigInt prod = m1 * k;
      mpz_tdiv_r(prod.get_mpz_t(), prod.get_mpz_t(), pk.n.get_mpz_t());
      if (dec(km.sk, pk, pmul(pk, c1, k)) != prod) ++fail_mul;
    }
    const double secs = seconds_since(start);
    const std::size_t fails = fail_rt + fail_th + fail_add + fail_mul;
    detail << "zeta=" << zeta << " (N " << bit_length(pk.n) << " bits): failures roundtrip "
           << fail_rt << ", threshold " << fail_th << ", additive " << fail_add << ", scalar "
           << fail_mul << " over 1000 each, " << secs << " s; ";
    if (fails != 0) out.pass = false;
    if (zeta == 512 && secs >= 60) {
      out.pass = false;
      detail << "zeta=512 exceeded 60 s; ";
    }
  }
  out.detail = detail.str();
  return out;
}

// ------------------------------------------------------------------ 2

Outcome sdiv_exactness() {
  const auto start = Clock::now();
  auto env = make_env(512, MaskingParams{80, 32, 6}, 2);
  const PublicKey& pk = env->km.pk;
  Rng rng(22);
  std::size_t failures = 0, total = 0;
  for (int batch = 0; batch < 100; ++batch) {
    std::vector<DivisionInput> items;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> plain;
    for (int i = 0; i < 100; ++i) {
      std::uint64_t x = 1 + rng.uniform_index((1ULL << 32) - 1);
      std::uint64_t y = 1 + rng.uniform_index((1ULL << 32) - 1);
      plain.push_back({x, y});
      items.push_back({enc(pk, BigInt(static_cast<unsigned long>(x)), 0, rng),
                       enc(pk, BigInt(static_cast<unsigned long>(y)), 0, rng)});
    }
    std::vector<Ciphertext> q = env->ops.sdiv(items);
    for (std::size_t i = 0; i < q.size(); ++i, ++total) {
      i128 want = static_cast<i128>(plain[i].first) * 1000000 / plain[i].second;
      if (dec(env->km.sk, pk, q[i]) != big(want) || q[i].scale != 6) ++failures;
    }
  }
  const double secs = seconds_since(start);
  Outcome out;
  out.pass = failures == 0 && total == 10000 && secs < 300;
  out.detail = "zeta=512, L=6: " + std::to_string(failures) + " mismatches in " +
               std::to_string(total) + " divisions, " + std::to_string(secs) + " s (limit 300 s)";
  return out;
}

// ------------------------------------------------------------------ 3

Outcome smul_exactness() {
  const auto start = Clock::now();
  auto env = make_env(512, MaskingParams{80, 32, 0}, 3);
  const PublicKey& pk = env->km.pk;
  FixedPointCodec codec = FixedPointCodec::make(0, 32, pk.n);
  Rng rng(33);
  const std::int64_t span = (std::int64_t{1} << 33) - 1;  // values in (-2^32, 2^32)
  std::size_t failures = 0, total = 0;
  for (int batch = 0; batch < 100; ++batch) {
    std::vector<ProductInput> items;
    std::vector<std::pair<std::int64_t, std::int64_t>> plain;
    for (int i = 0; i < 100; ++i) {
      std::int64_t x = static_cast<std::int64_t>(rng.uniform_index(span)) - ((std::int64_t{1} << 32) - 1);
      std::int64_t y = static_cast<std::int64_t>(rng.uniform_index(span)) - ((std::int64_t{1} << 32) - 1);
      plain.push_back({x, y});
      items.push_back({enc(pk, codec.encode_integer(BigInt(static_cast<long>(x))), 0, rng),
                       enc(pk, codec.encode_integer(BigInt(static_cast<long>(y))), 0, rng)});
    }
    std::vector<Ciphertext> p = env->ops.smul(items);
    for (std::size_t i = 0; i < p.size(); ++i, ++total) {
      i128 want = static_cast<i128>(plain[i].first) * plain[i].second;
      BigInt got = dec(env->km.sk, pk, p[i]);
      if (got > pk.n / 2) got -= pk.n;
      if (got != big(want)) ++failures;
    }
  }
  Outcome out;
  out.pass = failures == 0 && total == 10000;
  out.detail = "zeta=512: " + std::to_string(failures) + " mismatches in " +
               std::to_string(total) + " signed products, " +
               std::to_string(seconds_since(start)) + " s";
  return out;
}

// ------------------------------------------------------------------ 4

// Weights are integers at scale 10^L; returns floor(sum d w / sum d) per component.
std::vector<i128> int_average(const std::vector<std::vector<i128>>& w,
                              const std::vector<i128>& delta) {
  std::vector<i128> out(w[0].size());
  i128 total = 0;
  for (i128 d : delta) total += d;
  for (std::size_t j = 0; j < out.size(); ++j) {
    i128 s = 0;
    for (std::size_t i = 0; i < w.size(); ++i) s += delta[i] * w[i][j];
    out[j] = floor_div128(s, total);
  }
  return out;
}

Outcome prifedavg_oracle() {
  const int L = 6;
  auto env = make_env(256, MaskingParams{80, 64, L}, 4);
  const PublicKey& pk = env->km.pk;
  EncodingParams ep{FixedPointCodec::make(L, 64, pk.n), Decimal(101), Decimal(100)};
  const Decimal tol = ratio(1, pow10(L));
  Rng rng(44);
  std::size_t instances = 0, bad_oracle = 0, bad_int = 0, bad_perm = 0;
  for (std::size_t n : {2u, 5u, 10u}) {
    for (std::size_t dim : {1u, 8u}) {
      for (int t = 0; t < 50; ++t, ++instances) {
        std::vector<ModelVector> models;
        std::vector<std::vector<i128>> w_int;
        std::vector<i128> deltas;
        for (std::size_t i = 0; i < n; ++i) {
          ModelVector m;
          std::vector<i128> row;
          for (std::size_t j = 0; j < dim; ++j) {
            i128 v = static_cast<i128>(rng.uniform_index(200000001)) - 100000000;
            row.push_back(v);
            m.weights.push_back(ratio(big(v), pow10(L)));
          }
          m.delta = 1 + rng.uniform_index(100);
          deltas.push_back(static_cast<i128>(m.delta));
          w_int.push_back(row);
          models.push_back(std::move(m));
        }
        std::vector<EncryptedSubmission> subs;
        for (std::size_t i = 0; i < n; ++i) {
          subs.push_back(make_submission(pk, ep, models[i], i + 1, 1, false, rng));
        }
        auto decrypt_round = [&](const std::vector<std::size_t>& order) {
          RoundState state(pk, dim, 1);
          for (std::size_t i : order) state.accept(subs[i]);
          std::vector<Ciphertext> avg = prifedavg_round(state, env->ops);
          return participant_decrypt(pk, env->km.participant_share(), ep,
                                     release_average(pk, env->km.sp_participant_share(), avg));
        };
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::vector<Decimal> got = decrypt_round(order);
        std::vector<Decimal> plain = fedavg_plain(models, L);
        std::vector<i128> exact = int_average(w_int, deltas);
        bool ok_oracle = true, ok_int = true;
        for (std::size_t j = 0; j < dim; ++j) {
          Decimal diff = got[j] - plain[j];
          if (diff < 0) diff = -diff;
          if (diff > tol) ok_oracle = false;
          if (got[j] != ratio(big(exact[j]), pow10(L))) ok_int = false;
        }
        std::shuffle(order.begin(), order.end(), rng);
        if (decrypt_round(order) != got) ++bad_perm;
        if (!ok_oracle) ++bad_oracle;
        if (!ok_int) ++bad_int;
      }
    }
  }
  Outcome out;
  out.pass = bad_oracle == 0 && bad_int == 0 && bad_perm == 0 && instances == 300;
  out.detail = "zeta=256, n in {2,5,10}, dim in {1,8}, " + std::to_string(instances) +
               " instances: " + std::to_string(bad_oracle) + " beyond 10^-6 of the plaintext average, " +
               std::to_string(bad_int) + " differ from the integer oracle, " +
               std::to_string(bad_perm) + " permutation mismatches";
  return out;
}

// ------------------------------------------------------------------ 5

Outcome end_to_end_learning() {
  const int L = 6;
  const unsigned zeta = 512;
  const int kappa = 64;
  auto env = make_env(zeta, MaskingParams{80, kappa, L}, 5);
  const PublicKey& pk = env->km.pk;
  Rng data_rng(55);
  const std::vector<double> w_true = {1.5, -0.75, 0.5};
  std::vector<Participant> parts;
  for (std::uint64_t i = 1; i <= 5; ++i) {
    parts.push_back({i, synthetic_linear(w_true, 20, 0.05, data_rng)});
  }
  Dataset test = synthetic_linear(w_true, 200, 0.05, data_rng);
  TrainConfig cfg{0.05, 5, 2};
  std::vector<Decimal> init(w_true.size(), Decimal(0));
  EncodingParams ep{FixedPointCodec::make(L, kappa, pk.n), Decimal(101), Decimal(100)};
  TrainingKeys keys{pk, env->km.participant_share(), env->km.sp_participant_share()};
  Rng enc_rng(56);
  TrainingResult secure = run_training(parts, 5, cfg, init, ep, keys, env->ops, 57, enc_rng);
  TrainingResult plain = run_training_plain(parts, 5, cfg, init, L, 57);

  const Decimal tol = ratio(1, pow10(L));
  bool weights_ok = secure.final_model.size() == plain.final_model.size();
  for (std::size_t j = 0; weights_ok && j < plain.final_model.size(); ++j) {
    Decimal diff = secure.final_model[j] - plain.final_model[j];
    if (diff < 0) diff = -diff;
    weights_ok = diff <= tol;
  }
  LinearRegressionTrainer trainer;
  auto four = [](double v) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(4);
    s << v;
    return s.str();
  };
  const std::string loss_secure = four(trainer.loss(test, to_doubles(secure.final_model)));
  const std::string loss_plain = four(trainer.loss(test, to_doubles(plain.final_model)));
  const std::string loss_init = four(trainer.loss(test, to_doubles(init)));
  std::string model;
  for (const Decimal& w : secure.final_model) model += " " + format_decimal(w, L);
  Outcome out;
  out.pass = weights_ok && loss_secure == loss_plain && secure.round_averages == plain.round_averages;
  out.detail = "zeta=512, n=5, T=5, E=2, B=5: encrypted model" + model +
               (weights_ok ? " matches" : " differs from") + " the plaintext pipeline; test loss " +
               loss_secure + " vs " + loss_plain + " (initial " + loss_init + ")";
  return out;
}

// ------------------------------------------------------------------ 6

std::vector<Decimal> rational_average(const std::vector<ModelVector>& models) {
  std::vector<Decimal> sum(models[0].dim(), Decimal(0));
  Decimal total = 0;
  for (const ModelVector& m : models) {
    Decimal d(static_cast<unsigned long>(m.delta));
    for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += d * m.weights[j];
    total += d;
  }
  for (Decimal& v : sum) {
    v /= total;
    v.canonicalize();
  }
  return sum;
}

Outcome dropout_identities() {
  const int L = 6;
  auto env = make_env(256, MaskingParams{80, 64, L}, 6);
  const PublicKey& pk = env->km.pk;
  EncodingParams ep{FixedPointCodec::make(L, 64, pk.n), Decimal(101), Decimal(100)};
  const Decimal tol = ratio(1, pow10(L));
  Rng rng(66);
  std::size_t bad_closed = 0, bad_retransmit = 0, bad_zero = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng.uniform_index(7);
    const std::size_t dim = 1 + rng.uniform_index(4);
    const std::size_t k = 1 + rng.uniform_index(n - 1);
    std::vector<ModelVector> models;
    for (std::size_t i = 0; i < n; ++i) {
      ModelVector m;
      for (std::size_t j = 0; j < dim; ++j) {
        m.weights.push_back(ratio(rng.below(BigInt(200000001)) - 100000000, pow10(L)));
      }
      m.delta = 1 + rng.uniform_index(100);
      models.push_back(std::move(m));
    }
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<std::size_t> dropped(idx.begin(), idx.begin() + static_cast<long>(k));
    std::vector<std::size_t> kept_idx(idx.begin() + static_cast<long>(k), idx.end());

    // Closed form against the direct difference, both in exact rationals.
    DropoutReport rep = discard_delta(models, dropped);
    std::vector<ModelVector> kept;
    for (std::size_t i : kept_idx) kept.push_back(models[i]);
    std::vector<Decimal> full = rational_average(models), part = rational_average(kept);
    for (std::size_t j = 0; j < dim; ++j) {
      Decimal direct = part[j] - full[j];
      direct.canonicalize();
      if (rep.delta_closed[j] != direct || rep.delta_direct[j] != direct) {
        ++bad_closed;
        break;
      }
    }

    // Late models folded in one at a time reach the full-set average.
    std::vector<EncryptedSubmission> subs;
    for (std::size_t i = 0; i < n; ++i) {
      subs.push_back(make_submission(pk, ep, models[i], i + 1, 1, false, rng));
    }
    RoundState state(pk, dim, 1);
    for (std::size_t i : kept_idx) state.accept(subs[i]);
    std::vector<Ciphertext> avg = prifedavg_round(state, env->ops);
    for (std::size_t i : dropped) avg = retransmit_update(state, subs[i], env->ops);
    state.mark_released();
    std::vector<Decimal> got = participant_decrypt(
        pk, env->km.participant_share(), ep,
        release_average(pk, env->km.sp_participant_share(), avg));
    std::vector<Decimal> plain = fedavg_plain(models, L);
    for (std::size_t j = 0; j < dim; ++j) {
      Decimal diff = got[j] - plain[j];
      if (diff < 0) diff = -diff;
      if (diff > tol) {
        ++bad_retransmit;
        break;
      }
    }

    // Dropped models placed at the average of the kept ones leave it unchanged.
    std::vector<ModelVector> centred = models;
    for (std::size_t i : dropped) centred[i].weights = part;
    DropoutReport zero = discard_delta(centred, dropped);
    for (std::size_t j = 0; j < dim; ++j) {
      if (zero.delta_closed[j] != 0 || zero.delta_direct[j] != 0) {
        ++bad_zero;
        break;
      }
    }
  }
  Outcome out;
  out.pass = bad_closed == 0 && bad_retransmit == 0 && bad_zero == 0;
  out.detail = "zeta=256, 200 instances: closed form mismatches " + std::to_string(bad_closed) +
               ", retransmit beyond 10^-6 " + std::to_string(bad_retransmit) +
               ", non-zero shift for centred drops " + std::to_string(bad_zero);
  return out;
}

// ------------------------------------------------------------------ 7

struct RewardSetup {
  unsigned zeta = 0;
  int kappa = 0;
};

RewardSetup reward_setup(std::size_t n_max, std::size_t dim_max, const std::string& bound,
                         std::size_t delta_max) {
  sim::ExperimentConfig c;
  c.n = n_max;
  c.model_dim = dim_max;
  c.weight_bound = bound;
  c.samples_per_participant = delta_max;
  for (unsigned zeta : {256u, 512u, 1024u}) {
    c.zeta = zeta;
    try {
      c.validate();
      return {zeta, c.effective_kappa()};
    } catch (const Error&) {
    }
  }
  fail(ErrorCode::kConfig, "no key size fits the reward instances");
}

Outcome rewards_suite() {
  const int L = 6;
  const Decimal b_t = 36;
  const std::size_t n_max = 10, dim_max = 4, delta_max = 50;
  const RewardSetup rs = reward_setup(n_max, dim_max, "1", delta_max);
  auto env = make_env(rs.zeta, MaskingParams{80, rs.kappa, L}, 7);
  const PublicKey& pk = env->km.pk;
  EncodingParams ep{FixedPointCodec::make(L, rs.kappa, pk.n), Decimal(2), Decimal(1)};
  const Decimal unit = ratio(1, pow10(L));
  Rng rng(77);

  auto encrypted_rewards = [&](const std::vector<ModelVector>& models) {
    RoundState state(pk, models[0].dim(), 1);
    for (std::size_t i = 0; i < models.size(); ++i) {
      state.accept(make_submission(pk, ep, models[i], i + 1, 1, true, rng));
    }
    std::vector<Ciphertext> avg = prifedavg_round(state, env->ops);
    std::vector<RewardParticipant> parts;
    for (const EncryptedSubmission& s : state.accepted()) {
      parts.push_back({s.participant_id, s.enc_model, s.enc_delta});
    }
    Ciphertext budget = enc(pk, ep.codec.encode(b_t), L, rng);
    std::vector<Ciphertext> mu = prirwd(parts, avg, budget, ep.codec, env->ops);
    std::vector<Decimal> out;
    for (const Ciphertext& c : mu) {
      out.push_back(participant_reward(pk, env->km.participant_share(), ep.codec,
                                       release_reward(pk, env->km.sp_participant_share(), c)));
    }
    return out;
  };
  auto random_model = [&](std::size_t dim) {
    ModelVector m;
    for (std::size_t j = 0; j < dim; ++j) {
      m.weights.push_back(ratio(rng.below(BigInt(2000001)) - 1000000, pow10(L)));
    }
    m.delta = 1 + rng.uniform_index(delta_max);
    return m;
  };

  std::size_t bad_tol = 0, bad_sum = 0, bad_rank = 0;
  Decimal worst = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng.uniform_index(n_max - 1);
    const std::size_t dim = 1 + rng.uniform_index(dim_max);
    std::vector<ModelVector> models;
    for (std::size_t i = 0; i < n; ++i) models.push_back(random_model(dim));
    std::vector<Decimal> got = encrypted_rewards(models);
    RewardPlain oracle = reward_plain(models, fedavg_exact(models), {b_t, L});
    // Weight floors (n + 1 units of 10^-L relative to a total weight >= 1), the
    // 2L floor of the average (relative distance error <= 4 dim W 10^-L, twice),
    // and the final floor.
    const Decimal tol = b_t * unit * Decimal(static_cast<unsigned long>(n + 2 + 8 * dim)) + unit;
    Decimal sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      Decimal diff = got[i] - oracle.reward[i];
      if (diff < 0) diff = -diff;
      if (diff > worst) worst = diff;
      if (diff > tol) ++bad_tol;
      sum += got[i];
    }
    const Decimal lower = b_t * (1 - Decimal(static_cast<unsigned long>(n)) * unit * 10);
    if (!(sum > lower && sum <= b_t)) ++bad_sum;
    bool rank_ok = true;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (oracle.reward[i] > oracle.reward[j] && !(got[i] > got[j])) rank_ok = false;
      }
    }
    if (!rank_ok) ++bad_rank;
  }

  // Equal models, more data: strictly larger reward.
  std::size_t bad_claim = 0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 2 + rng.uniform_index(n_max - 1);
    const std::size_t dim = 1 + rng.uniform_index(dim_max);
    std::vector<ModelVector> models;
    for (std::size_t i = 0; i < n; ++i) models.push_back(random_model(dim));
    const std::size_t a = rng.uniform_index(n);
    std::size_t b = rng.uniform_index(n - 1);
    if (b >= a) ++b;
    models[b].weights = models[a].weights;
    models[b].delta = 1 + rng.uniform_index(delta_max - 1);
    models[a].delta = models[b].delta + 1 + rng.uniform_index(delta_max - models[b].delta);
    std::vector<Decimal> got = encrypted_rewards(models);
    if (!(got[a] > got[b])) ++bad_claim;
  }

  // Per-round budget of 36 over four participants and two rounds.
  sim::ExperimentConfig c;
  c.n = 4;
  c.T = 2;
  c.model_dim = 3;
  c.zeta = 512;
  c.E = 5;
  c.B = 10;
  c.b_t = "36";
  c.seed = 36;
  sim::MetricsReport run = sim::run_experiment(c);
  bool budget_ok = run.budget_prepaid == 72 && run.budget_paid == 72 && run.rewards_paid <= 72 &&
                   run.rewards.size() == 8 && run.audit.ok;
  for (std::uint32_t round = 1; round <= 2; ++round) {
    Decimal s = 0;
    for (const sim::RewardRow& row : run.rewards) {
      if (row.round == round) s += row.reward;
    }
    if (!(s <= 36 && s > 36 * (1 - Decimal(4) * unit * 10))) budget_ok = false;
  }

  Outcome out;
  out.pass = bad_tol == 0 && bad_sum == 0 && bad_rank == 0 && bad_claim == 0 && budget_ok;
  out.detail = "zeta=" + std::to_string(rs.zeta) + ", kappa=" + std::to_string(rs.kappa) +
               ", 100 instances (n<=10, dim<=4): tolerance misses " + std::to_string(bad_tol) +
               " (largest error " + format_decimal(worst, 8) + "), budget-sum misses " +
               std::to_string(bad_sum) + ", ranking mismatches " + std::to_string(bad_rank) +
               "; equal-model claim failures " + std::to_string(bad_claim) +
               " of 20; b_t=36 run paid " + format_decimal(run.rewards_paid, L) +
               " of " + format_decimal(run.budget_paid, L) + " debited" +
               (budget_ok ? "" : " (budget check failed)");
  return out;
}

// ------------------------------------------------------------------ 8

Outcome message_counts() {
  Outcome out;
  std::ostringstream detail;
  detail << "zeta=256, round 1 of T=2:";
  for (std::size_t n : {2u, 4u, 8u}) {
    sim::ExperimentConfig c;
    c.n = n;
    c.T = 2;
    c.zeta = 256;
    c.E = 1;
    c.B = 10;
    c.rewards = false;
    sim::MetricsReport r = sim::run_experiment(c);
    const auto sp = r.ledger.count(1, "fedavg", sim::kSpRole).total();
    const auto csp = r.ledger.count(1, "fedavg", sim::kCspRole).total();
    bool parts_ok = true;
    for (std::size_t i = 1; i <= n; ++i) {
      if (r.ledger.count(1, "fedavg", sim::participant_role(i)).total() != 2) parts_ok = false;
    }
    if (sp != 2 * n + 2 || csp != 2 || !parts_ok) out.pass = false;
    detail << " n=" << n << " SP " << sp << " (want " << 2 * n + 2 << "), CSP " << csp
           << ", participants " << (parts_ok ? "2 each" : "MISMATCH") << ";";
  }
  out.detail = detail.str();
  return out;
}

// ------------------------------------------------------------------ 9

Outcome key_hygiene() {
  sim::ExperimentConfig c;
  c.n = 4;
  c.T = 3;
  c.zeta = 512;
  c.E = 3;
  c.B = 10;
  c.rewards = true;
  sim::MetricsReport r = sim::run_experiment(c);
  std::size_t csp = 0, sp = 0, parts = 0, req = 0;
  for (const sim::DecryptionEvent& e : r.decryptions) {
    if (e.role == sim::kCspRole) ++csp;
    else if (e.role == sim::kSpRole) ++sp;
    else if (e.role == sim::kRequesterRole) ++req;
    else ++parts;
  }
  Outcome out;
  out.pass = r.audit.ok && csp > 0 && sp == 0 && r.audit.sensitive_values > 0;
  out.detail = "zeta=512, n=4, T=3 with rewards: " + std::to_string(csp) +
               " CSP openings of masked values, " + std::to_string(sp) + " by SP, " +
               std::to_string(parts) + " by participants, " + std::to_string(req) +
               " by the requester, checked against " + std::to_string(r.audit.sensitive_values) +
               " sensitive plaintexts; violations " + std::to_string(r.audit.violations.size());
  for (const std::string& v : r.audit.violations) out.detail += "\n    " + v;
  return out;
}

// ------------------------------------------------------------------ 10

Outcome determinism_and_codec() {
  sim::ExperimentConfig c;
  c.n = 4;
  c.T = 2;
  c.zeta = 256;
  c.E = 2;
  c.B = 10;
  c.dropout_rate = 0.3;
  c.strategy = sim::Strategy::kRetransmit;
  c.seed = 10;
  std::ostringstream a, b;
  sim::run_experiment(c, {&a, nullptr});
  sim::run_experiment(c, {&b, nullptr});
  const bool same = a.str() == b.str() && !a.str().empty();

  Rng rng(1010);
  std::vector<Bytes> seeds;
  for (std::uint8_t tag = 1; tag <= 10; ++tag) {
    WireMessage m{static_cast<MessageType>(tag), rng.next_u64(),
                  static_cast<std::uint32_t>(rng.uniform_index(1000)), {}};
    for (std::size_t f = 0; f < 1 + rng.uniform_index(5); ++f) m.fields.push_back(rng.bits(200));
    seeds.push_back(encode_message(m));
  }
  std::size_t accepted = 0, rejected = 0, crashes = 0, unstable = 0;
  for (int i = 0; i < 100000; ++i) {
    Bytes input;
    if (i % 2 == 0) {
      input.resize(rng.uniform_index(96));
      for (auto& byte : input) byte = static_cast<std::uint8_t>(rng.uniform_index(256));
    } else {
      input = seeds[rng.uniform_index(seeds.size())];
      const std::size_t edits = 1 + rng.uniform_index(4);
      for (std::size_t e = 0; e < edits; ++e) {
        switch (rng.uniform_index(3)) {
          case 0:
            if (!input.empty()) input[rng.uniform_index(input.size())] ^= static_cast<std::uint8_t>(1 + rng.uniform_index(255));
            break;
          case 1: input.resize(rng.uniform_index(input.size() + 1)); break;
          default: input.push_back(static_cast<std::uint8_t>(rng.uniform_index(256)));
        }
      }
    }
    try {
      WireMessage m = decode_message(input);
      ++accepted;
      if (encode_message(m) != input) ++unstable;
    } catch (const Error&) {
      ++rejected;
    } catch (...) {
      ++crashes;
    }
  }
  Outcome out;
  out.pass = same && crashes == 0 && unstable == 0;
  out.detail = std::string("zeta=256: repeated run metrics ") + (same ? "byte-identical" : "DIFFER") +
               " (" + std::to_string(a.str().size()) + " bytes); fuzz 100000 inputs: " +
               std::to_string(rejected) + " rejected with codec errors, " +
               std::to_string(accepted) + " decoded (all re-encode to the input: " +
               (unstable == 0 ? "yes" : "no") + "), " + std::to_string(crashes) +
               " unexpected failures";
  return out;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "threshold Paillier algebra", pctd_algebra},
      {2, "secure division exactness", sdiv_exactness},
      {3, "secure multiplication exactness", smul_exactness},
      {4, "encrypted averaging vs oracle", prifedavg_oracle},
      {5, "end-to-end learning equality", end_to_end_learning},
      {6, "dropout identities", dropout_identities},
      {7, "encrypted rewards", rewards_suite},
      {8, "communication counts", message_counts},
      {9, "key hygiene", key_hygiene},
      {10, "determinism and codec fuzz", determinism_and_codec},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    const auto start = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("aborted: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): "
              << o.detail << " [" << seconds_since(start) << " s]" << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
