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

// Full multi-party run: key setup, T rounds of local training, windowed
// collection, encrypted averaging, release and rewards, then the final model
// to the requester. Every decrypted value is compared with a plaintext shadow
// computation and every message is booked per role.
//
// Round timeline, relative to the round's start tick t0 and window length W:
//   t0 + [1, W]   on-time submissions (accepted)
//   t0 + W + 1    late submissions that the retransmit strategy folds in
//   t0 + W + 2    SP releases the average
//   t0 + W + 3    recipients receive it
//   t0 + W + 4    submissions that missed the release

#ifndef CROWDFL_SIM_EXPERIMENT_HPP_
#define CROWDFL_SIM_EXPERIMENT_HPP_

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "crowdfl/dropout.hpp"
#include "crowdfl/fedavg.hpp"
#include "crowdfl/fixedpoint.hpp"
#include "crowdfl/pctd.hpp"
#include "crowdfl/protocols.hpp"
#include "crowdfl/rewards.hpp"
#include "crowdfl/sim/audit.hpp"
#include "crowdfl/sim/config.hpp"
#include "crowdfl/sim/network.hpp"
#include "crowdfl/sim/socket.hpp"
#include "crowdfl/wire.hpp"

namespace crowdfl::sim {

// ---------------------------------------------------------------- dropout plan

struct DropEvent {
  std::uint32_t round = 0;
  std::uint64_t participant = 0;
  bool retransmit_ok = false;  // late copy reaches SP before the release

  friend bool operator==(const DropEvent&, const DropEvent&) = default;
};

struct DropoutPlan {
  std::vector<DropEvent> events;

  const DropEvent* find(std::uint32_t round, std::uint64_t participant) const {
    for (const DropEvent& e : events) {
      if (e.round == round && e.participant == participant) return &e;
    }
    return nullptr;
  }
  bool empty() const { return events.empty(); }
};

inline DropoutPlan inject_dropout(std::size_t n, std::size_t T, double rate,
                                  Strategy strategy, double success_rate, Rng& rng) {
  require(rate >= 0 && rate <= 1, ErrorCode::kConfig, "dropout rate must be in [0, 1]");
  require(success_rate >= 0 && success_rate <= 1, ErrorCode::kConfig,
          "retransmit success rate must be in [0, 1]");
  DropoutPlan plan;
  for (std::size_t round = 1; round <= T; ++round) {
    for (std::size_t i = 1; i <= n; ++i) {
      // Both draws happen for every slot so the plan does not depend on the
      // strategy beyond the retransmit flag.
      const double drop = rng.uniform01();
      const double retry = rng.uniform01();
      if (drop < rate) {
        plan.events.push_back({static_cast<std::uint32_t>(round), i,
                               strategy == Strategy::kRetransmit && retry < success_rate});
      }
    }
  }
  return plan;
}

// ------------------------------------------------------------- message payloads

inline WireMessage encode_submission(const EncryptedSubmission& s) {
  WireMessage m{MessageType::kSubmission, 0, s.round, {}};
  m.fields.push_back(BigInt(static_cast<unsigned long>(s.participant_id)));
  m.fields.push_back(BigInt(static_cast<unsigned long>(s.enc_weighted.size())));
  m.fields.push_back(BigInt(s.enc_model.empty() ? 0 : 1));
  push_ciphertext(m, s.enc_delta);
  for (const Ciphertext& c : s.enc_weighted) push_ciphertext(m, c);
  for (const Ciphertext& c : s.enc_model) push_ciphertext(m, c);
  return m;
}

inline EncryptedSubmission decode_submission(const WireMessage& m) {
  require(m.type == MessageType::kSubmission, ErrorCode::kStateMachine, "expected SUBMIT");
  FieldReader in(m);
  EncryptedSubmission s;
  s.round = m.round;
  s.participant_id = in.small(UINT64_MAX);
  const std::uint64_t dim = in.small(1u << 20);
  const bool has_model = in.small(1) == 1;
  s.enc_delta = in.ciphertext();
  for (std::uint64_t j = 0; j < dim; ++j) s.enc_weighted.push_back(in.ciphertext());
  if (has_model) {
    for (std::uint64_t j = 0; j < dim; ++j) s.enc_model.push_back(in.ciphertext());
  }
  in.expect_done();
  return s;
}

inline WireMessage encode_release(MessageType type, std::uint32_t round,
                                  const std::vector<ReleasedValue>& values) {
  WireMessage m{type, 0, round, {}};
  m.fields.push_back(BigInt(static_cast<unsigned long>(values.size())));
  m.fields.push_back(BigInt(static_cast<unsigned long>(
      values.empty() ? 0 : values.front().sp_partial.pairing_id)));
  for (const ReleasedValue& v : values) {
    push_ciphertext(m, v.ciphertext);
    m.fields.push_back(v.sp_partial.value);
  }
  return m;
}

inline std::vector<ReleasedValue> decode_release(const WireMessage& m, int sp_share_index) {
  require(m.type == MessageType::kAverageRelease || m.type == MessageType::kFinalModel ||
              m.type == MessageType::kRewardRelease,
          ErrorCode::kStateMachine,
          "expected a release, got " + std::string(message_type_name(m.type)));
  FieldReader in(m);
  const std::uint64_t count = in.small(1u << 20);
  const std::uint64_t pairing = in.small(UINT64_MAX);
  std::vector<ReleasedValue> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    ReleasedValue v;
    v.ciphertext = in.ciphertext();
    v.sp_partial = {in.big(), pairing, sp_share_index};
    out.push_back(std::move(v));
  }
  in.expect_done();
  return out;
}

// ------------------------------------------------------------------ report

struct RoundSummary {
  std::uint32_t round = 0;
  std::vector<std::uint64_t> accepted;        // on time
  std::vector<std::uint64_t> folded_in;       // late, retransmitted before release
  std::vector<std::uint64_t> discarded;       // late, dropped by the discard strategy
  std::vector<std::uint64_t> missed_release;  // arrived after the release
  std::vector<Decimal> average;               // decrypted by its recipients
  std::vector<Decimal> oracle;                // plaintext average of the same set
  Decimal max_deviation = 0;
  std::uint64_t ticks = 0;
};

struct RewardRow {
  std::uint32_t round = 0;
  std::uint64_t participant = 0;
  std::size_t delta = 0;
  Decimal reward;         // decrypted
  Decimal oracle_reward;  // exact rational
  Decimal distance;       // exact
};

struct MetricsReport {
  unsigned zeta = 0;
  int kappa = 0;
  std::vector<RoundSummary> rounds;
  std::vector<RewardRow> rewards;
  std::vector<Decimal> final_model;     // as decrypted by the requester
  std::vector<Decimal> shadow_model;    // plaintext pipeline
  double final_loss = 0;
  double shadow_loss = 0;
  Decimal max_deviation = 0;
  Decimal budget_prepaid = 0;
  Decimal budget_paid = 0;
  Decimal rewards_paid = 0;  // sum of decrypted rewards
  DropoutPlan dropout;
  MessageLedger ledger;
  AuditVerdict audit;
  std::vector<DecryptionEvent> decryptions;
};

struct ExperimentIo {
  std::ostream* metrics = nullptr;     // JSON lines
  std::ostream* reward_csv = nullptr;  // round,participant,delta,reward,oracle
};

namespace detail {

using Json = nlohmann::json;

inline std::string dec_text(const Decimal& v, int places) { return format_decimal(v, places); }

inline Json decimals(const std::vector<Decimal>& v, int places) {
  Json out = Json::array();
  for (const Decimal& x : v) out.push_back(dec_text(x, places));
  return out;
}

inline Decimal abs_dec(const Decimal& v) { return v < 0 ? Decimal(-v) : v; }

inline double mse(const Dataset& data, const std::vector<double>& w) {
  if (data.size() == 0) return 0;
  return LinearRegressionTrainer().loss(data, w);
}

class MetricsSink {
 public:
  explicit MetricsSink(std::ostream* out) : out_(out) {}
  void emit(const Json& record) {
    if (out_ != nullptr) *out_ << record.dump() << '\n';
  }

 private:
  std::ostream* out_;
};

// Plaintext replay of the encrypted reward chain, used only to register the
// intermediate values the audit must never see at CSP.
inline void register_reward_trace(DecryptionAudit& audit, const std::vector<ModelVector>& models,
                                  const std::vector<Decimal>& avg_2l_shifted,
                                  const BigInt& b_int, const Decimal& offset, int L) {
  const BigInt s2 = pow10(2 * L);
  const BigInt s1 = pow10(L);
  std::vector<BigInt> d_guard;
  BigInt omega = 0;
  BigInt pi = 0;
  for (const ModelVector& m : models) {
    BigInt d = pow10(3 * L);
    for (std::size_t j = 0; j < m.dim(); ++j) {
      BigInt model_2l = floor_scaled(m.weights[j] + offset, L) * s1;
      BigInt diff = model_2l - floor_scaled(avg_2l_shifted[j], 2 * L);
      audit.add_sensitive(diff, "distance component");
      audit.add_sensitive(diff * diff, "squared distance component");
      d += diff * diff;
    }
    audit.add_sensitive(d, "guarded distance");
    audit.add_sensitive(d - pow10(3 * L), "distance");
    d_guard.push_back(d);
    omega += d;
    pi += static_cast<unsigned long>(m.delta);
  }
  audit.add_sensitive(omega, "distance sum");
  audit.add_sensitive(pi, "sample total");
  std::vector<BigInt> w;
  BigInt w_sum = 0;
  for (std::size_t i = 0; i < models.size(); ++i) {
    BigInt up = BigInt(static_cast<unsigned long>(models[i].delta)) * omega;
    BigInt down = pi * d_guard[i];
    audit.add_sensitive(up, "weight numerator");
    audit.add_sensitive(down, "weight denominator");
    BigInt wi = floor_div(up * s1, down);
    audit.add_sensitive(wi, "weight");
    audit.add_sensitive(b_int * wi, "budget share");
    w.push_back(wi);
    w_sum += wi;
  }
  audit.add_sensitive(w_sum * s1, "weight total");
  for (const BigInt& wi : w) {
    if (w_sum != 0) audit.add_sensitive(floor_div(b_int * wi * s2, w_sum * s1), "reward");
  }
  audit.add_sensitive(b_int, "budget");
}

}  // namespace detail

// ---------------------------------------------------------------- experiment

class Experiment {
 public:
  Experiment(ExperimentConfig cfg, ExperimentIo io) : cfg_(std::move(cfg)), io_(io), sink_(io.metrics) {
    cfg_.validate();
  }

  MetricsReport run() {
    std::uint32_t round = 0;
    try {
      setup();
      for (round = 1; round <= cfg_.T; ++round) run_round(round);
      finish();
    } catch (const Error& e) {
      detail::Json rec{{"type", "failure"},
                       {"code", std::string(error_code_name(e.code()))},
                       {"round", round},
                       {"message", e.detail()}};
      sink_.emit(rec);
      throw;
    }
    return std::move(report_);
  }

 private:
  struct Actor {
    std::uint64_t id = 0;
    Dataset data;
    Rng train_rng{0};
    Rng shadow_rng{0};
    Rng enc_rng{0};
    Rng delay_rng{0};
  };

  using Clock = std::chrono::steady_clock;

  void timing(std::uint32_t round, const char* phase, Clock::time_point start) {
    if (!cfg_.record_timing) return;
    double ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    sink_.emit({{"type", "timing"}, {"round", round}, {"phase", phase}, {"ms", ms}});
  }

  void setup() {
    const auto start = Clock::now();
    Rng root(cfg_.seed);
    Rng kgc_rng = root.fork("kgc");
    Rng sp_rng = root.fork("sp");
    Rng csp_rng = root.fork("csp");
    Rng req_rng = root.fork("requester");
    Rng data_rng = root.fork("data");
    Rng drop_rng = root.fork("dropout");
    const std::uint64_t train_seed = root.next_u64();

    KeyMaterialOptions kopts;
    kopts.keygen.test_mode = cfg_.zeta < kDeploymentZeta;
    kopts.server_split = cfg_.split_mode;
    kopts.participant_split = cfg_.split_mode;
    keys_ = std::make_unique<KeyMaterial>(generate_key_material(cfg_.zeta, kgc_rng, kopts));
    const PublicKey& pk = keys_->pk;
    const int kappa = cfg_.effective_kappa();
    enc_params_ = EncodingParams{FixedPointCodec::make(cfg_.L, kappa, pk.n),
                                 cfg_.weight_offset(), cfg_.bound()};
    MaskingParams masking{cfg_.sigma, kappa, cfg_.L};
    masking.validate(pk);
    audit_.set_modulus(pk.n);
    report_.zeta = cfg_.zeta;
    report_.kappa = kappa;

    load_data(data_rng);
    for (std::size_t i = 0; i < actors_.size(); ++i) {
      Actor& a = actors_[i];
      a.train_rng = Rng(train_seed).fork("train-" + std::to_string(a.id));
      a.shadow_rng = Rng(train_seed).fork("train-" + std::to_string(a.id));
      a.enc_rng = root.fork("participant-" + std::to_string(a.id));
      a.delay_rng = root.fork("delay-" + std::to_string(a.id));
    }
    report_.dropout = inject_dropout(cfg_.n, cfg_.T, cfg_.dropout_rate, cfg_.strategy,
                                     cfg_.retransmit_success_rate, drop_rng);
    for (const DropEvent& e : report_.dropout.events) {
      sink_.emit({{"type", "dropout"},
                  {"round", e.round},
                  {"participant", e.participant},
                  {"retransmit_ok", e.retransmit_ok}});
    }

    csp_ = std::make_unique<ComputeServer>(
        pk, keys_->csp_share(), std::move(csp_rng),
        [this](std::string_view purpose, const BigInt& plain) {
          audit_.record(kCspRole, std::string(purpose), current_round_, 0, plain);
        });
    if (cfg_.transport == Transport::kSocket) {
      socket_server_ = std::make_unique<CspSocketServer>(*csp_);
      link_ = std::make_unique<SocketCspLink>(socket_server_->port());
    } else {
      link_ = std::make_unique<LocalCspLink>(*csp_);
    }
    metered_ = std::make_unique<MeteredLink>(*link_, report_.ledger);
    ops_ = std::make_unique<SecureOps>(pk, keys_->sp_server_share(), masking, *metered_,
                                       std::move(sp_rng));

    global_.assign(cfg_.model_dim, Decimal(0));
    shadow_ = global_;

    if (cfg_.rewards) {
      const std::size_t paid_rounds =
          cfg_.reward_timing == RewardTiming::kPerRound ? cfg_.T : 1;
      reward_ledger_ = std::make_unique<RewardLedger>(
          cfg_.budget() * Decimal(static_cast<unsigned long>(paid_rounds)));
      report_.budget_prepaid = reward_ledger_->prepaid();
      // Requester hands SP the encrypted per-round budget.
      Ciphertext b = enc(pk, enc_params_.codec.encode(cfg_.budget()), cfg_.L, req_rng);
      WireMessage m{MessageType::kBudget, 0, 0, {}};
      push_ciphertext(m, b);
      scheduler_.send(kRequesterRole, kSpRole, m, 1, "setup");
      for (const Envelope& e : scheduler_.deliver_until(scheduler_.now() + 1)) {
        require(e.message.type == MessageType::kBudget, ErrorCode::kStateMachine,
                "expected BUDGET");
        FieldReader in(e.message);
        enc_budget_ = in.ciphertext();
        in.expect_done();
      }
    }

    sink_.emit({{"type", "setup"},
                {"n", cfg_.n},
                {"T", cfg_.T},
                {"model_dim", cfg_.model_dim},
                {"zeta", cfg_.zeta},
                {"modulus_bits", bit_length(pk.n)},
                {"kappa", kappa},
                {"sigma", cfg_.sigma},
                {"L", cfg_.L},
                {"offset", detail::dec_text(enc_params_.offset, 0)},
                {"samples", sample_sizes()},
                {"transport", cfg_.transport == Transport::kSocket ? "socket" : "memory"},
                {"rewards", cfg_.rewards}});
    timing(0, "setup", start);
  }

  std::vector<std::size_t> sample_sizes() const {
    std::vector<std::size_t> out;
    for (const Actor& a : actors_) out.push_back(a.data.size());
    return out;
  }

  void load_data(Rng& rng) {
    const std::size_t n = cfg_.n;
    const std::size_t spp = cfg_.samples_per_participant;
    actors_.resize(n);
    if (cfg_.data.empty()) {
      std::vector<double> w_true(cfg_.model_dim);
      for (double& w : w_true) w = 4 * rng.uniform01() - 2;
      const std::size_t lo = (spp + 1) / 2;
      for (std::size_t i = 0; i < n; ++i) {
        actors_[i].id = i + 1;
        std::size_t size = lo + rng.uniform_index(spp - lo + 1);
        actors_[i].data = synthetic_linear(w_true, size, cfg_.noise, rng);
      }
      test_set_ = synthetic_linear(w_true, 200, cfg_.noise, rng);
      return;
    }
    Dataset all = load_csv(cfg_.data);
    require(all.dim() == cfg_.model_dim, ErrorCode::kConfig,
            "data has " + std::to_string(all.dim()) + " features but model_dim=" +
                std::to_string(cfg_.model_dim));
    require(all.size() >= n, ErrorCode::kConfig, "fewer data rows than participants");
    const std::size_t chunk = all.size() / n;
    require(chunk + all.size() % n <= spp, ErrorCode::kConfig,
            "data gives a participant more than samples_per_participant rows");
    std::size_t row = 0;
    for (std::size_t i = 0; i < n; ++i) {
      actors_[i].id = i + 1;
      std::size_t take = chunk + (i + 1 == n ? all.size() % n : 0);
      for (std::size_t k = 0; k < take; ++k, ++row) {
        actors_[i].data.x.push_back(all.x[row]);
        actors_[i].data.y.push_back(all.y[row]);
      }
    }
    test_set_ = std::move(all);
  }

  void register_submission(const ModelVector& m) {
    const FixedPointCodec& codec = enc_params_.codec;
    const Decimal delta(static_cast<unsigned long>(m.delta));
    audit_.add_sensitive(BigInt(static_cast<unsigned long>(m.delta)), "sample count");
    for (const Decimal& w : m.weights) {
      Decimal shifted = w + enc_params_.offset;
      audit_.add_sensitive(floor_scaled(w, codec.L), "model weight");
      audit_.add_sensitive(floor_scaled(shifted, codec.L), "shifted model weight");
      audit_.add_sensitive(floor_scaled(delta * shifted, codec.L), "weighted model");
    }
  }

  void run_round(std::uint32_t round) {
    const auto start = Clock::now();
    current_round_ = round;
    ops_->set_round(round);
    metered_->set_phase("fedavg");
    const PublicKey& pk = keys_->pk;
    const int L = cfg_.L;
    const std::uint64_t t0 = scheduler_.now();
    const std::uint64_t w = cfg_.window_ticks;
    const AcceptanceWindow window = AcceptanceWindow::make(t0, w);

    // Local training and submission.
    std::map<std::uint64_t, ModelVector> models;
    std::map<std::uint64_t, ModelVector> shadow_models;
    for (Actor& a : actors_) {
      auto trained = local_train(a.data, to_doubles(global_), train_cfg(), a.train_rng);
      ModelVector model{to_grid(trained, L), a.data.size()};
      auto shadow_trained = local_train(a.data, to_doubles(shadow_), train_cfg(), a.shadow_rng);
      shadow_models[a.id] = {to_grid(shadow_trained, L), a.data.size()};
      register_submission(model);
      EncryptedSubmission s =
          make_submission(pk, enc_params_, model, a.id, round, cfg_.rewards, a.enc_rng);
      models[a.id] = std::move(model);
      std::uint64_t delay = 1 + a.delay_rng.uniform_index(w);
      if (const DropEvent* e = report_.dropout.find(round, a.id)) {
        delay = e->retransmit_ok ? w + 1 : w + 4;
      }
      scheduler_.send(participant_role(a.id), kSpRole, encode_submission(s), delay, "fedavg");
    }

    // Collection until just before the release.
    std::vector<Timestamped<EncryptedSubmission>> arrivals;
    for (Envelope& e : scheduler_.deliver_until(t0 + w + 1)) {
      arrivals.push_back({decode_submission(e.message), e.deliver_at});
    }
    WindowPartition<EncryptedSubmission> part = collect_with_window(std::move(arrivals), window);
    RoundState state(pk, cfg_.model_dim, round);
    RoundSummary summary;
    summary.round = round;
    for (auto& a : part.accepted) {
      state.accept(a.item);
      summary.accepted.push_back(a.item.participant_id);
    }
    std::vector<Ciphertext> avg;
    try {
      if (!state.empty()) avg = prifedavg_round(state, *ops_);
      for (auto& late : part.discarded) {
        if (cfg_.strategy == Strategy::kRetransmit) {
          avg = retransmit_update(state, late.item, *ops_);
          summary.folded_in.push_back(late.item.participant_id);
        } else {
          summary.discarded.push_back(late.item.participant_id);
        }
      }
      if (avg.empty()) avg = prifedavg_round(state, *ops_);
    } catch (const Error& e) {
      throw e.with_context("round " + std::to_string(round));
    }
    state.mark_released();
    scheduler_.deliver_until(t0 + w + 2);

    // Oracle over exactly the set SP aggregated.
    std::vector<ModelVector> used;
    std::vector<ModelVector> used_shadow;
    for (const EncryptedSubmission& s : state.accepted()) {
      used.push_back(models.at(s.participant_id));
      used_shadow.push_back(shadow_models.at(s.participant_id));
    }
    summary.oracle = fedavg_plain(used, L);
    for (const Decimal& v : fedavg_exact(used)) {
      Decimal shifted = floor_to_places(v, 2 * L) + enc_params_.offset;
      audit_.add_sensitive(floor_scaled(shifted, 2 * L), "average");
      audit_.add_sensitive(floor_scaled(v, L), "average");
    }
    BigInt sample_total = 0;
    for (const ModelVector& m : used) sample_total += static_cast<unsigned long>(m.delta);
    audit_.add_sensitive(sample_total, "sample total");

    // Release.
    const std::vector<ReleasedValue> released =
        release_average(pk, keys_->sp_participant_share(), avg);
    const int sp_index = keys_->sp_participant_share().index;
    std::vector<Decimal> decrypted;
    if (round < cfg_.T) {
      for (const Actor& a : actors_) {
        scheduler_.send(kSpRole, participant_role(a.id),
                        encode_release(MessageType::kAverageRelease, round, released), 1,
                        "fedavg");
      }
      for (Envelope& e : scheduler_.deliver_until(scheduler_.now() + 1)) {
        std::vector<Decimal> got = open_release(e.to, "average", round, 0,
                                                decode_release(e.message, sp_index));
        if (decrypted.empty()) decrypted = got;
        require(got == decrypted, ErrorCode::kCorruptedSession,
                "participants decrypted different averages");
      }
    } else {
      scheduler_.send(kSpRole, kRequesterRole,
                      encode_release(MessageType::kFinalModel, round, released), 1, "fedavg");
      for (Envelope& e : scheduler_.deliver_until(scheduler_.now() + 1)) {
        decrypted = open_release(e.to, "final-model", round, 0,
                                 decode_release(e.message, sp_index));
      }
    }

    // Late arrivals after the release.
    for (Envelope& e : scheduler_.deliver_until(t0 + w + 4)) {
      EncryptedSubmission s = decode_submission(e.message);
      if (cfg_.strategy == Strategy::kRetransmit) {
        try {
          retransmit_update(state, s, *ops_);
        } catch (const Error& err) {
          if (err.code() != ErrorCode::kDiscardedLate) throw;
        }
      }
      summary.missed_release.push_back(s.participant_id);
    }

    summary.average = decrypted;
    for (std::size_t j = 0; j < decrypted.size(); ++j) {
      Decimal dev = detail::abs_dec(decrypted[j] - summary.oracle[j]);
      if (dev > summary.max_deviation) summary.max_deviation = dev;
    }
    if (summary.max_deviation > report_.max_deviation) {
      report_.max_deviation = summary.max_deviation;
    }
    global_ = decrypted;
    shadow_ = fedavg_plain(used_shadow, L);
    summary.ticks = scheduler_.now() - t0;
    timing(round, "fedavg", start);

    if (cfg_.rewards &&
        (cfg_.reward_timing == RewardTiming::kPerRound || round == cfg_.T)) {
      run_rewards(round, state, avg, used);
    }

    emit_round(summary);
    report_.rounds.push_back(std::move(summary));
  }

  std::vector<Decimal> open_release(const std::string& role, const char* purpose,
                                    std::uint32_t round, std::uint64_t subject,
                                    const std::vector<ReleasedValue>& values) {
    const PublicKey& pk = keys_->pk;
    const KeyShare& share = keys_->participant_share();
    std::vector<Decimal> out;
    for (const ReleasedValue& r : values) {
      BigInt plain = tdec(r.sp_partial, pdec(share, pk, r.ciphertext), pk);
      audit_.record(role, purpose, round, subject, plain);
      Decimal v = enc_params_.codec.decode(plain, r.ciphertext.scale);
      if (std::string(purpose) != "reward") {
        v = floor_to_places(v - enc_params_.offset, cfg_.L);
      }
      out.push_back(v);
    }
    return out;
  }

  void run_rewards(std::uint32_t round, const RoundState& state,
                   const std::vector<Ciphertext>& enc_avg,
                   const std::vector<ModelVector>& used) {
    const auto start = Clock::now();
    metered_->set_phase("rewards");
    const PublicKey& pk = keys_->pk;
    const int L = cfg_.L;
    std::vector<RewardParticipant> parts;
    for (const EncryptedSubmission& s : state.accepted()) {
      parts.push_back({s.participant_id, s.enc_model, s.enc_delta});
    }
    std::vector<Decimal> avg_shifted;
    for (const Decimal& v : fedavg_exact(used)) {
      avg_shifted.push_back(floor_to_places(v, 2 * L) + enc_params_.offset);
    }
    detail::register_reward_trace(audit_, used, avg_shifted, floor_scaled(cfg_.budget(), L),
                                  enc_params_.offset, L);

    std::vector<Ciphertext> mu;
    try {
      mu = prirwd(parts, enc_avg, enc_budget_, enc_params_.codec, *ops_);
    } catch (const Error& e) {
      throw e.with_context("round " + std::to_string(round) + " rewards");
    }
    const int sp_index = keys_->sp_participant_share().index;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      reward_ledger_->record_release(round, parts[i].participant_id, cfg_.budget());
      ReleasedValue r = release_reward(pk, keys_->sp_participant_share(), mu[i]);
      scheduler_.send(kSpRole, participant_role(parts[i].participant_id),
                      encode_release(MessageType::kRewardRelease, round, {r}), 1, "rewards");
    }
    std::map<std::uint64_t, Decimal> got;
    for (Envelope& e : scheduler_.deliver_until(scheduler_.now() + 1)) {
      std::uint64_t id = std::stoull(e.to.substr(1));
      got[id] = open_release(e.to, "reward", round, id, decode_release(e.message, sp_index))[0];
    }

    RewardConfig rc{cfg_.budget(), L};
    std::vector<Decimal> avg_exact = fedavg_exact(used);
    for (Decimal& v : avg_exact) v = floor_to_places(v, 2 * L);
    RewardPlain oracle = reward_plain(used, avg_exact, rc);
    for (std::size_t i = 0; i < parts.size(); ++i) {
      RewardRow row{round, parts[i].participant_id, used[i].delta,
                    got.at(parts[i].participant_id), oracle.reward[i], oracle.distance[i]};
      report_.rewards_paid += row.reward;
      if (io_.reward_csv != nullptr) {
        *io_.reward_csv << round << ',' << row.participant << ',' << row.delta << ','
                        << detail::dec_text(row.reward, L) << ','
                        << detail::dec_text(row.oracle_reward, L) << '\n';
      }
      sink_.emit({{"type", "reward"},
                  {"round", round},
                  {"participant", row.participant},
                  {"delta", row.delta},
                  {"reward", detail::dec_text(row.reward, L)},
                  {"oracle", detail::dec_text(row.oracle_reward, L)},
                  {"distance", detail::dec_text(row.distance, 2 * L)}});
      report_.rewards.push_back(std::move(row));
    }
    report_.budget_paid = reward_ledger_->paid();
    timing(round, "rewards", start);
  }

  void emit_round(const RoundSummary& s) {
    const int L = cfg_.L;
    sink_.emit({{"type", "round"},
                {"round", s.round},
                {"accepted", s.accepted},
                {"folded_in", s.folded_in},
                {"discarded", s.discarded},
                {"missed_release", s.missed_release},
                {"average", detail::decimals(s.average, L)},
                {"oracle", detail::decimals(s.oracle, L)},
                {"max_deviation", detail::dec_text(s.max_deviation, L)},
                {"ticks", s.ticks}});
    std::vector<std::string> roles = {kSpRole, kCspRole, kRequesterRole};
    for (const Actor& a : actors_) roles.push_back(participant_role(a.id));
    for (const char* phase : {"fedavg", "rewards"}) {
      detail::Json counts = detail::Json::object();
      for (const std::string& role : roles) {
        MessageCount c = report_.ledger.count(s.round, phase, role);
        if (c.total() == 0) continue;
        counts[role] = {{"sent", c.sent}, {"received", c.received}, {"total", c.total()}};
      }
      if (!counts.empty()) {
        sink_.emit({{"type", "messages"}, {"round", s.round}, {"phase", phase},
                    {"roles", counts}});
      }
    }
  }

  void finish() {
    const int L = cfg_.L;
    report_.final_model = global_;
    report_.shadow_model = shadow_;
    report_.final_loss = detail::mse(test_set_, to_doubles(global_));
    report_.shadow_loss = detail::mse(test_set_, to_doubles(shadow_));
    report_.audit = audit_.check();
    report_.decryptions = audit_.events();
    detail::Json summary{{"type", "summary"},
                         {"final_model", detail::decimals(report_.final_model, L)},
                         {"shadow_model", detail::decimals(report_.shadow_model, L)},
                         {"test_loss", detail::dec_text(Decimal(report_.final_loss), 6)},
                         {"shadow_loss", detail::dec_text(Decimal(report_.shadow_loss), 6)},
                         {"max_deviation", detail::dec_text(report_.max_deviation, L)},
                         {"audit_ok", report_.audit.ok},
                         {"audit_violations", report_.audit.violations},
                         {"decryptions", report_.audit.events},
                         {"sensitive_values", report_.audit.sensitive_values}};
    if (cfg_.rewards) {
      summary["budget_prepaid"] = detail::dec_text(report_.budget_prepaid, L);
      summary["budget_paid"] = detail::dec_text(report_.budget_paid, L);
      summary["rewards_paid"] = detail::dec_text(report_.rewards_paid, L);
    }
    sink_.emit(summary);
    if (link_) {
      if (auto* s = dynamic_cast<SocketCspLink*>(link_.get())) s->close();
    }
    socket_server_.reset();
  }

  TrainConfig train_cfg() const { return {cfg_.eta, cfg_.B, cfg_.E}; }

  ExperimentConfig cfg_;
  ExperimentIo io_;
  detail::MetricsSink sink_;
  MetricsReport report_;
  DecryptionAudit audit_;
  Scheduler scheduler_{report_.ledger};
  std::unique_ptr<KeyMaterial> keys_;
  EncodingParams enc_params_;
  std::unique_ptr<ComputeServer> csp_;
  std::unique_ptr<CspSocketServer> socket_server_;
  std::unique_ptr<CspLink> link_;
  std::unique_ptr<MeteredLink> metered_;
  std::unique_ptr<SecureOps> ops_;
  std::unique_ptr<RewardLedger> reward_ledger_;
  Ciphertext enc_budget_;
  std::vector<Actor> actors_;
  Dataset test_set_;
  std::vector<Decimal> global_;
  std::vector<Decimal> shadow_;
  std::uint32_t current_round_ = 0;
};

inline MetricsReport run_experiment(const ExperimentConfig& cfg, ExperimentIo io = {}) {
  return Experiment(cfg, io).run();
}

}  // namespace crowdfl::sim

#endif  // CROWDFL_SIM_EXPERIMENT_HPP_
