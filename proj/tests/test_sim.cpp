// Copyright 2026 The CrowdFL Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "crowdfl/crowdfl.hpp"

namespace crowdfl::sim {
namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.zeta = 256;
  c.n = 4;
  c.T = 2;
  c.model_dim = 2;
  c.E = 3;
  c.B = 10;
  c.samples_per_participant = 20;
  return c;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::kDomain;
}

TEST(Config, ParsesKeysCommentsAndDefaults) {
  ExperimentConfig c = parse_config(
      "# experiment\n"
      "n = 6\n"
      "T=3   # rounds\n"
      "zeta=512\n"
      "b_t=36\n"
      "strategy=retransmit\n"
      "reward_timing=final\n"
      "transport=socket\n");
  EXPECT_EQ(c.n, 6u);
  EXPECT_EQ(c.T, 3u);
  EXPECT_EQ(c.zeta, 512u);
  EXPECT_EQ(c.strategy, Strategy::kRetransmit);
  EXPECT_EQ(c.reward_timing, RewardTiming::kFinal);
  EXPECT_EQ(c.transport, Transport::kSocket);
  EXPECT_EQ(c.L, 6);
  EXPECT_EQ(c.eta, 0.001);
  EXPECT_EQ(c.B, 50u);
  EXPECT_EQ(c.E, 30u);
  EXPECT_EQ(c.weight_offset(), Decimal(101));
  EXPECT_GE(c.effective_kappa(), c.required_kappa());
  EXPECT_EQ(c.effective_kappa() % 8, 0);
}

TEST(Config, ErrorsNameTheLine) {
  try {
    parse_config("n=4\nbogus=1\n", "exp.cfg");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
    EXPECT_NE(std::string(e.what()).find("exp.cfg:2"), std::string::npos) << e.what();
  }
  EXPECT_EQ(code_of([] { parse_config("n=four\n"); }), ErrorCode::kConfig);
  EXPECT_EQ(code_of([] { parse_config("just words\n"); }), ErrorCode::kConfig);
  EXPECT_EQ(code_of([] { parse_config("dropout_rate=1.5\n"); }), ErrorCode::kConfig);
  EXPECT_EQ(code_of([] { parse_config("rewards=maybe\n"); }), ErrorCode::kConfig);
  EXPECT_EQ(code_of([] { parse_config("offset=50\n"); }), ErrorCode::kConfig);
  EXPECT_EQ(code_of([] { load_config("/nonexistent/exp.cfg"); }), ErrorCode::kConfig);
}

TEST(Config, CrossFieldConstraints) {
  // Masks do not fit a tiny modulus.
  EXPECT_EQ(code_of([] { parse_config("zeta=64\n"); }), ErrorCode::kConfig);
  // Explicit kappa below what the run needs.
  EXPECT_EQ(code_of([] { parse_config("zeta=512\nkappa=32\n"); }), ErrorCode::kConfig);
  // Small keys must be opted into.
  EXPECT_EQ(code_of([] { parse_config("zeta=512\nallow_test_keys=false\n"); }),
            ErrorCode::kConfig);
  ExperimentConfig c = parse_config("zeta=512\nrewards=false\n");
  EXPECT_LT(c.required_kappa(), parse_config("zeta=512\n").required_kappa());
}

TEST(Config, FormatRoundTrips) {
  ExperimentConfig c = small_config();
  c.strategy = Strategy::kRetransmit;
  c.dropout_rate = 0.25;
  ExperimentConfig back = parse_config(format_config(c));
  EXPECT_EQ(format_config(back), format_config(c));
}

TEST(Dropout, PlanIsDeterministic) {
  Rng a(5), b(5), z(5);
  EXPECT_TRUE(inject_dropout(10, 5, 0.0, Strategy::kDiscard, 0.5, z).empty());
  DropoutPlan pa = inject_dropout(10, 5, 0.5, Strategy::kRetransmit, 0.5, a);
  DropoutPlan pb = inject_dropout(10, 5, 0.5, Strategy::kRetransmit, 0.5, b);
  EXPECT_EQ(pa.events, pb.events);
  EXPECT_FALSE(pa.empty());
  Rng all(9);
  DropoutPlan full = inject_dropout(3, 2, 1.0, Strategy::kDiscard, 1.0, all);
  EXPECT_EQ(full.events.size(), 6u);
  for (const DropEvent& e : full.events) EXPECT_FALSE(e.retransmit_ok);
  Rng sure(9);
  for (const DropEvent& e : inject_dropout(3, 2, 1.0, Strategy::kRetransmit, 1.0, sure).events) {
    EXPECT_TRUE(e.retransmit_ok);
  }
}

TEST(Network, SchedulerOrdersByTickThenSendOrder) {
  MessageLedger ledger;
  Scheduler s(ledger);
  WireMessage m{MessageType::kBudget, 0, 1, {BigInt(7)}};
  s.send("A", "B", m, 3, "x");
  s.send("A", "C", m, 1, "x");
  s.send("B", "C", m, 1, "x");
  auto first = s.deliver_until(1);
  ASSERT_EQ(first.size(), 2u);
  EXPECT_EQ(first[0].to, "C");
  EXPECT_EQ(first[0].from, "A");
  EXPECT_EQ(first[1].from, "B");
  EXPECT_EQ(s.now(), 1u);
  EXPECT_FALSE(s.idle());
  auto rest = s.deliver_until(10);
  ASSERT_EQ(rest.size(), 1u);
  EXPECT_EQ(rest[0].message, m);
  EXPECT_TRUE(s.idle());
  EXPECT_EQ(ledger.count(1, "x", "A"), (MessageCount{2, 0}));
  EXPECT_EQ(ledger.count(1, "x", "C"), (MessageCount{0, 2}));
  EXPECT_EQ(ledger.count(1, "x", "B").total(), 2u);
}

TEST(Network, SubmissionCodecRoundTrip) {
  Rng rng(3);
  KeyMaterial km = generate_key_material(128, rng, {.keygen = {.test_mode = true}});
  EncodingParams ep{FixedPointCodec::make(6, 32, km.pk.n), Decimal(101), Decimal(100)};
  ModelVector m{{Decimal(1), Decimal(-2)}, 5};
  for (bool with_model : {false, true}) {
    EncryptedSubmission s = make_submission(km.pk, ep, m, 7, 3, with_model, rng);
    EncryptedSubmission back = decode_submission(encode_submission(s));
    EXPECT_EQ(back.participant_id, 7u);
    EXPECT_EQ(back.round, 3u);
    EXPECT_EQ(back.enc_delta, s.enc_delta);
    EXPECT_EQ(back.enc_weighted, s.enc_weighted);
    EXPECT_EQ(back.enc_model, s.enc_model);
  }
}

TEST(Audit, FlagsForbiddenDecryptions) {
  DecryptionAudit audit(BigInt(1000003));
  audit.add_sensitive(BigInt(-5), "model weight");
  audit.record(kCspRole, "sdiv-masked-x", 1, 0, BigInt(123456));
  audit.record("P1", "average", 1, 0, BigInt(9));
  audit.record("P2", "reward", 1, 2, BigInt(9));
  audit.record(kRequesterRole, "final-model", 2, 0, BigInt(9));
  EXPECT_TRUE(audit.check().ok);

  DecryptionAudit bad(BigInt(1000003));
  bad.add_sensitive(BigInt(-5), "model weight");
  bad.record(kCspRole, "sdiv-masked-y", 1, 0, BigInt(1000003 - 5));
  bad.record(kSpRole, "average", 1, 0, BigInt(1));
  bad.record("P1", "reward", 1, 2, BigInt(1));
  bad.record(kRequesterRole, "reward", 1, 1, BigInt(1));
  bad.record(kCspRole, "average", 1, 0, BigInt(77));
  AuditVerdict v = bad.check();
  EXPECT_FALSE(v.ok);
  EXPECT_EQ(v.violations.size(), 5u);
}

TEST(Experiment, MatchesOracleEveryRound) {
  ExperimentConfig c = small_config();
  MetricsReport r = run_experiment(c);
  ASSERT_EQ(r.rounds.size(), 2u);
  for (const RoundSummary& s : r.rounds) {
    EXPECT_EQ(s.accepted.size(), 4u);
    EXPECT_EQ(s.average, s.oracle);
    EXPECT_LE(s.max_deviation, Decimal(BigInt(1), pow10(c.L)));
  }
  EXPECT_EQ(r.final_model, r.shadow_model);
  EXPECT_EQ(r.final_loss, r.shadow_loss);
  EXPECT_TRUE(r.audit.ok) << (r.audit.violations.empty() ? "" : r.audit.violations[0]);
  EXPECT_GT(r.audit.sensitive_values, 0u);
}

TEST(Experiment, RewardsConserveTheBudget) {
  ExperimentConfig c = small_config();
  MetricsReport r = run_experiment(c);
  ASSERT_EQ(r.rewards.size(), c.n * c.T);
  EXPECT_EQ(r.budget_prepaid, Decimal(72));
  EXPECT_EQ(r.budget_paid, Decimal(72));
  EXPECT_LE(r.rewards_paid, r.budget_paid);
  const Decimal slack = Decimal(72) * Decimal(static_cast<unsigned long>(c.n)) *
                        Decimal(BigInt(1), pow10(c.L - 1));
  EXPECT_GT(r.rewards_paid, r.budget_paid - slack);
  for (const RewardRow& row : r.rewards) {
    EXPECT_LE(abs(row.reward - row.oracle_reward), Decimal(BigInt(1), pow10(c.L - 2)));
  }

  c.reward_timing = RewardTiming::kFinal;
  MetricsReport f = run_experiment(c);
  ASSERT_EQ(f.rewards.size(), c.n);
  for (const RewardRow& row : f.rewards) EXPECT_EQ(row.round, c.T);
  EXPECT_EQ(f.budget_prepaid, Decimal(36));
}

TEST(Experiment, MessageCountsPerRole) {
  for (std::size_t n : {2u, 4u}) {
    ExperimentConfig c = small_config();
    c.n = n;
    c.rewards = false;
    MetricsReport r = run_experiment(c);
    EXPECT_EQ(r.ledger.count(1, "fedavg", kSpRole).total(), 2 * n + 2);
    EXPECT_EQ(r.ledger.count(1, "fedavg", kCspRole).total(), 2u);
    for (std::size_t i = 1; i <= n; ++i) {
      EXPECT_EQ(r.ledger.count(1, "fedavg", participant_role(i)).total(), 2u);
    }
    // The last average goes to the requester only.
    EXPECT_EQ(r.ledger.count(2, "fedavg", kSpRole).total(), n + 3);
    EXPECT_EQ(r.ledger.count(2, "fedavg", kRequesterRole).total(), 1u);
  }
  ExperimentConfig c = small_config();
  MetricsReport r = run_experiment(c);
  EXPECT_EQ(r.ledger.count(1, "rewards", kSpRole).total(), 13 * c.n);
  EXPECT_EQ(r.ledger.count(1, "rewards", kCspRole).total(), 12 * c.n);
  EXPECT_EQ(r.ledger.count(1, "rewards", participant_role(1)).total(), 1u);
}

TEST(Experiment, SameSeedSameMetricsBytes) {
  ExperimentConfig c = small_config();
  c.dropout_rate = 0.3;
  c.strategy = Strategy::kRetransmit;
  std::ostringstream a, b, other;
  run_experiment(c, {&a, nullptr});
  run_experiment(c, {&b, nullptr});
  EXPECT_EQ(a.str(), b.str());
  EXPECT_FALSE(a.str().empty());
  c.seed = 2;
  run_experiment(c, {&other, nullptr});
  EXPECT_NE(a.str(), other.str());
}

TEST(Experiment, SocketTransportMatchesMemory) {
  ExperimentConfig c = small_config();
  std::ostringstream mem_out, sock_out;
  MetricsReport mem = run_experiment(c, {&mem_out, nullptr});
  c.transport = Transport::kSocket;
  MetricsReport sock = run_experiment(c, {&sock_out, nullptr});
  EXPECT_EQ(mem.final_model, sock.final_model);
  ASSERT_EQ(mem.rewards.size(), sock.rewards.size());
  for (std::size_t i = 0; i < mem.rewards.size(); ++i) {
    EXPECT_EQ(mem.rewards[i].reward, sock.rewards[i].reward);
  }
  std::string a = mem_out.str(), b = sock_out.str();
  auto strip = [](std::string s) {
    auto at = s.find("\"transport\":\"");
    return s.erase(at, s.find('"', at + 13) - at);
  };
  EXPECT_EQ(strip(a), strip(b));
}

TEST(Experiment, AllDroppedWithDiscardIsAnEmptyRound) {
  ExperimentConfig c = small_config();
  c.dropout_rate = 1.0;
  std::ostringstream out;
  EXPECT_EQ(code_of([&] { run_experiment(c, {&out, nullptr}); }), ErrorCode::kEmptyRound);
  std::string last;
  std::istringstream lines(out.str());
  for (std::string line; std::getline(lines, line);) last = line;
  nlohmann::json rec = nlohmann::json::parse(last);
  EXPECT_EQ(rec["type"], "failure");
  EXPECT_EQ(rec["code"], std::string(error_code_name(ErrorCode::kEmptyRound)));
  EXPECT_EQ(rec["round"], 1);
}

TEST(Experiment, RetransmitFoldsLateModelsIn) {
  ExperimentConfig c = small_config();
  c.dropout_rate = 0.5;
  c.strategy = Strategy::kRetransmit;
  c.retransmit_success_rate = 0.5;
  c.seed = 11;
  c.T = 3;
  MetricsReport r = run_experiment(c);
  std::size_t folded = 0, missed = 0;
  for (const RoundSummary& s : r.rounds) {
    folded += s.folded_in.size();
    missed += s.missed_release.size();
    EXPECT_EQ(s.accepted.size() + s.folded_in.size() + s.missed_release.size(), c.n);
    EXPECT_EQ(s.average, s.oracle);
  }
  std::size_t ok = 0;
  for (const DropEvent& e : r.dropout.events) ok += e.retransmit_ok ? 1 : 0;
  EXPECT_EQ(folded, ok);
  EXPECT_EQ(missed, r.dropout.events.size() - ok);
  EXPECT_GT(r.dropout.events.size(), 0u);
  EXPECT_TRUE(r.audit.ok);
}

TEST(Experiment, DiscardDropsLateModels) {
  ExperimentConfig c = small_config();
  c.dropout_rate = 0.4;
  c.seed = 4;
  c.rewards = false;
  MetricsReport r = run_experiment(c);
  std::size_t missed = 0;
  for (const RoundSummary& s : r.rounds) {
    EXPECT_TRUE(s.folded_in.empty());
    missed += s.missed_release.size();
    EXPECT_EQ(s.average, s.oracle);
  }
  EXPECT_EQ(missed, r.dropout.events.size());
}

TEST(Experiment, CsvData) {
  const std::string path = ::testing::TempDir() + "crowdfl_sim_data.csv";
  {
    std::ofstream out(path);
    out << "x1,x2,y\n";
    Rng rng(1);
    for (int i = 0; i < 60; ++i) {
      double a = rng.uniform01(), b = rng.uniform01();
      out << a << ',' << b << ',' << (0.5 * a - 1.5 * b) << '\n';
    }
  }
  ExperimentConfig c = small_config();
  c.data = path;
  MetricsReport r = run_experiment(c);
  EXPECT_EQ(r.final_model, r.shadow_model);
  c.model_dim = 3;
  EXPECT_EQ(code_of([&] { run_experiment(c); }), ErrorCode::kConfig);
  c.model_dim = 2;
  c.samples_per_participant = 5;
  EXPECT_EQ(code_of([&] { run_experiment(c); }), ErrorCode::kConfig);
  std::remove(path.c_str());
}

TEST(Socket, CspErrorsKeepTheirCode) {
  Rng rng(8);
  KeyMaterial km = generate_key_material(128, rng, {.keygen = {.test_mode = true}});
  ComputeServer csp(km.pk, km.csp_share(), Rng(1));
  CspSocketServer server(csp);
  SocketCspLink link(server.port());
  WireMessage bogus{MessageType::kBudget, 1, 1, {}};
  EXPECT_EQ(code_of([&] { link.exchange(bogus); }), ErrorCode::kStateMachine);
  SecureOps ops(km.pk, km.sp_server_share(), MaskingParams{}, link, Rng(2));
  Ciphertext x = enc(km.pk, BigInt(700), 0, rng);
  Ciphertext y = enc(km.pk, BigInt(2), 0, rng);
  Ciphertext q = ops.sdiv(x, y);
  EXPECT_EQ(dec(km.sk, km.pk, q), BigInt(350000000));
  EXPECT_GE(server.served(), 1u);
}

}  // namespace
}  // namespace crowdfl::sim
