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

// crowdfl: key generation, single-protocol exercises, experiments, benchmarks.
// Every command first prints its full invocation with all defaults filled in.
// Exit codes: 0 success, 1 configuration error, 2 protocol abort, 3 I/O error.

#include <chrono>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"

#include "crowdfl/crowdfl.hpp"

namespace {

using namespace crowdfl;
using Flags = std::vector<std::pair<std::string, std::string>>;

constexpr int kExitConfig = 1;
constexpr int kExitProtocol = 2;
constexpr int kExitIo = 3;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig: return kExitConfig;
    case ErrorCode::kIo: return kExitIo;
    default: return kExitProtocol;
  }
}

void echo(const std::string& command, const Flags& flags) {
  std::cout << "# crowdfl " << command;
  for (const auto& [k, v] : flags) {
    std::cout << " --" << k;
    if (!v.empty()) std::cout << ' ' << v;
  }
  std::cout << '\n';
}

BigInt parse_integer(const std::string& flag, const std::string& text) {
  Decimal v;
  try {
    v = parse_decimal(text);
  } catch (const Error&) {
    fail(ErrorCode::kConfig, "--" + flag + " must be an integer, got '" + text + "'");
  }
  require(v.get_den() == 1, ErrorCode::kConfig, "--" + flag + " must be an integer");
  return v.get_num();
}

KeyMaterial make_keys(unsigned zeta, std::uint64_t seed) {
  require(zeta >= kMinTestZeta, ErrorCode::kConfig, "--zeta must be at least 16");
  Rng rng = Rng(seed).fork("kgc");
  return generate_key_material(zeta, rng, {.keygen = {.test_mode = zeta < kDeploymentZeta}});
}

// Builds SP, CSP and the link between them for a one-off protocol call.
struct ProtocolBench {
  KeyMaterial keys;
  sim::MessageLedger ledger;
  ComputeServer csp;
  LocalCspLink link;
  SecureOps ops;

  ProtocolBench(unsigned zeta, std::uint64_t seed, MaskingParams params)
      : keys(make_keys(zeta, seed)),
        csp(keys.pk, keys.csp_share(), Rng(seed).fork("csp")),
        link(csp),
        ops(keys.pk, keys.sp_server_share(), params, link, Rng(seed).fork("sp")) {}
};

void check_masks(const MaskingParams& p, unsigned zeta) {
  // Worst-case modulus size for this zeta, before keygen.
  const long top = 2L * zeta - 2 - p.kappa - p.sigma - 2;
  require(top > static_cast<long>(bit_length(p.division_mask_lower())) + 2, ErrorCode::kConfig,
          "--zeta " + std::to_string(zeta) + " is too small for kappa=" +
              std::to_string(p.kappa) + " sigma=" + std::to_string(p.sigma) +
              " L=" + std::to_string(p.L));
}

int auto_kappa(const BigInt& worst) {
  int k = std::max<int>(32, static_cast<int>(bit_length(worst)) + 1);
  return (k + 7) / 8 * 8;
}

int cmd_keygen(unsigned zeta, const std::string& out, std::uint64_t seed) {
  echo("keygen", {{"zeta", std::to_string(zeta)}, {"out", out}, {"seed", std::to_string(seed)}});
  KeyMaterial km = make_keys(zeta, seed);
  Bytes bytes = serialize_key_material(km);
  std::ofstream f(out, std::ios::binary);
  require(static_cast<bool>(f), ErrorCode::kIo, "cannot write " + out);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(f), ErrorCode::kIo, "write failed for " + out);
  std::cout << "modulus_bits " << bit_length(km.pk.n) << '\n'
            << "wrote " << bytes.size() << " bytes to " << out << '\n';
  if (zeta < kDeploymentZeta) std::cout << "warning: test-size key, not for deployment\n";
  return 0;
}

int cmd_sdiv(const std::string& xs, const std::string& ys, int L, unsigned zeta, int kappa,
             int sigma, std::uint64_t seed) {
  const BigInt x = parse_integer("x", xs);
  const BigInt y = parse_integer("y", ys);
  require(x >= 0, ErrorCode::kConfig, "--x must be non-negative");
  require(y > 0, ErrorCode::kConfig, "--y must be positive");
  require(L >= 0 && L <= 30, ErrorCode::kConfig, "--L must be in [0, 30]");
  if (kappa == 0) kappa = auto_kappa(x > y ? x : y);
  echo("sdiv", {{"x", x.get_str()}, {"y", y.get_str()}, {"L", std::to_string(L)},
                {"zeta", std::to_string(zeta)}, {"kappa", std::to_string(kappa)},
                {"sigma", std::to_string(sigma)}, {"seed", std::to_string(seed)}});
  require(x < pow2(kappa) && y < pow2(kappa), ErrorCode::kConfig,
          "inputs must be below 2^kappa");
  MaskingParams params{sigma, kappa, L};
  check_masks(params, zeta);
  ProtocolBench b(zeta, seed, params);
  Rng rng = Rng(seed).fork("inputs");
  Ciphertext cx = enc(b.keys.pk, x, 0, rng);
  Ciphertext cy = enc(b.keys.pk, y, 0, rng);
  Ciphertext q = b.ops.sdiv(cx, cy);
  const BigInt got = dec(b.keys.sk, b.keys.pk, q);
  const BigInt want = floor_div(x * pow10(L), y);
  std::cout << got << " = " << want << '\n';
  require(got == want, ErrorCode::kCorruptedSession, "secure division disagrees with oracle");
  return 0;
}

int cmd_smul(const std::string& xs, const std::string& ys, unsigned zeta, int kappa, int sigma,
             std::uint64_t seed) {
  const BigInt x = parse_integer("x", xs);
  const BigInt y = parse_integer("y", ys);
  if (kappa == 0) kappa = auto_kappa(abs(x) > abs(y) ? BigInt(abs(x)) : BigInt(abs(y)));
  echo("smul", {{"x", x.get_str()}, {"y", y.get_str()}, {"zeta", std::to_string(zeta)},
                {"kappa", std::to_string(kappa)}, {"sigma", std::to_string(sigma)},
                {"seed", std::to_string(seed)}});
  MaskingParams params{sigma, kappa, 0};
  check_masks(params, zeta);
  ProtocolBench b(zeta, seed, params);
  FixedPointCodec codec = FixedPointCodec::make(0, kappa, b.keys.pk.n);
  Rng rng = Rng(seed).fork("inputs");
  Ciphertext cx = enc(b.keys.pk, codec.encode_integer(x), 0, rng);
  Ciphertext cy = enc(b.keys.pk, codec.encode_integer(y), 0, rng);
  Ciphertext p = b.ops.smul(cx, cy);
  const BigInt got = codec.to_signed(dec(b.keys.sk, b.keys.pk, p));
  const BigInt want = x * y;
  std::cout << got << " = " << want << '\n';
  require(got == want, ErrorCode::kCorruptedSession, "secure product disagrees with oracle");
  return 0;
}

// "w1,w2,...@delta"
ModelVector parse_model(const std::string& text) {
  const auto at = text.find('@');
  require(at != std::string::npos, ErrorCode::kConfig,
          "--model expects weights@delta, got '" + text + "'");
  ModelVector m;
  std::stringstream weights(text.substr(0, at));
  for (std::string item; std::getline(weights, item, ',');) {
    try {
      m.weights.push_back(parse_decimal(item));
    } catch (const Error&) {
      fail(ErrorCode::kConfig, "bad weight '" + item + "' in --model");
    }
  }
  const BigInt delta = parse_integer("model delta", text.substr(at + 1));
  require(delta >= 1 && delta < pow2(32), ErrorCode::kConfig, "delta must be in [1, 2^32)");
  m.delta = delta.get_ui();
  require(!m.weights.empty(), ErrorCode::kConfig, "--model needs at least one weight");
  return m;
}

int cmd_avg(const std::vector<std::string>& model_texts, int L, unsigned zeta,
            const std::string& bound_text, std::uint64_t seed) {
  require(!model_texts.empty(), ErrorCode::kConfig, "give at least one --model");
  std::vector<ModelVector> models;
  for (const std::string& t : model_texts) models.push_back(parse_model(t));
  for (const ModelVector& m : models) {
    require(m.dim() == models[0].dim(), ErrorCode::kConfig, "models differ in dimension");
  }
  const Decimal bound = parse_decimal(bound_text);
  const Decimal offset = bound + 1;
  BigInt delta_sum = 0;
  for (const ModelVector& m : models) delta_sum += static_cast<unsigned long>(m.delta);
  const int kappa =
      auto_kappa(delta_sum * (floor_scaled(bound + offset, 0) + 1) * pow10(L));
  Flags flags;
  for (const std::string& t : model_texts) flags.push_back({"model", t});
  flags.insert(flags.end(), {{"L", std::to_string(L)}, {"zeta", std::to_string(zeta)},
                             {"weight-bound", bound_text}, {"seed", std::to_string(seed)}});
  echo("avg", flags);
  MaskingParams params{80, kappa, L};
  check_masks(params, zeta);
  ProtocolBench b(zeta, seed, params);
  EncodingParams ep{FixedPointCodec::make(L, kappa, b.keys.pk.n), offset, bound};
  RoundState state(b.keys.pk, models[0].dim(), 1);
  Rng rng = Rng(seed).fork("participants");
  for (std::size_t i = 0; i < models.size(); ++i) {
    state.accept(make_submission(b.keys.pk, ep, models[i], i + 1, 1, false, rng));
  }
  std::vector<Ciphertext> avg = prifedavg_round(state, b.ops);
  std::vector<Decimal> got = participant_decrypt(
      b.keys.pk, b.keys.participant_share(), ep,
      release_average(b.keys.pk, b.keys.sp_participant_share(), avg));
  std::vector<Decimal> want = fedavg_plain(models, L);
  for (std::size_t j = 0; j < got.size(); ++j) {
    std::cout << format_decimal(got[j], L) << " = " << format_decimal(want[j], L) << '\n';
  }
  require(got == want, ErrorCode::kCorruptedSession, "secure average disagrees with oracle");
  return 0;
}

void print_summary(const sim::MetricsReport& r, int L) {
  for (const sim::RoundSummary& s : r.rounds) {
    std::cout << "round " << s.round << ": accepted " << s.accepted.size() << ", folded "
              << s.folded_in.size() << ", discarded " << s.discarded.size() << ", missed "
              << s.missed_release.size() << ", max deviation "
              << format_decimal(s.max_deviation, L) << '\n';
  }
  std::cout << "final model:";
  for (const Decimal& w : r.final_model) std::cout << ' ' << format_decimal(w, L);
  std::cout << "\ntest loss " << std::fixed << std::setprecision(6) << r.final_loss
            << " (plaintext pipeline " << r.shadow_loss << ")\n"
            << "key hygiene audit: " << (r.audit.ok ? "ok" : "VIOLATED") << " ("
            << r.audit.events << " decryptions checked)\n";
  for (const std::string& v : r.audit.violations) std::cout << "  " << v << '\n';
}

int cmd_run(const std::string& config, const std::string& metrics_out,
            const std::string& rewards_out) {
  echo("run", {{"config", config}, {"metrics-out", metrics_out},
               {"rewards-out", rewards_out.empty() ? "''" : rewards_out}});
  sim::ExperimentConfig cfg = sim::load_config(config);
  std::cout << "# effective config\n";
  std::istringstream lines(sim::format_config(cfg));
  for (std::string line; std::getline(lines, line);) std::cout << "#   " << line << '\n';
  std::ofstream metrics(metrics_out);
  require(static_cast<bool>(metrics), ErrorCode::kIo, "cannot write " + metrics_out);
  std::ofstream rewards;
  if (!rewards_out.empty()) {
    rewards.open(rewards_out);
    require(static_cast<bool>(rewards), ErrorCode::kIo, "cannot write " + rewards_out);
    rewards << "round,participant,delta,reward,oracle\n";
  }
  sim::MetricsReport r =
      sim::run_experiment(cfg, {&metrics, rewards_out.empty() ? nullptr : &rewards});
  metrics.flush();
  require(static_cast<bool>(metrics), ErrorCode::kIo, "write failed for " + metrics_out);
  print_summary(r, cfg.L);
  std::cout << "metrics written to " << metrics_out << '\n';
  return r.audit.ok ? 0 : kExitProtocol;
}

int cmd_rewards(const std::string& config, const std::string& csv_out) {
  echo("rewards", {{"config", config}, {"csv-out", csv_out.empty() ? "''" : csv_out}});
  sim::ExperimentConfig cfg = sim::load_config(config);
  require(cfg.rewards, ErrorCode::kConfig, "rewards are disabled in " + config);
  std::ofstream csv;
  if (!csv_out.empty()) {
    csv.open(csv_out);
    require(static_cast<bool>(csv), ErrorCode::kIo, "cannot write " + csv_out);
    csv << "round,participant,delta,reward,oracle\n";
  }
  sim::MetricsReport r = sim::run_experiment(cfg, {nullptr, csv_out.empty() ? nullptr : &csv});
  const int L = cfg.L;
  std::cout << "round participant delta reward oracle\n";
  for (const sim::RewardRow& row : r.rewards) {
    std::cout << row.round << ' ' << row.participant << ' ' << row.delta << ' '
              << format_decimal(row.reward, L) << ' ' << format_decimal(row.oracle_reward, L)
              << '\n';
  }
  std::cout << "budget prepaid " << format_decimal(r.budget_prepaid, L) << ", debited "
            << format_decimal(r.budget_paid, L) << ", paid out "
            << format_decimal(r.rewards_paid, L) << '\n';
  return 0;
}

template <typename F>
double mean_ms(std::size_t iters, F&& body) {
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < iters; ++i) body();
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(stop - start).count() /
         static_cast<double>(iters);
}

int cmd_bench(const std::string& config, std::size_t iters) {
  echo("bench", {{"config", config.empty() ? "''" : config}, {"iters", std::to_string(iters)}});
  require(iters >= 1, ErrorCode::kConfig, "--iters must be at least 1");
  sim::ExperimentConfig cfg = config.empty() ? sim::ExperimentConfig{} : sim::load_config(config);
  cfg.validate();
  const int kappa = cfg.effective_kappa();
  MaskingParams params{cfg.sigma, kappa, cfg.L};
  ProtocolBench b(cfg.zeta, cfg.seed, params);
  const PublicKey& pk = b.keys.pk;
  Rng rng = Rng(cfg.seed).fork("bench");
  const Ciphertext c1 = enc(pk, BigInt(123456789), 0, rng);
  const Ciphertext c2 = enc(pk, BigInt(1000), 0, rng);
  auto row = [&](const std::string& op, double ms) {
    std::cout << op << " zeta=" << cfg.zeta << " mean_ms=" << std::fixed << std::setprecision(3)
              << ms << '\n';
  };
  std::cout << "modulus_bits " << bit_length(pk.n) << " kappa " << kappa << '\n';
  row("enc", mean_ms(iters, [&] { enc(pk, BigInt(42), 0, rng); }));
  row("pdec", mean_ms(iters, [&] { pdec(b.keys.csp_share(), pk, c1); }));
  row("tdec", mean_ms(iters, [&] {
        tdec(pdec(b.keys.csp_share(), pk, c1), pdec(b.keys.sp_server_share(), pk, c1), pk);
      }));
  row("sdiv", mean_ms(iters, [&] { b.ops.sdiv(c1, c2); }));
  row("smul", mean_ms(iters, [&] { b.ops.smul(c1, c2); }));

  EncodingParams ep{FixedPointCodec::make(cfg.L, kappa, pk.n), cfg.weight_offset(), cfg.bound()};
  std::vector<EncryptedSubmission> subs;
  for (std::size_t i = 0; i < cfg.n; ++i) {
    ModelVector m{std::vector<Decimal>(cfg.model_dim, Decimal(BigInt(static_cast<long>(i)), 7)),
                  cfg.samples_per_participant};
    subs.push_back(make_submission(pk, ep, m, i + 1, 1, false, rng));
  }
  row("submission(dim=" + std::to_string(cfg.model_dim) + ")", mean_ms(iters, [&] {
        ModelVector m{std::vector<Decimal>(cfg.model_dim, Decimal(1)), 1};
        make_submission(pk, ep, m, 1, 1, false, rng);
      }));
  row("prifedavg(n=" + std::to_string(cfg.n) + ",dim=" + std::to_string(cfg.model_dim) + ")",
      mean_ms(iters, [&] {
        RoundState state(pk, cfg.model_dim, 1);
        for (const auto& s : subs) state.accept(s);
        prifedavg_round(state, b.ops);
      }));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crowdfl: encrypted federated averaging and rewards toolkit"};
  app.require_subcommand(1);

  unsigned zeta = 512;
  std::uint64_t seed = 1;
  std::string out = "keys.bin";
  auto* keygen = app.add_subcommand("keygen", "generate key material and write it to a file");
  keygen->add_option("--zeta", zeta, "prime size in bits")->capture_default_str();
  keygen->add_option("--out", out, "output file")->capture_default_str();
  keygen->add_option("--seed", seed, "random seed")->capture_default_str();

  std::string x, y;
  int L = 6;
  int kappa = 0;
  int sigma = 80;
  auto* sdiv = app.add_subcommand("sdiv", "secure division of two integers, checked against x*10^L/y");
  sdiv->add_option("--x", x, "dividend")->required();
  sdiv->add_option("--y", y, "divisor")->required();
  sdiv->add_option("--L", L, "decimal places")->capture_default_str();
  sdiv->add_option("--zeta", zeta, "prime size in bits")->capture_default_str();
  sdiv->add_option("--kappa", kappa, "input bound exponent, 0 = smallest fitting")
      ->capture_default_str();
  sdiv->add_option("--sigma", sigma, "statistical mask bits")->capture_default_str();
  sdiv->add_option("--seed", seed, "random seed")->capture_default_str();

  auto* smul = app.add_subcommand("smul", "secure product of two signed integers");
  smul->add_option("--x", x, "left factor")->required();
  smul->add_option("--y", y, "right factor")->required();
  smul->add_option("--zeta", zeta, "prime size in bits")->capture_default_str();
  smul->add_option("--kappa", kappa, "input bound exponent, 0 = smallest fitting")
      ->capture_default_str();
  smul->add_option("--sigma", sigma, "statistical mask bits")->capture_default_str();
  smul->add_option("--seed", seed, "random seed")->capture_default_str();

  std::vector<std::string> models;
  std::string bound = "100";
  auto* avg = app.add_subcommand("avg", "encrypted weighted average of models given as w1,w2@delta");
  avg->add_option("--model", models, "one model, repeatable")->required();
  avg->add_option("--L", L, "decimal places")->capture_default_str();
  avg->add_option("--zeta", zeta, "prime size in bits")->capture_default_str();
  avg->add_option("--weight-bound", bound, "bound on |w|")->capture_default_str();
  avg->add_option("--seed", seed, "random seed")->capture_default_str();

  std::string config, metrics_out = "metrics.jsonl", rewards_out;
  auto* run = app.add_subcommand("run", "run a full experiment from a config file");
  run->add_option("--config", config, "key=value config file")->required();
  run->add_option("--metrics-out", metrics_out, "JSON lines metrics file")->capture_default_str();
  run->add_option("--rewards-out", rewards_out, "optional reward table CSV");

  std::string csv_out;
  auto* rewards = app.add_subcommand("rewards", "run an experiment and print its reward table");
  rewards->add_option("--config", config, "key=value config file")->required();
  rewards->add_option("--csv-out", csv_out, "optional reward table CSV");

  std::size_t iters = 5;
  auto* bench = app.add_subcommand("bench", "time the primitives and one averaging round");
  bench->add_option("--config", config, "key=value config file");
  bench->add_option("--iters", iters, "iterations per measurement")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (keygen->parsed()) return cmd_keygen(zeta, out, seed);
    if (sdiv->parsed()) return cmd_sdiv(x, y, L, zeta, kappa, sigma, seed);
    if (smul->parsed()) return cmd_smul(x, y, zeta, kappa, sigma, seed);
    if (avg->parsed()) return cmd_avg(models, L, zeta, bound, seed);
    if (run->parsed()) return cmd_run(config, metrics_out, rewards_out);
    if (rewards->parsed()) return cmd_rewards(config, csv_out);
    if (bench->parsed()) return cmd_bench(config, iters);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitProtocol;
  }
  return kExitConfig;
}
