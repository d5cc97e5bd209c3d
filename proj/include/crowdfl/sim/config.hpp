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

// Experiment configuration: a key=value text file, '#' starts a comment.

#ifndef CROWDFL_SIM_CONFIG_HPP_
#define CROWDFL_SIM_CONFIG_HPP_

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <type_traits>
#include <sstream>
#include <string>
#include <vector>

#include "crowdfl/bigint.hpp"
#include "crowdfl/error.hpp"
#include "crowdfl/fixedpoint.hpp"
#include "crowdfl/rewards.hpp"

namespace crowdfl::sim {

enum class Strategy { kDiscard, kRetransmit };
enum class RewardTiming { kPerRound, kFinal };
enum class Transport { kMemory, kSocket };

struct ExperimentConfig {
  std::size_t n = 4;
  std::size_t T = 2;
  std::size_t model_dim = 2;
  unsigned zeta = 1024;
  int L = 6;
  int kappa = 0;  // 0 picks the smallest workable value
  int sigma = 80;
  double eta = 0.001;
  std::size_t B = 50;
  std::size_t E = 30;
  std::string b_t = "36";
  double dropout_rate = 0;
  Strategy strategy = Strategy::kDiscard;
  double retransmit_success_rate = 0.5;
  std::uint64_t seed = 1;
  std::size_t samples_per_participant = 40;
  std::string weight_bound = "100";
  std::string offset;  // empty means weight_bound + 1
  std::uint64_t window_ticks = 10;
  bool rewards = true;
  RewardTiming reward_timing = RewardTiming::kPerRound;
  Transport transport = Transport::kMemory;
  bool record_timing = false;
  SplitMode split_mode = SplitMode::kUniform;
  bool allow_test_keys = true;
  std::string data;  // CSV path; synthetic data when empty
  double noise = 0.1;

  Decimal budget() const { return parse_decimal(b_t); }
  Decimal bound() const { return parse_decimal(weight_bound); }
  Decimal weight_offset() const {
    return offset.empty() ? Decimal(bound() + 1) : parse_decimal(offset);
  }

  // Smallest kappa that satisfies every magnitude constraint of the run.
  int required_kappa() const {
    BigInt worst = floor_scaled(fedavg_numerator_bound(), 0) + 1;
    if (rewards) {
      BigInt w_int = floor_scaled(bound(), 0) + 1;
      BigInt r = reward_magnitude_bound(n, model_dim, w_int,
                                        BigInt(static_cast<unsigned long>(samples_per_participant)),
                                        budget(), L);
      if (r > worst) worst = r;
    }
    if (pow10(L) > worst) worst = pow10(L);
    return static_cast<int>(bit_length(worst)) + 1;
  }

  int effective_kappa() const {
    if (kappa > 0) return kappa;
    int k = std::max(32, required_kappa());
    return (k + 7) / 8 * 8;
  }

  // n * max_delta * (W + C) * 10^L: the largest averaging numerator.
  Decimal fedavg_numerator_bound() const {
    return Decimal(static_cast<unsigned long>(n)) *
           Decimal(static_cast<unsigned long>(samples_per_participant)) *
           (bound() + weight_offset()) * Decimal(pow10(L));
  }

  void validate() const {
    auto need = [](bool ok, const std::string& what) {
      require(ok, ErrorCode::kConfig, what);
    };
    need(n >= 1, "n must be at least 1");
    need(T >= 1, "T must be at least 1");
    need(model_dim >= 1, "model_dim must be at least 1");
    need(L >= 0 && L <= 30, "L must be in [0, 30]");
    need(sigma >= 2, "sigma must be at least 2");
    need(kappa >= 0, "kappa must be non-negative");
    need(eta > 0 && B >= 1 && E >= 1, "training needs eta > 0, B >= 1, E >= 1");
    need(dropout_rate >= 0 && dropout_rate <= 1, "dropout_rate must be in [0, 1]");
    need(retransmit_success_rate >= 0 && retransmit_success_rate <= 1,
         "retransmit_success_rate must be in [0, 1]");
    need(samples_per_participant >= 1, "samples_per_participant must be at least 1");
    need(window_ticks >= 1, "window_ticks must be at least 1");
    need(noise >= 0, "noise must be non-negative");
    need(zeta >= kMinTestZeta, "zeta must be at least 16");
    need(allow_test_keys || zeta >= kDeploymentZeta,
         "zeta below 1024 needs allow_test_keys=true");
    need(budget() > 0, "b_t must be positive");
    need(bound() > 0, "weight_bound must be positive");
    const Decimal c = weight_offset();
    need(c.get_den() == 1 && c > bound(), "offset must be an integer above weight_bound");

    const int k = effective_kappa();
    need(k >= required_kappa(),
         "kappa=" + std::to_string(k) + " is too small for this run; need at least " +
             std::to_string(required_kappa()));
    // N has at least 2 zeta - 1 bits; check the worst case before keygen.
    const long n_floor_log2 = 2L * zeta - 2;
    const long mask_top = n_floor_log2 - k - sigma - 2;
    MaskingParams mp{sigma, k, L};
    need(mask_top > static_cast<long>(bit_length(mp.division_mask_lower())) + 2,
         "zeta=" + std::to_string(zeta) + " leaves no room for division masks with kappa=" +
             std::to_string(k) + " sigma=" + std::to_string(sigma) + " L=" + std::to_string(L));
    // Rescaling to 2L and signed products need headroom below N/2.
    need(2L * k + 3 < n_floor_log2, "zeta too small for kappa");
  }

  std::map<std::string, std::string> to_map() const;
};

inline std::string bool_text(bool v) { return v ? "true" : "false"; }

inline std::string double_text(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

inline std::map<std::string, std::string> ExperimentConfig::to_map() const {
  return {
      {"n", std::to_string(n)},
      {"T", std::to_string(T)},
      {"model_dim", std::to_string(model_dim)},
      {"zeta", std::to_string(zeta)},
      {"L", std::to_string(L)},
      {"kappa", std::to_string(effective_kappa())},
      {"sigma", std::to_string(sigma)},
      {"eta", double_text(eta)},
      {"B", std::to_string(B)},
      {"E", std::to_string(E)},
      {"b_t", b_t},
      {"dropout_rate", double_text(dropout_rate)},
      {"strategy", strategy == Strategy::kDiscard ? "discard" : "retransmit"},
      {"retransmit_success_rate", double_text(retransmit_success_rate)},
      {"seed", std::to_string(seed)},
      {"samples_per_participant", std::to_string(samples_per_participant)},
      {"weight_bound", weight_bound},
      {"offset", format_decimal(weight_offset(), 0)},
      {"window_ticks", std::to_string(window_ticks)},
      {"rewards", bool_text(rewards)},
      {"reward_timing", reward_timing == RewardTiming::kPerRound ? "per_round" : "final"},
      {"transport", transport == Transport::kMemory ? "memory" : "socket"},
      {"record_timing", bool_text(record_timing)},
      {"split_mode", split_mode == SplitMode::kUniform ? "uniform" : "small_second_share"},
      {"allow_test_keys", bool_text(allow_test_keys)},
      {"data", data},
      {"noise", double_text(noise)},
  };
}

namespace detail {

inline std::string trim(const std::string& s) {
  const char* ws = " \t\r\n";
  std::size_t a = s.find_first_not_of(ws);
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(ws);
  return s.substr(a, b - a + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  in >> out;
  require(!in.fail() && in.eof(), ErrorCode::kConfig,
          "bad value for " + key + ": '" + value + "'");
  if constexpr (std::is_unsigned_v<T>) {
    require(value.find('-') == std::string::npos, ErrorCode::kConfig,
            "bad value for " + key + ": '" + value + "'");
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  fail(ErrorCode::kConfig, "bad value for " + key + ": '" + value + "'");
}

}  // namespace detail

inline void apply_setting(ExperimentConfig& c, const std::string& key,
                          const std::string& value) {
  using detail::parse_bool;
  using detail::parse_number;
  auto decimal = [&](std::string& field) {
    parse_decimal(value);
    field = value;
  };
  if (key == "n") c.n = parse_number<std::size_t>(key, value);
  else if (key == "T") c.T = parse_number<std::size_t>(key, value);
  else if (key == "model_dim") c.model_dim = parse_number<std::size_t>(key, value);
  else if (key == "zeta") c.zeta = parse_number<unsigned>(key, value);
  else if (key == "L") c.L = parse_number<int>(key, value);
  else if (key == "kappa") c.kappa = parse_number<int>(key, value);
  else if (key == "sigma") c.sigma = parse_number<int>(key, value);
  else if (key == "eta") c.eta = parse_number<double>(key, value);
  else if (key == "B") c.B = parse_number<std::size_t>(key, value);
  else if (key == "E") c.E = parse_number<std::size_t>(key, value);
  else if (key == "b_t") decimal(c.b_t);
  else if (key == "dropout_rate") c.dropout_rate = parse_number<double>(key, value);
  else if (key == "retransmit_success_rate")
    c.retransmit_success_rate = parse_number<double>(key, value);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "samples_per_participant")
    c.samples_per_participant = parse_number<std::size_t>(key, value);
  else if (key == "weight_bound") decimal(c.weight_bound);
  else if (key == "offset") decimal(c.offset);
  else if (key == "window_ticks") c.window_ticks = parse_number<std::uint64_t>(key, value);
  else if (key == "rewards") c.rewards = parse_bool(key, value);
  else if (key == "record_timing") c.record_timing = parse_bool(key, value);
  else if (key == "allow_test_keys") c.allow_test_keys = parse_bool(key, value);
  else if (key == "data") c.data = value;
  else if (key == "noise") c.noise = parse_number<double>(key, value);
  else if (key == "strategy") {
    if (value == "discard") c.strategy = Strategy::kDiscard;
    else if (value == "retransmit") c.strategy = Strategy::kRetransmit;
    else fail(ErrorCode::kConfig, "strategy must be discard or retransmit");
  } else if (key == "reward_timing") {
    if (value == "per_round") c.reward_timing = RewardTiming::kPerRound;
    else if (value == "final") c.reward_timing = RewardTiming::kFinal;
    else fail(ErrorCode::kConfig, "reward_timing must be per_round or final");
  } else if (key == "transport") {
    if (value == "memory") c.transport = Transport::kMemory;
    else if (value == "socket") c.transport = Transport::kSocket;
    else fail(ErrorCode::kConfig, "transport must be memory or socket");
  } else if (key == "split_mode") {
    if (value == "uniform") c.split_mode = SplitMode::kUniform;
    else if (value == "small_second_share") c.split_mode = SplitMode::kSmallSecondShare;
    else fail(ErrorCode::kConfig, "split_mode must be uniform or small_second_share");
  } else {
    fail(ErrorCode::kConfig, "unknown key '" + key + "'");
  }
}

inline ExperimentConfig parse_config(const std::string& text,
                                     const std::string& origin = "<config>") {
  ExperimentConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::kConfig,
            origin + ":" + std::to_string(line_no) + ": expected key=value");
    try {
      apply_setting(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kConfig && e.code() != ErrorCode::kDomain) throw;
      throw Error(ErrorCode::kConfig, origin + ":" + std::to_string(line_no) + ": " + e.detail());
    }
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kConfig, "cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

inline std::string format_config(const ExperimentConfig& c) {
  std::string out;
  for (const auto& [k, v] : c.to_map()) out += k + "=" + v + "\n";
  return out;
}

}  // namespace crowdfl::sim

#endif  // CROWDFL_SIM_CONFIG_HPP_
