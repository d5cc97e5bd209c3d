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

// Dropout handling. Discard: submissions outside the acceptance window are
// dropped and the round averages what arrived. Retransmit: a late submission
// that arrives before the average is released is folded into the sums and the
// division is rerun.

#ifndef CROWDFL_DROPOUT_HPP_
#define CROWDFL_DROPOUT_HPP_

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "crowdfl/error.hpp"
#include "crowdfl/fedavg.hpp"
#include "crowdfl/fixedpoint.hpp"
#include "crowdfl/protocols.hpp"

namespace crowdfl {

// Closed interval [t0, t0 + t_delta] in scheduler ticks.
struct AcceptanceWindow {
  std::uint64_t t0 = 0;
  std::uint64_t t_delta = 1;

  static AcceptanceWindow make(std::uint64_t t0, std::uint64_t t_delta) {
    require(t_delta > 0, ErrorCode::kConfig, "window length must be positive");
    return {t0, t_delta};
  }

  bool contains(std::uint64_t tick) const {
    return tick >= t0 && tick <= t0 + t_delta;
  }
};

template <typename T>
struct Timestamped {
  T item;
  std::uint64_t tick = 0;
};

template <typename T>
struct WindowPartition {
  std::vector<Timestamped<T>> accepted;
  std::vector<Timestamped<T>> discarded;
};

template <typename T>
WindowPartition<T> collect_with_window(std::vector<Timestamped<T>> arrivals,
                                       const AcceptanceWindow& window) {
  WindowPartition<T> out;
  for (auto& a : arrivals) {
    (window.contains(a.tick) ? out.accepted : out.discarded).push_back(std::move(a));
  }
  return out;
}

struct DropoutReport {
  std::vector<std::size_t> dropped;
  std::vector<Decimal> delta_direct;  // avg(kept) - avg(all)
  std::vector<Decimal> delta_closed;  // sum_dropped delta_i (avg(all) - w_i) / sum_kept delta_i
  std::size_t k = 0;
};

// Shift of the exact average when the models at `dropped` (indices) are left
// out, computed both directly and in closed form.
inline DropoutReport discard_delta(const std::vector<ModelVector>& models,
                                   const std::vector<std::size_t>& dropped) {
  const std::set<std::size_t> drop(dropped.begin(), dropped.end());
  require(drop.size() == dropped.size(), ErrorCode::kDomain,
          "dropped indices repeat");
  require(!drop.empty() && drop.size() < models.size(), ErrorCode::kDomain,
          "need 1 <= k < n dropped models, got k=" + std::to_string(drop.size()) +
              " of n=" + std::to_string(models.size()));
  for (std::size_t i : drop) {
    require(i < models.size(), ErrorCode::kDomain, "dropped index out of range");
  }
  std::vector<ModelVector> kept;
  BigInt kept_delta = 0;
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (drop.count(i) == 0) {
      kept.push_back(models[i]);
      kept_delta += static_cast<unsigned long>(models[i].delta);
    }
  }
  const std::vector<Decimal> full = fedavg_exact(models);
  const std::vector<Decimal> reduced = fedavg_exact(kept);

  DropoutReport report;
  report.dropped = dropped;
  report.k = drop.size();
  for (std::size_t j = 0; j < full.size(); ++j) {
    Decimal direct = reduced[j] - full[j];
    direct.canonicalize();
    Decimal numerator = 0;
    for (std::size_t i : drop) {
      numerator += Decimal(static_cast<unsigned long>(models[i].delta)) *
                   (full[j] - models[i].weights[j]);
    }
    Decimal closed = numerator / Decimal(kept_delta);
    closed.canonicalize();
    report.delta_direct.push_back(direct);
    report.delta_closed.push_back(closed);
  }
  return report;
}

// Folds one late submission into the round and reruns the division. Several
// late arrivals are handled by calling this once per arrival.
inline std::vector<Ciphertext> retransmit_update(RoundState& state,
                                                 const EncryptedSubmission& late,
                                                 SecureOps& ops) {
  require(!state.released(), ErrorCode::kDiscardedLate,
          "participant " + std::to_string(late.participant_id) +
              " arrived after round " + std::to_string(state.round()) +
              " was released");
  state.accept(late);
  return prifedavg_round(state, ops);
}

}  // namespace crowdfl

#endif  // CROWDFL_DROPOUT_HPP_
