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

// Deterministic message scheduling and per-role message accounting.

#ifndef CROWDFL_SIM_NETWORK_HPP_
#define CROWDFL_SIM_NETWORK_HPP_

#include <algorithm>
#include <cstdint>
#include <map>
#include <queue>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "crowdfl/protocols.hpp"
#include "crowdfl/wire.hpp"

namespace crowdfl::sim {

inline std::string participant_role(std::uint64_t id) {
  return "P" + std::to_string(id);
}

inline constexpr const char* kSpRole = "SP";
inline constexpr const char* kCspRole = "CSP";
inline constexpr const char* kRequesterRole = "REQ";

struct MessageCount {
  std::uint64_t sent = 0;
  std::uint64_t received = 0;

  std::uint64_t total() const { return sent + received; }
  friend bool operator==(const MessageCount&, const MessageCount&) = default;
};

// Counts every message by (round, phase, role). A role's communication rounds
// in a phase are the messages it sends plus the messages it receives.
class MessageLedger {
 public:
  using Key = std::tuple<std::uint32_t, std::string, std::string>;

  void record(std::uint32_t round, const std::string& phase,
              const std::string& from, const std::string& to) {
    counts_[{round, phase, from}].sent++;
    counts_[{round, phase, to}].received++;
  }

  MessageCount count(std::uint32_t round, const std::string& phase,
                     const std::string& role) const {
    auto it = counts_.find({round, phase, role});
    return it == counts_.end() ? MessageCount{} : it->second;
  }

  const std::map<Key, MessageCount>& all() const { return counts_; }

 private:
  std::map<Key, MessageCount> counts_;
};

struct Envelope {
  std::string from;
  std::string to;
  WireMessage message;
  std::uint64_t deliver_at = 0;
  std::uint64_t seq = 0;
};

// Single-threaded scheduler. Messages are delivered in (tick, send order);
// draining a tick advances the clock to it.
class Scheduler {
 public:
  Scheduler(MessageLedger& ledger) : ledger_(ledger) {}

  void send(std::string from, std::string to, WireMessage message,
            std::uint64_t delay_ticks, const std::string& phase) {
    ledger_.record(message.round, phase, from, to);
    Envelope e{std::move(from), std::move(to), std::move(message), now_ + delay_ticks, seq_++};
    // Serialize and reparse so nothing travels that the codec cannot carry.
    e.message = decode_message(encode_message(e.message));
    queue_.push(std::move(e));
  }

  // Delivers every message due at or before `until`, in order.
  std::vector<Envelope> deliver_until(std::uint64_t until) {
    std::vector<Envelope> out;
    while (!queue_.empty() && queue_.top().deliver_at <= until) {
      out.push_back(queue_.top());
      queue_.pop();
      now_ = std::max(now_, out.back().deliver_at);
    }
    now_ = std::max(now_, until);
    return out;
  }

  std::uint64_t now() const { return now_; }
  bool idle() const { return queue_.empty(); }

 private:
  struct Later {
    bool operator()(const Envelope& a, const Envelope& b) const {
      return std::tie(a.deliver_at, a.seq) > std::tie(b.deliver_at, b.seq);
    }
  };

  MessageLedger& ledger_;
  std::priority_queue<Envelope, std::vector<Envelope>, Later> queue_;
  std::uint64_t now_ = 0;
  std::uint64_t seq_ = 0;
};

// Wraps SP's link to CSP and books each request and response in the ledger.
class MeteredLink : public CspLink {
 public:
  MeteredLink(CspLink& inner, MessageLedger& ledger)
      : inner_(inner), ledger_(ledger) {}

  void set_phase(std::string phase) { phase_ = std::move(phase); }

  WireMessage exchange(const WireMessage& request) override {
    ledger_.record(request.round, phase_, kSpRole, kCspRole);
    WireMessage response = inner_.exchange(request);
    ledger_.record(request.round, phase_, kCspRole, kSpRole);
    return response;
  }

 private:
  CspLink& inner_;
  MessageLedger& ledger_;
  std::string phase_ = "fedavg";
};

}  // namespace crowdfl::sim

#endif  // CROWDFL_SIM_NETWORK_HPP_
