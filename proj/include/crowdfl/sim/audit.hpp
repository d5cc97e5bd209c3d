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

// Key hygiene instrumentation. Every completed decryption in a simulated run
// is recorded with the role that performed it. The simulator also registers
// every sensitive plaintext of the run (models, counts, sums, averages,
// distances, weights, rewards); check() then verifies that
//   - SP completes no decryption at all,
//   - CSP only opens masked protocol values, none equal to a sensitive value,
//   - participants open only the released average and their own reward,
//   - the requester opens only the final model.

#ifndef CROWDFL_SIM_AUDIT_HPP_
#define CROWDFL_SIM_AUDIT_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "crowdfl/bigint.hpp"
#include "crowdfl/sim/network.hpp"

namespace crowdfl::sim {

struct DecryptionEvent {
  std::string role;
  std::string purpose;
  std::uint32_t round = 0;
  std::uint64_t subject = 0;  // participant a reward belongs to
  BigInt plaintext;
};

struct AuditVerdict {
  bool ok = true;
  std::vector<std::string> violations;
  std::size_t events = 0;
  std::size_t sensitive_values = 0;
};

class DecryptionAudit {
 public:
  explicit DecryptionAudit(BigInt n = 0) : n_(std::move(n)) {}

  void set_modulus(const BigInt& n) { n_ = n; }

  void record(std::string role, std::string purpose, std::uint32_t round,
              std::uint64_t subject, const BigInt& plaintext) {
    events_.push_back({std::move(role), std::move(purpose), round, subject, plaintext});
  }

  // Signed integer plaintext in its Z_N form.
  void add_sensitive(const BigInt& value, std::string label) {
    sensitive_.emplace(mod(value, n_), std::move(label));
  }

  const std::vector<DecryptionEvent>& events() const { return events_; }
  std::size_t sensitive_count() const { return sensitive_.size(); }

  AuditVerdict check() const {
    AuditVerdict v;
    v.events = events_.size();
    v.sensitive_values = sensitive_.size();
    auto violate = [&](const DecryptionEvent& e, const std::string& why) {
      v.ok = false;
      v.violations.push_back(e.role + " round " + std::to_string(e.round) + " " +
                             e.purpose + ": " + why);
    };
    for (const DecryptionEvent& e : events_) {
      if (e.role == kSpRole) {
        violate(e, "SP must not complete decryptions");
      } else if (e.role == kCspRole) {
        if (e.purpose.find("masked") == std::string::npos) {
          violate(e, "CSP opened an unmasked value");
        }
        auto hit = sensitive_.find(e.plaintext);
        if (hit != sensitive_.end()) violate(e, "CSP saw " + hit->second);
      } else if (e.role == kRequesterRole) {
        if (e.purpose != "final-model") violate(e, "requester opened " + e.purpose);
      } else if (e.role.rfind("P", 0) == 0) {
        if (e.purpose == "reward") {
          if (participant_role(e.subject) != e.role) violate(e, "opened another reward");
        } else if (e.purpose != "average") {
          violate(e, "participant opened " + e.purpose);
        }
      } else {
        violate(e, "unknown role");
      }
    }
    return v;
  }

 private:
  BigInt n_;
  std::vector<DecryptionEvent> events_;
  std::multimap<BigInt, std::string> sensitive_;
};

}  // namespace crowdfl::sim

#endif  // CROWDFL_SIM_AUDIT_HPP_
