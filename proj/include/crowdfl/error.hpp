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

#ifndef CROWDFL_ERROR_HPP_
#define CROWDFL_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace crowdfl {

enum class ErrorCode {
  kDomain,
  kGeneration,
  kCorruptedCiphertext,
  kPairing,
  kScale,
  kRange,
  kShape,
  kEmptyRound,
  kProtocolAbort,
  kCorruptedSession,
  kStateMachine,
  kDiscardedLate,
  kLedger,
  kCodec,
  kConfig,
  kIo,
};

inline std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDomain: return "domain";
    case ErrorCode::kGeneration: return "generation";
    case ErrorCode::kCorruptedCiphertext: return "corrupted-ciphertext";
    case ErrorCode::kPairing: return "pairing";
    case ErrorCode::kScale: return "scale";
    case ErrorCode::kRange: return "range";
    case ErrorCode::kShape: return "shape";
    case ErrorCode::kEmptyRound: return "empty-round";
    case ErrorCode::kProtocolAbort: return "protocol-abort";
    case ErrorCode::kCorruptedSession: return "corrupted-session";
    case ErrorCode::kStateMachine: return "state-machine";
    case ErrorCode::kDiscardedLate: return "discarded-late";
    case ErrorCode::kLedger: return "ledger";
    case ErrorCode::kCodec: return "codec";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

// Every failure raised by the library carries one of the codes above so that
// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code),
        detail_(what) {}

  ErrorCode code() const noexcept { return code_; }
  // Message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

  // Same code, message prefixed with where it happened.
  Error with_context(const std::string& where) const {
    return Error(code_, where + ": " + detail_);
  }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) fail(code, what);
}

}  // namespace crowdfl

#endif  // CROWDFL_ERROR_HPP_
