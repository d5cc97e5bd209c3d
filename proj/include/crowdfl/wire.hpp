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

// Message codec shared by every role.
//
//   u32 body_length | u8 tag | u64 session_id | u32 round | u32 field_count |
//   field_count x (u32 length | big-endian magnitude)
//
// All integers are big-endian; body_length counts the bytes after itself.

#ifndef CROWDFL_WIRE_HPP_
#define CROWDFL_WIRE_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crowdfl/bigint.hpp"
#include "crowdfl/bytes.hpp"
#include "crowdfl/error.hpp"
#include "crowdfl/pctd.hpp"

namespace crowdfl {

enum class MessageType : std::uint8_t {
  kSdivRequest = 1,
  kSdivResponse = 2,
  kSmulRequest = 3,
  kSmulResponse = 4,
  kSubmission = 5,
  kAverageRelease = 6,
  kFinalModel = 7,
  kRewardRelease = 8,
  kBudget = 9,
  kError = 10,
};

inline bool is_known_message_type(std::uint8_t tag) {
  return tag >= 1 && tag <= 10;
}

inline std::string_view message_type_name(MessageType type) {
  switch (type) {
    case MessageType::kSdivRequest: return "SDIV_REQ";
    case MessageType::kSdivResponse: return "SDIV_RESP";
    case MessageType::kSmulRequest: return "SMUL_REQ";
    case MessageType::kSmulResponse: return "SMUL_RESP";
    case MessageType::kSubmission: return "SUBMIT";
    case MessageType::kAverageRelease: return "RELEASE_AVG";
    case MessageType::kFinalModel: return "FINAL_MODEL";
    case MessageType::kRewardRelease: return "RELEASE_REWARD";
    case MessageType::kBudget: return "BUDGET";
    case MessageType::kError: return "ERROR";
  }
  return "UNKNOWN";
}

struct WireMessage {
  MessageType type = MessageType::kSdivRequest;
  std::uint64_t session_id = 0;
  std::uint32_t round = 0;
  std::vector<BigInt> fields;

  friend bool operator==(const WireMessage&, const WireMessage&) = default;
};

inline constexpr std::size_t kMaxFieldBytes = 1u << 16;
inline constexpr std::size_t kHeaderBytes = 1 + 8 + 4 + 4;

inline Bytes encode_message(const WireMessage& m) {
  ByteWriter body;
  body.u8(static_cast<std::uint8_t>(m.type));
  body.u64(m.session_id);
  body.u32(m.round);
  body.u32(static_cast<std::uint32_t>(m.fields.size()));
  for (const BigInt& f : m.fields) {
    require(bit_length(f) <= 8 * kMaxFieldBytes, ErrorCode::kCodec,
            "field too long");
    body.big(f);
  }
  ByteWriter out;
  out.u32(static_cast<std::uint32_t>(body.bytes().size()));
  out.raw(body.bytes());
  return std::move(out).bytes();
}

inline WireMessage decode_message(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  std::uint32_t body_length = r.u32();
  require(body_length == r.remaining(), ErrorCode::kCodec,
          "length prefix does not match body");
  require(body_length >= kHeaderBytes, ErrorCode::kCodec, "body too short");
  std::uint8_t tag = r.u8();
  require(is_known_message_type(tag), ErrorCode::kCodec,
          "unknown message tag " + std::to_string(tag));
  WireMessage m;
  m.type = static_cast<MessageType>(tag);
  m.session_id = r.u64();
  m.round = r.u32();
  std::uint32_t count = r.u32();
  // Every field needs at least its 4-byte length.
  require(count <= r.remaining() / 4, ErrorCode::kCodec,
          "field count exceeds body");
  m.fields.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    m.fields.push_back(r.big(kMaxFieldBytes));
  }
  require(r.done(), ErrorCode::kCodec, "trailing bytes after last field");
  return m;
}

// Sequential typed access to a message's fields.
class FieldReader {
 public:
  explicit FieldReader(const WireMessage& m) : fields_(m.fields) {}

  const BigInt& big() {
    require(pos_ < fields_.size(), ErrorCode::kCodec, "missing field");
    return fields_[pos_++];
  }

  std::uint64_t small(std::uint64_t max) {
    const BigInt& v = big();
    require(v <= BigInt(static_cast<unsigned long>(max)), ErrorCode::kCodec,
            "field out of range");
    return v.get_ui();
  }

  Ciphertext ciphertext() {
    Ciphertext c;
    c.value = big();
    c.scale = static_cast<int>(small(127));
    return c;
  }

  std::size_t remaining() const { return fields_.size() - pos_; }
  void expect_done() const {
    require(pos_ == fields_.size(), ErrorCode::kCodec, "unexpected fields");
  }

 private:
  const std::vector<BigInt>& fields_;
  std::size_t pos_ = 0;
};

inline void push_ciphertext(WireMessage& m, const Ciphertext& c) {
  m.fields.push_back(c.value);
  m.fields.push_back(BigInt(c.scale));
}

}  // namespace crowdfl

#endif  // CROWDFL_WIRE_HPP_
