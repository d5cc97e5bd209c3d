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

#ifndef CROWDFL_BYTES_HPP_
#define CROWDFL_BYTES_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "crowdfl/bigint.hpp"
#include "crowdfl/error.hpp"

namespace crowdfl {

using Bytes = std::vector<std::uint8_t>;

// Big-endian writer.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }

  // 4-byte big-endian length followed by the unsigned big-endian magnitude.
  void big(const BigInt& v) {
    Bytes raw = to_bytes(v);
    u32(static_cast<std::uint32_t>(raw.size()));
    out_.insert(out_.end(), raw.begin(), raw.end());
  }

  void raw(std::span<const std::uint8_t> data) {
    out_.insert(out_.end(), data.begin(), data.end());
  }

  const Bytes& bytes() const& { return out_; }
  Bytes bytes() && { return std::move(out_); }

 private:
  void put(std::uint64_t v, int width) {
    for (int i = width - 1; i >= 0; --i) {
      out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
  }

  Bytes out_;
};

// Bounds-checked big-endian reader. Every failure is a kCodec error; it never
// reads past the end of its input.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }

  BigInt big(std::size_t max_bytes = 1u << 20) {
    std::uint32_t size = u32();
    require(size <= max_bytes, ErrorCode::kCodec, "integer field too long");
    require(size <= remaining(), ErrorCode::kCodec, "truncated integer field");
    require(size == 0 || data_[pos_] != 0, ErrorCode::kCodec,
            "non-canonical integer encoding");
    BigInt v = from_bytes(data_.data() + pos_, size);
    pos_ += size;
    return v;
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::uint64_t get(int width) {
    require(remaining() >= static_cast<std::size_t>(width), ErrorCode::kCodec,
            "truncated input");
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v = (v << 8) | data_[pos_++];
    return v;
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace crowdfl

#endif  // CROWDFL_BYTES_HPP_
