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

// SP <-> CSP over a localhost TCP connection. Frames are a 4-byte big-endian
// length followed by one encoded WireMessage. CSP answers a request it cannot
// serve with an ERROR message carrying the error code.

#ifndef CROWDFL_SIM_SOCKET_HPP_
#define CROWDFL_SIM_SOCKET_HPP_

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <thread>

#include "crowdfl/bytes.hpp"
#include "crowdfl/error.hpp"
#include "crowdfl/protocols.hpp"
#include "crowdfl/wire.hpp"

namespace crowdfl::sim {

inline constexpr std::uint32_t kMaxFrameBytes = 64u << 20;

namespace detail {

inline void write_all(int fd, const std::uint8_t* data, std::size_t size) {
  while (size > 0) {
    ssize_t n = ::send(fd, data, size, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    require(n > 0, ErrorCode::kIo, std::string("send failed: ") + std::strerror(errno));
    data += n;
    size -= static_cast<std::size_t>(n);
  }
}

// False on a clean end of stream before the first byte.
inline bool read_all(int fd, std::uint8_t* data, std::size_t size) {
  std::size_t got = 0;
  while (got < size) {
    ssize_t n = ::recv(fd, data + got, size - got, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n == 0 && got == 0) return false;
    require(n > 0, ErrorCode::kIo, "connection closed mid-frame");
    got += static_cast<std::size_t>(n);
  }
  return true;
}

inline void write_frame(int fd, const WireMessage& m) {
  Bytes body = encode_message(m);
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(body.size()));
  w.raw(body);
  write_all(fd, w.bytes().data(), w.bytes().size());
}

inline std::optional<WireMessage> read_frame(int fd) {
  std::uint8_t head[4];
  if (!read_all(fd, head, 4)) return std::nullopt;
  std::uint32_t size = (std::uint32_t{head[0]} << 24) | (std::uint32_t{head[1]} << 16) |
                       (std::uint32_t{head[2]} << 8) | head[3];
  require(size <= kMaxFrameBytes, ErrorCode::kCodec, "frame too large");
  Bytes body(size);
  require(size == 0 || read_all(fd, body.data(), size), ErrorCode::kIo,
          "connection closed mid-frame");
  return decode_message(body);
}

class Fd {
 public:
  explicit Fd(int fd = -1) : fd_(fd) {}
  Fd(Fd&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  Fd& operator=(Fd&& o) noexcept {
    reset();
    fd_ = o.fd_;
    o.fd_ = -1;
    return *this;
  }
  ~Fd() { reset(); }
  int get() const { return fd_; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_;
};

}  // namespace detail

// Serves one SP connection on 127.0.0.1 from a background thread.
class CspSocketServer {
 public:
  explicit CspSocketServer(ComputeServer& server) : server_(server) {
    listener_ = detail::Fd(::socket(AF_INET, SOCK_STREAM, 0));
    require(listener_.get() >= 0, ErrorCode::kIo, "socket() failed");
    int one = 1;
    ::setsockopt(listener_.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    require(::bind(listener_.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0,
            ErrorCode::kIo, std::string("bind failed: ") + std::strerror(errno));
    require(::listen(listener_.get(), 1) == 0, ErrorCode::kIo, "listen failed");
    socklen_t len = sizeof addr;
    ::getsockname(listener_.get(), reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    thread_ = std::thread([this] { serve(); });
  }

  CspSocketServer(const CspSocketServer&) = delete;
  CspSocketServer& operator=(const CspSocketServer&) = delete;

  ~CspSocketServer() {
    stopping_ = true;
    ::shutdown(listener_.get(), SHUT_RDWR);
    int conn = conn_fd_.load();
    if (conn >= 0) ::shutdown(conn, SHUT_RDWR);
    if (thread_.joinable()) thread_.join();
  }

  std::uint16_t port() const { return port_; }
  std::uint64_t served() const { return served_.load(); }

 private:
  void serve() {
    detail::Fd conn(::accept(listener_.get(), nullptr, nullptr));
    if (conn.get() < 0) return;
    conn_fd_ = conn.get();
    if (stopping_) return;
    int one = 1;
    ::setsockopt(conn.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    try {
      while (auto request = detail::read_frame(conn.get())) {
        WireMessage response;
        try {
          response = server_.handle(*request);
        } catch (const Error& e) {
          response = WireMessage{MessageType::kError, request->session_id, request->round,
                                 {BigInt(static_cast<int>(e.code()))}};
        }
        detail::write_frame(conn.get(), response);
        ++served_;
      }
    } catch (const Error&) {
      // Peer went away or sent garbage; the SP side reports the failure.
    }
    conn_fd_ = -1;
  }

  ComputeServer& server_;
  detail::Fd listener_;
  std::uint16_t port_ = 0;
  std::thread thread_;
  std::atomic<int> conn_fd_{-1};
  std::atomic<bool> stopping_{false};
  std::atomic<std::uint64_t> served_{0};
};

class SocketCspLink : public CspLink {
 public:
  explicit SocketCspLink(std::uint16_t port) {
    fd_ = detail::Fd(::socket(AF_INET, SOCK_STREAM, 0));
    require(fd_.get() >= 0, ErrorCode::kIo, "socket() failed");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    require(::connect(fd_.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0,
            ErrorCode::kIo, std::string("connect failed: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(fd_.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }

  WireMessage exchange(const WireMessage& request) override {
    std::optional<WireMessage> response;
    try {
      detail::write_frame(fd_.get(), request);
      response = detail::read_frame(fd_.get());
    } catch (const Error& e) {
      throw Error(ErrorCode::kProtocolAbort, "CSP link: " + e.detail());
    }
    require(response.has_value(), ErrorCode::kProtocolAbort, "CSP closed the connection");
    if (response->type == MessageType::kError) {
      int code = response->fields.empty() ? static_cast<int>(ErrorCode::kProtocolAbort)
                                          : static_cast<int>(response->fields[0].get_si());
      if (code < 0 || code > static_cast<int>(ErrorCode::kIo)) {
        code = static_cast<int>(ErrorCode::kProtocolAbort);
      }
      throw Error(static_cast<ErrorCode>(code), "rejected by CSP");
    }
    return *response;
  }

  void close() { fd_.reset(); }

 private:
  detail::Fd fd_;
};

}  // namespace crowdfl::sim

#endif  // CROWDFL_SIM_SOCKET_HPP_
