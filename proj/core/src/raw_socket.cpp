// Copyright 2026 The svcid Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "svcid/raw_socket.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

#include "svcid/error.hpp"

namespace svcid {

namespace {

[[noreturn]] void fail(const char* what) {
  throw Error(ErrorCode::kTransport, std::string(what) + ": " + std::strerror(errno));
}

}  // namespace

RawSocketTransport::RawSocketTransport(Ipv4 source, bool strict_checksums)
    : source_(source), strict_checksums_(strict_checksums) {
  fd_ = ::socket(AF_INET, SOCK_RAW, IPPROTO_TCP);
  if (fd_ < 0) fail("raw socket");
  const int one = 1;
  if (::setsockopt(fd_, IPPROTO_IP, IP_HDRINCL, &one, sizeof one) != 0) {
    ::close(fd_);
    fail("IP_HDRINCL");
  }
}

RawSocketTransport::~RawSocketTransport() {
  if (fd_ >= 0) ::close(fd_);
}

Nanos RawSocketTransport::now() const {
  return std::chrono::duration_cast<Nanos>(std::chrono::steady_clock::now().time_since_epoch());
}

void RawSocketTransport::send(ByteView frame) {
  if (frame.size() < kIpHeaderLen) throw Error(ErrorCode::kTransport, "frame shorter than an IP header");
  sockaddr_in dst{};
  dst.sin_family = AF_INET;
  std::memcpy(&dst.sin_addr.s_addr, frame.data() + 16, 4);
  const auto n = ::sendto(fd_, frame.data(), frame.size(), 0, reinterpret_cast<const sockaddr*>(&dst),
                          sizeof dst);
  if (n < 0) fail("sendto");
}

std::optional<Bytes> RawSocketTransport::receive(Nanos deadline) {
  Bytes buf(65536);
  for (;;) {
    const Nanos left = deadline - now();
    if (left <= Nanos{0}) return std::nullopt;
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(left).count();
    pollfd pfd{fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(ms + 1, 1000)));
    if (ready < 0) {
      if (errno == EINTR) continue;
      fail("poll");
    }
    if (ready == 0) continue;
    const auto n = ::recv(fd_, buf.data(), buf.size(), 0);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      fail("recv");
    }
    if (static_cast<std::size_t>(n) < kIpHeaderLen) continue;
    // Only frames addressed to our source.
    std::uint32_t dst = 0;
    std::memcpy(&dst, buf.data() + 16, 4);
    if (ntohl(dst) != source_.value()) continue;
    buf.resize(static_cast<std::size_t>(n));
    return buf;
  }
}

}  // namespace svcid
