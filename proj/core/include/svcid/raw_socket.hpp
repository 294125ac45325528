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

// Live transport over a Linux raw IPv4 socket. Needs CAP_NET_RAW. The
// kernel does not know about our flows and will answer SYN-ACKs with RSTs
// unless told otherwise, e.g.
//   iptables -A OUTPUT -p tcp --tcp-flags RST RST -s <source> -j DROP

#pragma once

#include "svcid/transport.hpp"

namespace svcid {

class RawSocketTransport final : public Transport {
 public:
  /// Throws Error(kTransport) if the socket cannot be opened.
  explicit RawSocketTransport(Ipv4 source, bool strict_checksums = false);
  ~RawSocketTransport() override;
  RawSocketTransport(const RawSocketTransport&) = delete;
  RawSocketTransport& operator=(const RawSocketTransport&) = delete;

  Nanos now() const override;
  void send(ByteView frame) override;
  std::optional<Bytes> receive(Nanos deadline) override;
  CraftOptions craft_options() const override { return {}; }
  ParseOptions parse_options() const override { return {strict_checksums_}; }

 private:
  int fd_ = -1;
  Ipv4 source_;
  bool strict_checksums_;
};

}  // namespace svcid
