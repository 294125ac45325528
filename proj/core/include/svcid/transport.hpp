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

#pragma once

#include <chrono>
#include <optional>

#include "svcid/packet.hpp"

namespace svcid {

/// Time on the transport's own clock: virtual in the simulator, monotonic
/// wall time in live mode.
using Nanos = std::chrono::nanoseconds;

/// Scales a nominal duration (as configured) by a time-dilation factor.
Nanos scaled(Nanos nominal, double timescale);

inline Nanos seconds(double s) {
  return std::chrono::duration_cast<Nanos>(std::chrono::duration<double>(s));
}

/// Moves wire images between the scanner and the network. Implementations
/// are driven from a single thread: send() and receive() are never called
/// concurrently.
class Transport {
 public:
  virtual ~Transport() = default;

  virtual Nanos now() const = 0;

  /// Hands one crafted IPv4 datagram to the network.
  virtual void send(ByteView frame) = 0;

  /// Blocks (or advances virtual time) until a datagram addressed to the
  /// scanner arrives or the absolute deadline passes.
  virtual std::optional<Bytes> receive(Nanos deadline) = 0;

  /// Options used when crafting frames for this transport.
  virtual CraftOptions craft_options() const { return {}; }
  virtual ParseOptions parse_options() const { return {}; }
};

/// Crafts and sends one segment through a transport.
void send_segment(Transport& transport, const TcpSegment& seg);

/// Receives and parses the next segment; malformed frames are dropped.
std::optional<TcpSegment> receive_segment(Transport& transport, Nanos deadline);

}  // namespace svcid
