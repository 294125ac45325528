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

#include "svcid/transport.hpp"

#include <cmath>

#include "svcid/error.hpp"

namespace svcid {

Nanos scaled(Nanos nominal, double timescale) {
  return Nanos(static_cast<Nanos::rep>(std::llround(static_cast<double>(nominal.count()) * timescale)));
}

void send_segment(Transport& transport, const TcpSegment& seg) {
  const Bytes wire = craft(seg, transport.craft_options());
  transport.send(wire);
}

std::optional<TcpSegment> receive_segment(Transport& transport, Nanos deadline) {
  const ParseOptions opts = transport.parse_options();
  while (auto frame = transport.receive(deadline)) {
    try {
      return parse(*frame, opts);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kMalformedSegment && e.code() != ErrorCode::kBadChecksum) throw;
    }
  }
  return std::nullopt;
}

}  // namespace svcid
