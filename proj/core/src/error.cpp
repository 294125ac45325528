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

#include "svcid/error.hpp"

namespace svcid {
namespace {

std::string compose(ErrorCode code, const std::string& detail) {
  std::string msg = to_string(code);
  if (!detail.empty()) {
    msg += ": ";
    msg += detail;
  }
  return msg;
}

}  // namespace

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(compose(code, detail)), code_(code) {}

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kPayloadTooLarge: return "payload too large";
    case ErrorCode::kMalformedSegment: return "malformed segment";
    case ErrorCode::kBadChecksum: return "bad checksum";
    case ErrorCode::kNotSynAck: return "not a syn-ack";
    case ErrorCode::kTransport: return "transport";
    case ErrorCode::kNoEvidence: return "no evidence";
    case ErrorCode::kProtocolViolation: return "protocol violation";
    case ErrorCode::kUnknownProtocol: return "unknown protocol";
    case ErrorCode::kDuplicate: return "duplicate";
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kParse: return "parse error";
  }
  return "error";
}

}  // namespace svcid
