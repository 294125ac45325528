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

#include <stdexcept>
#include <string>

namespace svcid {

enum class ErrorCode {
  kPayloadTooLarge,
  kMalformedSegment,
  kBadChecksum,
  kNotSynAck,
  kTransport,
  kNoEvidence,
  kProtocolViolation,
  kUnknownProtocol,
  kDuplicate,
  kInvalidArgument,
  kParse,
};

// Every failure raised by the library carries one of the codes above. The
// message always starts with the canonical short text for the code (for
// example "malformed segment") so callers can match on either.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

const char* to_string(ErrorCode code) noexcept;

}  // namespace svcid
