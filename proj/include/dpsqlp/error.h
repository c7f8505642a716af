//
// Copyright 2026 The DP-SQLP Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef DPSQLP_ERROR_H_
#define DPSQLP_ERROR_H_

#include <stdexcept>
#include <string>

namespace dpsqlp {

// Failure taxonomy. Callers (and tests) dispatch on the kind, so misuse of an
// API is distinguishable from a corrupt store or a calibration that cannot
// converge.
enum class ErrorKind {
  kInvalidParameter,   // argument outside its documented domain
  kCalibration,        // search for sigma / epsilon failed to bracket
  kOutOfOrder,         // leaf or trigger presented out of sequence
  kCapacity,           // structure already at its declared capacity
  kInvalidStep,        // prefix index outside the valid range
  kSequencing,         // operation violates per-key trigger ordering
  kStateError,         // operation not valid in the current lifecycle state
  kContractViolation,  // data violates a bound established upstream
  kStoreCorruption,    // checksum mismatch or malformed persistent state
  kIo,                 // filesystem failure
  kParse,              // malformed input record
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void Fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void Require(bool ok, ErrorKind kind, const std::string& message) {
  if (!ok) Fail(kind, message);
}

}  // namespace dpsqlp

#endif  // DPSQLP_ERROR_H_
