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

#ifndef DPSQLP_RECORD_H_
#define DPSQLP_RECORD_H_

#include <cstdint>
#include <string>

namespace dpsqlp {

// One keyed contribution from one user. Timestamps are event time in seconds
// (any fixed epoch works; windowing only takes differences against a window
// origin).
struct Record {
  std::string key;
  double value = 0.0;
  int64_t timestamp = 0;
  std::string user_id;

  friend bool operator==(const Record&, const Record&) = default;
};

// A release emitted by any of the engines: the current private running total
// for (key, column) as of `trigger`. Later releases for the same key
// supersede earlier ones.
struct Release {
  int64_t trigger = 0;
  std::string key;
  std::string column;
  double value = 0.0;

  friend bool operator==(const Release&, const Release&) = default;
};

}  // namespace dpsqlp

#endif  // DPSQLP_RECORD_H_
