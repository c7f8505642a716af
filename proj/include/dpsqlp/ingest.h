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

#ifndef DPSQLP_INGEST_H_
#define DPSQLP_INGEST_H_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dpsqlp/record.h"

namespace dpsqlp {

enum class StreamFormat { kCsv, kJsonl };

// CSV columns: key,value,timestamp,user_id (header optional on input,
// written on output). Keys and user ids must not contain commas or
// newlines. JSONL: one {"key","value","timestamp","user_id"} object per
// line.
//
// A malformed line raises kParse with its line number, unless `skip_bad` is
// set, in which case it is counted into `bad_lines` (may be null) and
// skipped.
std::vector<Record> ReadRecords(const std::string& path, StreamFormat format,
                                bool skip_bad = false,
                                int64_t* bad_lines = nullptr);

void WriteRecordsCsv(const std::string& path, std::span<const Record> records);

std::vector<Release> ReadReleasesJsonl(const std::string& path);
void WriteReleasesJsonl(const std::string& path,
                        std::span<const Release> releases);

std::map<std::string, double> ReadHistogramJson(const std::string& path);
void WriteHistogramJson(const std::string& path,
                        const std::map<std::string, double>& histogram);

void WriteJsonFile(const std::string& path, const nlohmann::json& j);
nlohmann::json ReadJsonFile(const std::string& path);

}  // namespace dpsqlp

#endif  // DPSQLP_INGEST_H_
