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

#include "dpsqlp/ingest.h"

#include <charconv>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dpsqlp/error.h"

namespace dpsqlp {
namespace {

constexpr char kCsvHeader[] = "key,value,timestamp,user_id";

bool ParseDouble(std::string_view s, double* out) {
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, *out);
  return ec == std::errc() && ptr == end;
}

bool ParseInt(std::string_view s, int64_t* out) {
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, *out);
  return ec == std::errc() && ptr == end;
}

bool ParseCsvLine(const std::string& line, Record* out) {
  std::array<std::string_view, 4> fields;
  size_t start = 0;
  for (int i = 0; i < 4; ++i) {
    const size_t comma = line.find(',', start);
    const bool last = i == 3;
    if (last != (comma == std::string::npos)) return false;
    fields[static_cast<size_t>(i)] =
        std::string_view(line).substr(start, last ? line.size() - start
                                                  : comma - start);
    start = comma + 1;
  }
  if (fields[0].empty() || fields[3].empty()) return false;
  out->key = std::string(fields[0]);
  out->user_id = std::string(fields[3]);
  return ParseDouble(fields[1], &out->value) &&
         ParseInt(fields[2], &out->timestamp);
}

bool ParseJsonlLine(const std::string& line, Record* out) {
  const nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return false;
  try {
    out->key = j.at("key").get<std::string>();
    out->value = j.at("value").get<double>();
    out->timestamp = j.at("timestamp").get<int64_t>();
    out->user_id = j.at("user_id").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    return false;
  }
  return true;
}

std::ifstream OpenForRead(const std::string& path) {
  std::ifstream in(path);
  Require(in.good(), ErrorKind::kIo, "cannot open " + path);
  return in;
}

std::ofstream OpenForWrite(const std::string& path) {
  std::ofstream out(path);
  Require(out.good(), ErrorKind::kIo, "cannot write " + path);
  return out;
}

}  // namespace

std::vector<Record> ReadRecords(const std::string& path, StreamFormat format,
                                bool skip_bad, int64_t* bad_lines) {
  std::ifstream in = OpenForRead(path);
  std::vector<Record> out;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (format == StreamFormat::kCsv && lineno == 1 && line == kCsvHeader) {
      continue;
    }
    Record r;
    const bool ok = format == StreamFormat::kCsv ? ParseCsvLine(line, &r)
                                                 : ParseJsonlLine(line, &r);
    if (!ok) {
      if (skip_bad) {
        if (bad_lines != nullptr) ++*bad_lines;
        continue;
      }
      Fail(ErrorKind::kParse,
           path + ":" + std::to_string(lineno) + ": malformed record");
    }
    out.push_back(std::move(r));
  }
  return out;
}

void WriteRecordsCsv(const std::string& path,
                     std::span<const Record> records) {
  std::ofstream out = OpenForWrite(path);
  out << kCsvHeader << "\n";
  for (const Record& r : records) {
    nlohmann::json v = r.value;  // shortest round-trip double formatting
    out << r.key << ',' << v.dump() << ',' << r.timestamp << ',' << r.user_id
        << '\n';
  }
  Require(out.good(), ErrorKind::kIo, "write failed for " + path);
}

std::vector<Release> ReadReleasesJsonl(const std::string& path) {
  std::ifstream in = OpenForRead(path);
  std::vector<Release> out;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    Require(!j.is_discarded() && j.is_object(), ErrorKind::kParse,
            path + ":" + std::to_string(lineno) + ": malformed release");
    try {
      out.push_back({j.at("trigger").get<int64_t>(),
                     j.at("key").get<std::string>(),
                     j.at("column").get<std::string>(),
                     j.at("value").get<double>()});
    } catch (const nlohmann::json::exception&) {
      Fail(ErrorKind::kParse,
           path + ":" + std::to_string(lineno) + ": malformed release");
    }
  }
  return out;
}

void WriteReleasesJsonl(const std::string& path,
                        std::span<const Release> releases) {
  std::ofstream out = OpenForWrite(path);
  for (const Release& r : releases) {
    out << nlohmann::json{{"trigger", r.trigger},
                          {"key", r.key},
                          {"column", r.column},
                          {"value", r.value}}
               .dump()
        << '\n';
  }
  Require(out.good(), ErrorKind::kIo, "write failed for " + path);
}

std::map<std::string, double> ReadHistogramJson(const std::string& path) {
  const nlohmann::json j = ReadJsonFile(path);
  Require(j.is_object(), ErrorKind::kParse,
          path + ": expected a key -> value object");
  std::map<std::string, double> out;
  for (const auto& [k, v] : j.items()) out[k] = v.get<double>();
  return out;
}

void WriteHistogramJson(const std::string& path,
                        const std::map<std::string, double>& histogram) {
  WriteJsonFile(path, nlohmann::json(histogram));
}

void WriteJsonFile(const std::string& path, const nlohmann::json& j) {
  std::ofstream out = OpenForWrite(path);
  out << j.dump(2) << '\n';
  Require(out.good(), ErrorKind::kIo, "write failed for " + path);
}

nlohmann::json ReadJsonFile(const std::string& path) {
  std::ifstream in = OpenForRead(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  nlohmann::json j = nlohmann::json::parse(ss.str(), nullptr, false);
  Require(!j.is_discarded(), ErrorKind::kParse, path + ": malformed JSON");
  return j;
}

}  // namespace dpsqlp
