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

#include "dpsqlp/state_store.h"

#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <utility>

#include "dpsqlp/error.h"

namespace dpsqlp {
namespace {

namespace fs = std::filesystem;

constexpr char kManifestName[] = "MANIFEST";
constexpr char kSnapshotMagic[] = "DPSQLP1";

uint32_t Crc32Of(std::string_view data) {
  return static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(data.data()),
            static_cast<uInt>(data.size())));
}

std::string Hex8(uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

std::string ReadWholeFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  Require(in.good(), ErrorKind::kIo, "state_store: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFileDurably(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    Require(fd >= 0, ErrorKind::kIo, "state_store: cannot create " + tmp);
    size_t off = 0;
    while (off < content.size()) {
      const ssize_t n = ::write(fd, content.data() + off, content.size() - off);
      if (n < 0) {
        ::close(fd);
        Fail(ErrorKind::kIo, "state_store: write failed for " + tmp);
      }
      off += static_cast<size_t>(n);
    }
    if (::fsync(fd) != 0) {
      ::close(fd);
      Fail(ErrorKind::kIo, "state_store: fsync failed for " + tmp);
    }
    ::close(fd);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  Require(!ec, ErrorKind::kIo, "state_store: rename failed for " + path);
  // Make the rename itself durable.
  const std::string dir = fs::path(path).parent_path().string();
  const int dfd = ::open(dir.empty() ? "." : dir.c_str(), O_RDONLY);
  if (dfd >= 0) {
    ::fsync(dfd);
    ::close(dfd);
  }
}

}  // namespace

nlohmann::json KeyState::ToJson() const {
  nlohmann::json j{
      {"v", 1},
      {"key", key},
      {"sel", selection.ToJson()},
      {"agg", aggregation.ToJson()},
  };
  if (predicted_release.has_value()) j["pred"] = *predicted_release;
  return j;
}

KeyState KeyState::FromJson(const nlohmann::json& j) {
  Require(j.is_object() && j.value("v", 0) == 1, ErrorKind::kStoreCorruption,
          "key_state: unknown serialization version");
  KeyState s;
  try {
    s.key = j.at("key").get<std::string>();
    s.selection = KeySelectionState::FromJson(j.at("sel"));
    s.aggregation = AggregationState::FromJson(j.at("agg"));
    if (j.contains("pred")) s.predicted_release = j.at("pred").get<int64_t>();
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kStoreCorruption,
         std::string("key_state: malformed state: ") + e.what());
  }
  return s;
}

StateStore::~StateStore() { CloseWalFd(); }

StateStore::StateStore(StateStore&& other) noexcept { *this = std::move(other); }

StateStore& StateStore::operator=(StateStore&& other) noexcept {
  if (this == &other) return *this;
  CloseWalFd();
  keys_ = std::move(other.keys_);
  users_ = std::move(other.users_);
  predictions_ = std::move(other.predictions_);
  due_ = std::move(other.due_);
  releases_ = std::move(other.releases_);
  counters_ = std::move(other.counters_);
  last_committed_ = other.last_committed_;
  touched_keys_ = std::move(other.touched_keys_);
  prediction_ops_ = std::move(other.prediction_ops_);
  directory_ = std::move(other.directory_);
  generation_ = other.generation_;
  wal_fd_ = other.wal_fd_;
  key_reads_ = other.key_reads_;
  key_writes_ = other.key_writes_;
  other.wal_fd_ = -1;
  other.directory_.clear();
  return *this;
}

StateStore StateStore::Open(const std::string& directory) {
  Require(!directory.empty(), ErrorKind::kInvalidParameter,
          "state_store: empty directory");
  std::error_code ec;
  fs::create_directories(directory, ec);
  Require(!ec, ErrorKind::kIo, "state_store: cannot create " + directory);

  StateStore store;
  store.directory_ = directory;
  const std::string manifest = directory + "/" + kManifestName;
  if (!fs::exists(manifest)) {
    store.generation_ = 0;
    store.WriteSnapshot(store.SnapshotPath(0));
    store.OpenWalForAppend(store.WalPath(0));
    WriteFileDurably(manifest,
                     nlohmann::json{{"v", 1}, {"generation", 0}}.dump());
    return store;
  }

  nlohmann::json m;
  try {
    m = nlohmann::json::parse(ReadWholeFile(manifest));
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kStoreCorruption,
         std::string("state_store: malformed manifest: ") + e.what());
  }
  Require(m.value("v", 0) == 1, ErrorKind::kStoreCorruption,
          "state_store: unknown manifest version");
  store.generation_ = m.at("generation").get<int64_t>();
  store.LoadSnapshot(store.SnapshotPath(store.generation_));
  store.ReplayWal(store.WalPath(store.generation_));
  store.OpenWalForAppend(store.WalPath(store.generation_));
  return store;
}

KeyState* StateStore::Find(const std::string& store_key) {
  ++key_reads_;
  const auto it = keys_.find(store_key);
  if (it == keys_.end()) return nullptr;
  touched_keys_.insert(store_key);  // caller may mutate in place
  return &it->second;
}

KeyState& StateStore::GetOrCreate(const std::string& store_key,
                                  const std::function<KeyState()>& factory) {
  ++key_reads_;
  auto it = keys_.find(store_key);
  if (it == keys_.end()) {
    it = keys_.emplace(store_key, factory()).first;
  }
  touched_keys_.insert(store_key);
  return it->second;
}

bool StateStore::Contains(const std::string& store_key) const {
  return keys_.count(store_key) > 0;
}

std::vector<std::string> StateStore::LiveTreeKeys(
    const std::string& prefix) const {
  std::vector<std::string> out;
  for (auto it = keys_.lower_bound(prefix); it != keys_.end(); ++it) {
    if (it->first.compare(0, prefix.size(), prefix) != 0) break;
    if (it->second.selection.has_tree()) out.push_back(it->first);
  }
  return out;
}

void StateStore::SetPrediction(const std::string& store_key, int64_t trigger) {
  const auto key_it = keys_.find(store_key);
  Require(key_it != keys_.end(), ErrorKind::kStateError,
          "state_store: prediction for unknown key " + store_key);
  const auto it = predictions_.find(store_key);
  if (it != predictions_.end()) {
    due_[it->second].erase(store_key);
    if (due_[it->second].empty()) due_.erase(it->second);
  }
  predictions_[store_key] = trigger;
  due_[trigger].insert(store_key);
  prediction_ops_[store_key] = trigger;
  // The per-key field mirrors the index, so it persists with the key and a
  // recovered store can rebuild queries from either side.
  key_it->second.predicted_release = trigger;
  touched_keys_.insert(store_key);
}

void StateStore::ClearPrediction(const std::string& store_key) {
  const auto it = predictions_.find(store_key);
  if (it != predictions_.end()) {
    due_[it->second].erase(store_key);
    if (due_[it->second].empty()) due_.erase(it->second);
    predictions_.erase(it);
  }
  prediction_ops_[store_key] = std::nullopt;
  const auto key_it = keys_.find(store_key);
  if (key_it != keys_.end() && key_it->second.predicted_release.has_value()) {
    key_it->second.predicted_release.reset();
    touched_keys_.insert(store_key);
  }
}

std::vector<std::string> StateStore::DuePredictions(int64_t trigger) const {
  // Everything due at or before `trigger`. Triggers run consecutively, so
  // normally only exact matches exist; the inequality just guarantees a
  // prediction can never be silently skipped.
  std::vector<std::string> out;
  for (auto it = due_.begin(); it != due_.end() && it->first <= trigger;
       ++it) {
    out.insert(out.end(), it->second.begin(), it->second.end());
  }
  return out;
}

std::optional<int64_t> StateStore::PredictionFor(
    const std::string& store_key) const {
  const auto it = predictions_.find(store_key);
  if (it == predictions_.end()) return std::nullopt;
  return it->second;
}

bool StateStore::PredictionIndexConsistent() const {
  for (const auto& [k, state] : keys_) {
    const auto it = predictions_.find(k);
    const std::optional<int64_t> indexed =
        it == predictions_.end() ? std::nullopt
                                 : std::optional<int64_t>(it->second);
    if (state.predicted_release != indexed) return false;
  }
  for (const auto& [k, trigger] : predictions_) {
    const auto it = keys_.find(k);
    if (it == keys_.end() || it->second.predicted_release != trigger) {
      return false;
    }
  }
  return true;
}

void StateStore::CommitTrigger(int64_t trigger,
                               std::span<const Release> releases,
                               const nlohmann::json& counters) {
  Require(trigger > last_committed_, ErrorKind::kStateError,
          "state_store: commit for trigger " + std::to_string(trigger) +
              " not after " + std::to_string(last_committed_));
  nlohmann::json keys = nlohmann::json::object();
  for (const std::string& k : touched_keys_) {
    const auto it = keys_.find(k);
    if (it != keys_.end()) keys[k] = it->second.ToJson();
  }
  key_writes_ += static_cast<int64_t>(touched_keys_.size());
  nlohmann::json users = nlohmann::json::object();
  for (const std::string& u : users_.TakeDirty()) users[u] = users_.Used(u);
  nlohmann::json pred = nlohmann::json::object();
  for (const auto& [k, v] : prediction_ops_) {
    if (v.has_value()) {
      pred[k] = *v;
    } else {
      pred[k] = nullptr;
    }
  }
  nlohmann::json rel = nlohmann::json::array();
  for (const Release& r : releases) {
    rel.push_back({{"trigger", r.trigger},
                   {"key", r.key},
                   {"column", r.column},
                   {"value", r.value}});
  }
  const nlohmann::json record{
      {"g", trigger}, {"keys", std::move(keys)},   {"users", std::move(users)},
      {"pred", pred}, {"rel", std::move(rel)},     {"ctr", counters},
  };
  if (persistent()) AppendWalRecord(record.dump());

  for (const Release& r : releases) releases_.push_back(r);
  counters_ = counters;
  last_committed_ = trigger;
  touched_keys_.clear();
  prediction_ops_.clear();
}

void StateStore::RequireCommitBoundary(const char* op) const {
  Require(touched_keys_.empty() && prediction_ops_.empty() &&
              !users_.HasDirty(),
          ErrorKind::kStateError,
          std::string("state_store: ") + op + " with uncommitted mutations");
}

void StateStore::Checkpoint() {
  Require(persistent(), ErrorKind::kStateError,
          "state_store: checkpoint on an in-memory store");
  RequireCommitBoundary("checkpoint");
  const int64_t next = generation_ + 1;
  WriteSnapshot(SnapshotPath(next));
  CloseWalFd();
  // Fresh, empty WAL for the new generation before the manifest points at it.
  {
    const int fd = ::open(WalPath(next).c_str(),
                          O_WRONLY | O_CREAT | O_TRUNC, 0644);
    Require(fd >= 0, ErrorKind::kIo, "state_store: cannot create new wal");
    ::fsync(fd);
    ::close(fd);
  }
  WriteFileDurably(directory_ + "/" + kManifestName,
                   nlohmann::json{{"v", 1}, {"generation", next}}.dump());
  std::error_code ec;
  fs::remove(SnapshotPath(generation_), ec);
  fs::remove(WalPath(generation_), ec);
  generation_ = next;
  OpenWalForAppend(WalPath(generation_));
}

void StateStore::Close() {
  if (persistent()) {
    Checkpoint();
    CloseWalFd();
  }
}

void StateStore::LoadSnapshot(const std::string& path) {
  const std::string raw = ReadWholeFile(path);
  const size_t nl = raw.find('\n');
  Require(nl != std::string::npos, ErrorKind::kStoreCorruption,
          "state_store: snapshot missing header");
  const std::string header = raw.substr(0, nl);
  const std::string body = raw.substr(nl + 1);
  std::istringstream hs(header);
  std::string magic, crc_hex;
  hs >> magic >> crc_hex;
  Require(magic == kSnapshotMagic, ErrorKind::kStoreCorruption,
          "state_store: bad snapshot magic");
  Require(crc_hex == Hex8(Crc32Of(body)), ErrorKind::kStoreCorruption,
          "state_store: snapshot checksum mismatch");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
    Require(j.value("v", 0) == 1, ErrorKind::kStoreCorruption,
            "state_store: unknown snapshot version");
    last_committed_ = j.at("last").get<int64_t>();
    for (const auto& [k, v] : j.at("keys").items()) {
      keys_[k] = KeyState::FromJson(v);
    }
    users_.LoadJson(j.at("users"));
    for (const auto& [k, v] : j.at("pred").items()) {
      const int64_t trigger = v.get<int64_t>();
      predictions_[k] = trigger;
      due_[trigger].insert(k);
    }
    for (const auto& r : j.at("rel")) {
      releases_.push_back({r.at("trigger").get<int64_t>(),
                           r.at("key").get<std::string>(),
                           r.at("column").get<std::string>(),
                           r.at("value").get<double>()});
    }
    counters_ = j.at("ctr");
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kStoreCorruption,
         std::string("state_store: malformed snapshot: ") + e.what());
  }
}

void StateStore::ReplayWal(const std::string& path) {
  if (!fs::exists(path)) {
    Fail(ErrorKind::kStoreCorruption, "state_store: wal missing: " + path);
  }
  const std::string raw = ReadWholeFile(path);
  size_t pos = 0;
  std::optional<size_t> truncate_at;
  while (pos < raw.size()) {
    const size_t nl = raw.find('\n', pos);
    const bool complete = nl != std::string::npos;
    const std::string line =
        raw.substr(pos, complete ? nl - pos : std::string::npos);
    const size_t line_start = pos;
    pos = complete ? nl + 1 : raw.size();

    bool valid = line.size() > 9 && line[8] == ' ';
    std::string payload;
    if (valid) {
      payload = line.substr(9);
      valid = line.substr(0, 8) == Hex8(Crc32Of(payload));
    }
    nlohmann::json record;
    if (valid) {
      record = nlohmann::json::parse(payload, nullptr, false);
      valid = !record.is_discarded();
    }
    if (!complete || !valid) {
      // Only the final record may be damaged (a crash mid-append): it was
      // never acknowledged, so drop it. Damage anywhere earlier is real
      // corruption.
      Require(pos >= raw.size(), ErrorKind::kStoreCorruption,
              "state_store: wal checksum mismatch mid-file");
      truncate_at = line_start;
      break;
    }
    ApplyCommitRecord(record);
  }
  if (truncate_at.has_value()) {
    Require(::truncate(path.c_str(),
                       static_cast<off_t>(*truncate_at)) == 0,
            ErrorKind::kIo, "state_store: cannot truncate torn wal");
  }
}

void StateStore::ApplyCommitRecord(const nlohmann::json& record) {
  try {
    const int64_t g = record.at("g").get<int64_t>();
    if (g <= last_committed_) return;  // replay is idempotent
    for (const auto& [k, v] : record.at("keys").items()) {
      keys_[k] = KeyState::FromJson(v);
    }
    users_.LoadJson(record.at("users"));
    for (const auto& [k, v] : record.at("pred").items()) {
      const auto it = predictions_.find(k);
      if (it != predictions_.end()) {
        due_[it->second].erase(k);
        if (due_[it->second].empty()) due_.erase(it->second);
        predictions_.erase(it);
      }
      if (!v.is_null()) {
        const int64_t trigger = v.get<int64_t>();
        predictions_[k] = trigger;
        due_[trigger].insert(k);
      }
    }
    for (const auto& r : record.at("rel")) {
      releases_.push_back({r.at("trigger").get<int64_t>(),
                           r.at("key").get<std::string>(),
                           r.at("column").get<std::string>(),
                           r.at("value").get<double>()});
    }
    counters_ = record.at("ctr");
    last_committed_ = g;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kStoreCorruption,
         std::string("state_store: malformed wal record: ") + e.what());
  }
}

void StateStore::WriteSnapshot(const std::string& path) const {
  nlohmann::json keys = nlohmann::json::object();
  for (const auto& [k, v] : keys_) keys[k] = v.ToJson();
  nlohmann::json pred = nlohmann::json::object();
  for (const auto& [k, v] : predictions_) pred[k] = v;
  nlohmann::json rel = nlohmann::json::array();
  for (const Release& r : releases_) {
    rel.push_back({{"trigger", r.trigger},
                   {"key", r.key},
                   {"column", r.column},
                   {"value", r.value}});
  }
  const nlohmann::json j{
      {"v", 1},           {"last", last_committed_}, {"keys", std::move(keys)},
      {"users", users_.ToJson()}, {"pred", std::move(pred)},
      {"rel", std::move(rel)},    {"ctr", counters_},
  };
  const std::string body = j.dump();
  WriteFileDurably(path,
                   std::string(kSnapshotMagic) + " " + Hex8(Crc32Of(body)) +
                       "\n" + body);
}

void StateStore::OpenWalForAppend(const std::string& path) {
  CloseWalFd();
  wal_fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  Require(wal_fd_ >= 0, ErrorKind::kIo, "state_store: cannot open wal " + path);
}

void StateStore::AppendWalRecord(const std::string& payload) {
  Require(wal_fd_ >= 0, ErrorKind::kStateError, "state_store: wal not open");
  const std::string line = Hex8(Crc32Of(payload)) + " " + payload + "\n";
  size_t off = 0;
  while (off < line.size()) {
    const ssize_t n = ::write(wal_fd_, line.data() + off, line.size() - off);
    Require(n >= 0, ErrorKind::kIo, "state_store: wal write failed");
    off += static_cast<size_t>(n);
  }
  Require(::fsync(wal_fd_) == 0, ErrorKind::kIo,
          "state_store: wal fsync failed");
}

void StateStore::CloseWalFd() {
  if (wal_fd_ >= 0) {
    ::close(wal_fd_);
    wal_fd_ = -1;
  }
}

std::string StateStore::SnapshotPath(int64_t generation) const {
  return directory_ + "/snapshot-" + std::to_string(generation) + ".json";
}

std::string StateStore::WalPath(int64_t generation) const {
  return directory_ + "/wal-" + std::to_string(generation) + ".log";
}

}  // namespace dpsqlp
