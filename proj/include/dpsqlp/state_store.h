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

#ifndef DPSQLP_STATE_STORE_H_
#define DPSQLP_STATE_STORE_H_

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dpsqlp/bounding.h"
#include "dpsqlp/keyselect.h"
#include "dpsqlp/perturb.h"
#include "dpsqlp/record.h"

namespace dpsqlp {

// Everything the engine tracks for one key. `key` is the user-visible key;
// the store indexes by a window-scoped composite.
struct KeyState {
  std::string key;
  KeySelectionState selection;
  AggregationState aggregation;
  std::optional<int64_t> predicted_release;  // global trigger index

  nlohmann::json ToJson() const;
  static KeyState FromJson(const nlohmann::json& j);
};

// Keyed state with optional crash-safe persistence.
//
// Persistence protocol: a checksummed JSON snapshot plus an append-only WAL
// of per-trigger commit records ("<crc32> <json>\n" lines carrying the
// absolute post-trigger state of everything touched). Commits fsync before
// acknowledging. Open() replays committed records on top of the snapshot; a
// torn final WAL line is an uncommitted crash and is truncated away, while a
// checksum mismatch anywhere else raises kStoreCorruption. Checkpoint()
// rotates to a fresh snapshot generation with an atomic manifest swap.
//
// Mutations between commits live only in memory, so a crash at any point
// inside a trigger rolls the store back to the previous trigger boundary:
// micro-batch processing is exactly-once.
class StateStore {
 public:
  StateStore() = default;  // in-memory only
  ~StateStore();

  StateStore(const StateStore&) = delete;
  StateStore& operator=(const StateStore&) = delete;
  StateStore(StateStore&& other) noexcept;
  StateStore& operator=(StateStore&& other) noexcept;

  static StateStore Open(const std::string& directory);

  // --- key table ---

  // Looks up a key; counts one key read. The returned state may be mutated
  // in place; it is serialized at the next commit.
  KeyState* Find(const std::string& store_key);

  KeyState& GetOrCreate(const std::string& store_key,
                        const std::function<KeyState()>& factory);

  bool Contains(const std::string& store_key) const;

  // Store keys beginning with `prefix` whose selection round currently holds
  // a tree (the candidates a full scan must test). Sorted; does not count
  // reads (the engine pays per Find()).
  std::vector<std::string> LiveTreeKeys(const std::string& prefix) const;

  int64_t key_count() const { return static_cast<int64_t>(keys_.size()); }

  // --- user table ---
  UserBudgetTable& users() { return users_; }

  // --- prediction index ---
  void SetPrediction(const std::string& store_key, int64_t trigger);
  void ClearPrediction(const std::string& store_key);
  std::vector<std::string> DuePredictions(int64_t trigger) const;
  std::optional<int64_t> PredictionFor(const std::string& store_key) const;
  // Index and per-key predicted_release fields must mirror each other.
  bool PredictionIndexConsistent() const;

  // --- trigger lifecycle ---

  // Durably commits everything mutated since the previous commit, plus this
  // trigger's releases and the engine's counters.
  void CommitTrigger(int64_t trigger, std::span<const Release> releases,
                     const nlohmann::json& counters);

  // Rotates snapshot + WAL. Only valid at a commit boundary.
  void Checkpoint();

  // Checkpoint + release file handles. The store must not be used after.
  void Close();

  int64_t last_committed_trigger() const { return last_committed_; }
  const std::vector<Release>& releases() const { return releases_; }
  const nlohmann::json& counters() const { return counters_; }

  bool persistent() const { return !directory_.empty(); }
  const std::string& directory() const { return directory_; }

  // --- I/O accounting (proportionality checks) ---
  int64_t key_reads() const { return key_reads_; }
  int64_t key_writes() const { return key_writes_; }

 private:
  void LoadSnapshot(const std::string& path);
  void ReplayWal(const std::string& path);
  void ApplyCommitRecord(const nlohmann::json& record);
  void WriteSnapshot(const std::string& path) const;
  void OpenWalForAppend(const std::string& path);
  void AppendWalRecord(const std::string& payload);
  void RequireCommitBoundary(const char* op) const;
  std::string SnapshotPath(int64_t generation) const;
  std::string WalPath(int64_t generation) const;
  void CloseWalFd();

  std::map<std::string, KeyState> keys_;
  UserBudgetTable users_;
  std::map<std::string, int64_t> predictions_;    // store key -> due trigger
  std::map<int64_t, std::set<std::string>> due_;  // due trigger -> store keys
  std::vector<Release> releases_;
  nlohmann::json counters_ = nlohmann::json::object();
  int64_t last_committed_ = 0;

  // Mutations since the last commit.
  std::set<std::string> touched_keys_;
  std::map<std::string, std::optional<int64_t>> prediction_ops_;

  std::string directory_;
  int64_t generation_ = 0;
  int wal_fd_ = -1;

  int64_t key_reads_ = 0;
  int64_t key_writes_ = 0;
};

}  // namespace dpsqlp

#endif  // DPSQLP_STATE_STORE_H_
