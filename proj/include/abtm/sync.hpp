#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "abtm/definition.hpp"
#include "abtm/tree.hpp"

namespace abtm {

struct SyncConfig {
  int me = 1;  // 1-based replica index
  int n = 3;
  double max_delay = 0.2;  // seconds to wait for missing hashes

  /// Throws Error(ConfigError).
  void check() const;
};

/// Reserved sync keys: trigger_sync, sync_ended, send_vars, received_vars,
/// master, time_start, hash_<i>_lo, hash_<i>_hi, hash_set_<i>.
bool is_sync_key(std::string_view key) noexcept;
bool is_sync_sample(const Sample& sample) noexcept;

/// Throws Error(ReservedKey) if the mission declares or references a sync key.
void check_mission_keys(const TreeDefinition& mission);

/// Text of the synchronization tree for replica `cfg.me` of `cfg.n`.
std::string sync_tree_text(const SyncConfig& cfg);
TreeDefinition build_sync_tree(const SyncConfig& cfg);

/// 64-bit hash as two binary64-exact 32-bit halves.
struct HashHalves {
  double lo = 0.0;
  double hi = 0.0;
};
HashHalves split_hash(std::uint64_t h) noexcept;
std::uint64_t join_hash(double lo, double hi) noexcept;

struct SyncMessage {
  enum class Kind : std::uint8_t { Hash, VarDump };
  Kind kind = Kind::Hash;
  // Hash: the hash_<i>_lo/hi and hash_set_<i> fields. VarDump: empty.
  Sample fields;
  // VarDump: canonical snapshot bytes.
  std::string dump;
};

/// Wire text. Hash: one JSON object. VarDump: `{"__var_dump__":1}`, a
/// newline, then the snapshot in base64.
std::string encode_message(const SyncMessage& message);
/// Throws SyntaxError or Error(MalformedDump).
SyncMessage decode_message(std::string_view text);

std::string base64_encode(std::string_view bytes);
/// Throws Error(MalformedDump) on invalid input.
std::string base64_decode(std::string_view text);

/// One replica: mission tree plus the synchronization tree, driven by the
/// sync-aware callback. Calls must be serialized.
class Executor {
 public:
  Executor(const TreeDefinition& mission, const SyncConfig& cfg);
  ~Executor();
  Executor(Executor&&) noexcept;
  Executor& operator=(Executor&&) noexcept;

  const SyncConfig& config() const { return cfg_; }
  Tree& mission() { return *mission_; }
  const Tree& mission() const { return *mission_; }
  Tree& sync_tree() { return *sync_; }
  const Tree& sync_tree() const { return *sync_; }

  Sample start();

  /// Samples without sync keys go to mission memory; a condition change
  /// outside a round starts one with {trigger_sync: 1}. `time` is mirrored
  /// into the sync tree. Sync samples go to the sync tree. When the round
  /// finishes, the result is merged with the mission callback's outputs.
  Sample callback(const Sample& sample);

  /// Master side: canonical snapshot of mission memory.
  std::string make_var_dump() const;
  /// Slave side: adopts the dump (changed keys become dirty so pending
  /// condition changes are processed like on the master), then, inside a
  /// round, feeds {received_vars: 1}. Throws Error(MalformedDump) and keeps
  /// the old state on a bad dump.
  Sample apply_var_dump(std::string_view dump);

  /// Messages produced by the last calls, in order; clears the outbox.
  std::vector<SyncMessage> take_outbox();

  bool in_round() const { return in_round_; }
  /// Master chosen in the last completed round (1 before any round).
  int last_master() const { return last_master_; }
  std::uint64_t rounds_completed() const { return rounds_; }
  /// True if the last callback finished a round.
  bool round_finished() const { return round_finished_; }
  std::uint64_t mission_hash() const { return mission_->memory().hash(); }

 private:
  Sample run_sync(const Sample& sample);
  void reset_sync_tree();

  SyncConfig cfg_;
  TreeDefinition sync_def_;
  std::unique_ptr<Tree> mission_;
  std::unique_ptr<Tree> sync_;
  std::vector<SyncMessage> outbox_;
  std::string key_hash_set_;
  std::string key_hash_lo_;
  std::string key_hash_hi_;
  bool in_round_ = false;
  bool round_finished_ = false;
  int last_master_ = 1;
  std::uint64_t rounds_ = 0;
};

/// True iff all alive replicas hold equal mission hashes (vacuous for
/// zero or one).
bool check_consistency(const std::vector<const Executor*>& alive);

}  // namespace abtm
