#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "abtm/memory.hpp"

namespace abtm::sim {

/// Link names: "env->2", "1->3", "*->2", "env->*". Replica indices are
/// 1-based; "env" is the sample source.
struct Fault {
  std::string link = "env->*";
  // Keys that select a message; empty matches everything. A hash message
  // carries hash_<i>_* keys and a variable dump matches "__var_dump__".
  std::vector<std::string> match;
  double after = 0.0;  // only messages sent at or after this time
  std::optional<std::uint64_t> count;  // at most this many matches
  bool drop = false;
  double delay = 0.0;
};

struct Crash {
  // Replica index, or 0 for "whoever is master at crash time".
  int replica = 0;
  // Absent: drawn uniformly from [window_lo, window_hi) with the seed.
  std::optional<double> time;
  double window_lo = 0.0;
  double window_hi = 0.0;  // 0 means duration
};

struct Event {
  double time = 0.0;
  std::vector<int> targets;  // empty = every replica
  Sample sample;
};

struct ScenarioConfig {
  int replicas = 3;
  std::string tree_path;  // as written in the file
  std::string tree_text;
  double max_delay = 0.2;
  double duration = 10.0;
  double time_tick = 0.05;
  std::uint64_t seed = 1;
  std::vector<Event> schedule;
  std::vector<Fault> faults;
  std::vector<Crash> crashes;

  /// Throws Error(ConfigError).
  void check() const;
  /// Same scenario with faults and crashes removed.
  ScenarioConfig reference() const;
};

/// Parses the JSON document; the tree path is resolved against `base_dir`
/// and read. Throws SyntaxError, Error(ConfigError) or Error(IoError).
ScenarioConfig parse_scenario(const std::string& json_text, const std::string& base_dir);
ScenarioConfig load_scenario(const std::string& path);

/// Time stamps k * tick for k = 0 .. floor(duration / tick). Throws
/// Error(ConfigError) when tick <= 0.
std::vector<double> inject_time(double duration, double tick);

struct Output {
  double time = 0.0;
  int replica = 0;
  Sample sample;  // mission keys only
  bool external = false;  // false: suppressed slave output
};

struct RoundRecord {
  int replica = 0;
  double time = 0.0;
  std::uint64_t hash = 0;
  int master = 0;
};

struct MasterChange {
  double time = 0.0;
  std::uint64_t round = 0;
  int master = 0;
};

struct ReplicaReport {
  int index = 0;
  std::optional<double> crashed_at;
  std::uint64_t samples = 0;  // environment samples consumed
  std::uint64_t rounds = 0;
  std::vector<Output> outputs;
};

struct Counts {
  std::uint64_t samples_emitted = 0;  // also the per-sample sync baseline
  std::uint64_t samples_delivered = 0;
  std::uint64_t sync_rounds = 0;  // distinct round numbers completed
  std::uint64_t external_outputs = 0;
  std::uint64_t suppressed_outputs = 0;
  std::uint64_t hash_messages = 0;
  std::uint64_t var_dumps = 0;
  std::uint64_t dropped = 0;
  std::uint64_t delayed = 0;
};

struct SimReport {
  int replica_count = 0;
  double duration = 0.0;
  std::uint64_t seed = 0;
  std::vector<ReplicaReport> replicas;
  std::vector<Output> external;
  // Round number (per replica, 1-based) -> one record per replica that
  // completed it.
  std::map<std::uint64_t, std::vector<RoundRecord>> rounds;
  std::vector<MasterChange> masters;
  std::vector<std::string> mismatches;
  bool verdict = true;
  Counts counts;

  std::string to_json() const;
  std::string to_text() const;
};

/// Executor failures are rethrown with the replica and virtual time in the
/// message, keeping their code.
SimReport run_scenario(const ScenarioConfig& cfg);

}  // namespace abtm::sim
