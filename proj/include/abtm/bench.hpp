#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "abtm/definition.hpp"
#include "abtm/memory.hpp"

namespace abtm::bench {

enum class Mode : std::uint8_t { Dense, Sparse };

std::string_view to_string(Mode mode) noexcept;
std::optional<Mode> parse_mode(std::string_view text) noexcept;

struct Range {
  int lo = 0;
  int hi = 0;
};

struct BenchConfig {
  int tree_count = 200;
  Range height{3, 5};
  Range children{3, 7};
  std::vector<Mode> modes{Mode::Dense, Mode::Sparse};
  int samples = 1000;
  std::uint64_t seed = 1;
  // Keep only trees whose node count is within target * (1 +- tolerance).
  std::optional<int> target_nodes;
  double target_tolerance = 0.2;
  // Comparison terms per condition guard; tree i uses tiers[i % size].
  std::vector<int> tiers{1, 3, 9};
  int repetitions = 3;
  // Test hook: corrupts the asynchronous transcript so the equivalence gate
  // fails on the first tree.
  bool inject_mismatch = false;

  /// Throws Error(ConfigError) on empty ranges or non-positive counts.
  void check() const;
};

struct TreeShape {
  int height = 0;
  int tier = 1;
};

/// Random feedback-free tree: control nodes drawn from seq/sel/skip, leaves
/// only at the drawn height, each leaf a coin flip between a Condition over
/// its own fresh inputs and an Action writing its own fresh output.
///
/// Condition `c<k>` with tier t:  S: c<k>_0 > 0.5 and c<k>_1 < 0.5 and ...; R: default
/// Action `a<k>`:                 a<k>_out := 1
TreeDefinition generate_random_tree(std::uint64_t seed, const BenchConfig& cfg, int tier, TreeShape* shape = nullptr);

std::size_t count_nodes(const TreeDefinition& def);

using Stream = std::vector<Sample>;

/// Dense: every sample toggles the primary input of a condition that the
/// previous classical traversal read, flipping its evaluation. Sparse: every
/// sample writes a variable no condition reads. A tree whose activation path
/// reads no condition falls back to toggling any condition.
Stream generate_samples(const TreeDefinition& def, Mode mode, int count, std::uint64_t seed);

/// Dense variant that toggles any condition, including ones the classical
/// traversal never reaches. Asynchronous propagation activates such
/// subtrees on their own (their parents still hold the initial R), so the
/// two engines are not expected to agree on this stream.
Stream generate_unrestricted_dense(const TreeDefinition& def, int count, std::uint64_t seed);

/// True when the first classical traversal ticks at least one condition.
bool path_reads_condition(const TreeDefinition& def);

/// Per-call outputs of a run: start() first, then one entry per sample.
using Transcript = std::vector<Sample>;

Transcript run_async(const TreeDefinition& def, const Stream& stream);
Transcript run_classical(const TreeDefinition& def, const Stream& stream);

/// Bit-exact comparison; returns a description of the first difference.
std::optional<std::string> compare_transcripts(const Transcript& classical, const Transcript& async);

struct Timing {
  std::uint64_t t_classical_ns = 0;
  std::uint64_t t_abtm_ns = 0;
  double ratio = 0.0;
  std::uint64_t ticks_classical = 0;
  std::uint64_t ticks_abtm = 0;
};

/// Checks equivalence first (Error(OracleMismatch) when transcripts differ),
/// then times both engines over the stream, best of `repetitions` after one
/// discarded warm-up pass. Tree construction is outside the timed region.
Timing measure_ratio(const TreeDefinition& def, const Stream& stream, int repetitions, bool inject_mismatch = false);

struct TreeResult {
  int tree_id = 0;
  std::size_t nodes = 0;
  int height = 0;
  Mode mode = Mode::Dense;
  int tier = 1;
  Timing timing;
};

struct Aggregate {
  std::string group;  // "dense", "sparse", "dense/tier3", ...
  std::size_t trees = 0;
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct BenchReport {
  BenchConfig config;
  std::vector<TreeResult> results;
  std::vector<Aggregate> aggregates;
  // Set when the equivalence gate failed; results stop at that tree.
  std::optional<std::string> mismatch;

  std::string to_csv() const;
  /// Aggregate JSON. With `include_timings` false, timing-derived fields are
  /// left out so the document depends on the seed only.
  std::string aggregate_json(bool include_timings = true) const;
};

/// Seed of tree i: derived from the base seed so any tree can be rebuilt
/// alone.
std::uint64_t tree_seed(std::uint64_t base, int index) noexcept;

/// Tree `index` of a benchmark run: drawn from tree_seed(cfg.seed, index)
/// and redrawn until it fits the target node count and its first classical
/// traversal reads a condition. `seed_out` receives the accepted seed.
TreeDefinition draw_tree(const BenchConfig& cfg, int index, std::uint64_t* seed_out = nullptr, TreeShape* shape = nullptr);

/// Seed of the sample stream for an accepted tree seed.
std::uint64_t stream_seed(std::uint64_t tree_seed, Mode mode) noexcept;

BenchReport run_bench(const BenchConfig& cfg);

double median(std::vector<double> values);

}  // namespace abtm::bench
