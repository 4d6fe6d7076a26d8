#pragma once

#include <cstdint>
#include <map>
#include <unordered_map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace abtm {

enum class Scope : std::uint8_t { Input, Output };

/// A batch of variable updates. Keys are unique and iterate in byte order,
/// which keeps every rendering of a sample deterministic.
using Sample = std::map<std::string, double, std::less<>>;

using SlotId = std::uint32_t;

/// Keys under this prefix hold node states and belong to the engine.
inline constexpr std::string_view kStatePrefix = "__state__/";

/// `time` is auto-declared replica-local: replicas see time samples at
/// slightly different instants and it must not take part in hashing.
inline constexpr std::string_view kTimeKey = "time";

bool is_state_key(std::string_view key) noexcept;

struct Variable {
  std::string key;
  double value = 0.0;
  Scope scope = Scope::Input;
  bool local = false;
  // Cleared when a variable dump from another replica does not mention it.
  bool present = true;
};

/// The blackboard: scoped binary64 variables with change tracking.
///
/// Variables live in stable slots so the engine can bind expressions once and
/// read by index afterwards. Two change sets are maintained:
///   - the dirty set, keys whose value differs from the value they had when
///     the dirty set was last cleared (a write back to that value removes the
///     key again);
///   - the output log, last written value of every changed Output variable
///     since the last drain.
/// Values are compared by bit pattern, the same notion of equality the
/// canonical snapshot uses.
class Memory {
 public:
  void declare(std::string_view key, Scope scope, double initial = 0.0, bool local = false);
  bool contains(std::string_view key) const;

  /// Applies all changes and returns the keys whose stored value changed.
  /// Unknown keys are auto-declared as Input (see `slot`).
  std::vector<std::string> set(const Sample& changes);
  /// `set` without collecting the changed keys; returns how many changed.
  std::size_t apply(const Sample& changes);

  /// Reads a value, auto-declaring the key as Input 0.0 if needed.
  double get(std::string_view key);
  /// Reads without declaring; unknown keys read as 0.0.
  double peek(std::string_view key) const;

  Sample drain_output_changes();
  const Sample& pending_output_changes() const { return output_log_; }

  std::string canonical_snapshot() const;
  std::uint64_t hash() const;

  // Slot-level access for the engine.
  SlotId slot(std::string_view key);
  std::optional<SlotId> find(std::string_view key) const;
  const Variable& variable(SlotId slot) const { return vars_[slot]; }
  double value(SlotId slot) const { return vars_[slot].value; }
  std::size_t size() const { return vars_.size(); }
  /// Writes through the change tracking. Returns true if the value changed.
  bool assign(SlotId slot, double value);

  /// Engine-owned node-state variable; written only through `set_state`.
  SlotId declare_state(std::string key, double initial);
  /// Node-state writes bypass dirty tracking: no condition can read them.
  void set_state(SlotId slot, double value) { vars_[slot].value = value; }

  const std::vector<SlotId>& dirty_slots() const;
  /// Every slot that became dirty since the last clear, possibly including
  /// slots that have since returned to their baseline (check `is_dirty`).
  const std::vector<SlotId>& dirty_candidates() const { return dirty_order_; }
  std::vector<std::string> dirty_keys() const;
  bool is_dirty(SlotId slot) const { return slot < dirty_.size() && dirty_[slot].active; }
  void clear_dirty();

  /// Overwrites every non-local variable from a canonical snapshot. Non-local
  /// variables missing from the snapshot stop being present. Values that
  /// change are marked dirty; node states and the output log are untouched
  /// by change tracking. Throws MalformedDump without modifying anything if
  /// the snapshot does not parse.
  void adopt_snapshot(std::string_view snapshot);

 private:
  struct DirtyEntry {
    bool active = false;
    bool listed = false;  // present in dirty_order_
    double baseline = 0.0;
  };

  SlotId add(std::string key, Scope scope, double initial, bool local);
  const std::vector<SlotId>& sorted_slots() const;
  void mark_dirty(SlotId slot, double old_value);

  std::vector<Variable> vars_;
  struct KeyHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view key) const noexcept;
  };
  std::unordered_map<std::string, SlotId, KeyHash, std::equal_to<>> index_;
  // Slots in key byte order; rebuilt lazily after declarations.
  mutable std::vector<SlotId> sorted_;
  mutable std::vector<DirtyEntry> dirty_;
  mutable std::vector<SlotId> dirty_order_;
  Sample output_log_;
};

/// Parses the canonical snapshot format back into (key, value) pairs.
std::optional<std::vector<std::pair<std::string, double>>> parse_snapshot(std::string_view text);

std::uint64_t fnv1a64(std::string_view bytes) noexcept;

}  // namespace abtm
