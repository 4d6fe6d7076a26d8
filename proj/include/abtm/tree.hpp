#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "abtm/definition.hpp"
#include "abtm/memory.hpp"
#include "abtm/state.hpp"

namespace abtm {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoParent = std::numeric_limits<NodeId>::max();

/// Position label of a node: the root is {0}, a child appends its index.
using OrderKey = std::vector<std::uint32_t>;

/// Kleene-Brouwer order: left siblings first, descendants before ancestors.
bool kb_less(const OrderKey& a, const OrderKey& b) noexcept;
std::string format_order(const OrderKey& key, char sep = '.');

/// Tick type handed to the parent after a state transition: R->S/F
/// activate, S<->F check, anything else stays quiet.
TickType return_tick(NodeState before, NodeState after) noexcept;

/// Tick type a node passes to its own evaluation, given its stored state and
/// the tick it received.
TickType call_tick(NodeKind kind, NodeState state, TickType received) noexcept;

struct Node {
  NodeKind kind = NodeKind::Sequence;
  std::string name;
  OrderKey order;
  NodeId parent = kNoParent;
  std::vector<NodeId> children;
  SlotId state_slot = 0;
  // Rank in Kleene-Brouwer order, equal to the post-order position.
  std::uint32_t kb_rank = 0;
  ConditionSpec condition;
  ActionSpec action;
  std::vector<SlotId> watch;
};

/// Pending ticks ordered by Kleene-Brouwer rank; one entry per node, merged
/// by tick-type dominance. A min-heap of ranks plus a rank-indexed table of
/// pending tick types, reusable across callbacks without reallocation.
class TickQueue {
 public:
  void insert(std::uint32_t rank, NodeId node, TickType tick);
  std::pair<NodeId, TickType> pop();
  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }
  void clear();

 private:
  struct Slot {
    TickType tick = TickType::None;
    NodeId node = 0;
  };
  std::vector<std::uint32_t> heap_;
  std::vector<Slot> slots_;
};

/// An executable tree together with its memory.
///
/// Callbacks must be serialized by the caller. The tree may move between
/// threads between callbacks.
class Tree {
 public:
  static constexpr std::size_t kDefaultCallbackBudget = 10'000;

  /// Observer invoked after every tick: node, received tick, state before,
  /// state after.
  using TickObserver = std::function<void(NodeId, TickType, NodeState, NodeState)>;

  /// Builds the tree: declares variables, auto-declares referenced keys as
  /// Input 0.0, assigns order keys and initializes every node state to R.
  explicit Tree(const TreeDefinition& def);

  Memory& memory() { return memory_; }
  const Memory& memory() const { return memory_; }

  NodeId root() const { return 0; }
  std::size_t size() const { return nodes_.size(); }
  const Node& node(NodeId id) const { return nodes_[id]; }
  NodeState state(NodeId id) const { return decode_state(memory_.value(nodes_[id].state_slot)); }
  std::optional<NodeId> find(std::string_view name) const;
  std::optional<NodeId> find(const OrderKey& order) const;
  std::vector<NodeId> conditions() const;

  std::pair<NodeState, TickType> tick(NodeId id, TickType received);
  NodeState evaluate(NodeId id, TickType tick);

  /// Conditions watching a dirty variable whose fresh result differs from
  /// the stored state, in KB order. Clears the dirty set.
  std::vector<NodeId> changed_conditions();
  /// Same check without consuming the dirty set.
  bool has_changed_conditions() const;

  Sample callback(const Sample& sample);
  Sample start();
  /// Baseline: full top-down activation from the root for every sample.
  Sample classical_callback(const Sample& sample);

  std::uint64_t tick_count() const { return ticks_; }
  void set_callback_budget(std::size_t pops) { budget_ = pops; }
  void set_tick_observer(TickObserver observer) { observer_ = std::move(observer); }

 private:
  NodeId add_node(const NodeDef& def, NodeId parent, OrderKey order);
  NodeState evaluate_sequential(const Node& n, TickType tick);
  NodeState evaluate_parallel(const Node& n, TickType tick);
  NodeState evaluate_leaf(const Node& n, TickType tick);
  NodeState fresh_condition(const Node& n) const;
  void collect_candidates(std::vector<NodeId>& out) const;
  Sample run_queue();
  void enqueue_changed();

  Memory memory_;
  std::vector<Node> nodes_;
  // Condition nodes watching each slot, in KB order.
  std::vector<std::vector<NodeId>> watchers_;
  mutable std::vector<std::uint32_t> stamp_;
  mutable std::uint32_t generation_ = 0;
  std::vector<NodeId> scratch_;
  TickQueue queue_;
  std::uint64_t ticks_ = 0;
  std::size_t budget_ = kDefaultCallbackBudget;
  TickObserver observer_;
};

}  // namespace abtm
