#include "abtm/tree.hpp"

#include <algorithm>

#include "abtm/error.hpp"

namespace abtm {

bool is_control(NodeKind kind) noexcept { return kind != NodeKind::Condition && kind != NodeKind::Action; }

std::string_view keyword(NodeKind kind) noexcept {
  switch (kind) {
    case NodeKind::Sequence: return "seq";
    case NodeKind::Selector: return "sel";
    case NodeKind::Skipper: return "skip";
    case NodeKind::Parallel: return "par";
    case NodeKind::Condition: return "cond";
    case NodeKind::Action: return "act";
  }
  return "?";
}

bool kb_less(const OrderKey& a, const OrderKey& b) noexcept {
  std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i] != b[i]) return a[i] < b[i];
  }
  // Common prefix: the longer key is the descendant and comes first.
  return a.size() > b.size();
}

std::string format_order(const OrderKey& key, char sep) {
  std::string out;
  for (std::size_t i = 0; i < key.size(); ++i) {
    if (i) out.push_back(sep);
    out += std::to_string(key[i]);
  }
  return out;
}

TickType return_tick(NodeState before, NodeState after) noexcept {
  if (before == after || after == NodeState::Running) return TickType::None;
  if (before == NodeState::Running) return TickType::ActivatingRise;
  return TickType::CheckingRise;
}

TickType call_tick(NodeKind kind, NodeState state, TickType received) noexcept {
  switch (kind) {
    case NodeKind::Condition:
    case NodeKind::Action:
      if (received == TickType::ActivatingFall || received == TickType::CheckingFall) return received;
      return TickType::None;
    default: break;
  }
  switch (received) {
    case TickType::ActivatingFall: return TickType::ActivatingFall;
    case TickType::ActivatingRise:
      if (state != NodeState::Running) return TickType::None;
      // Parallel already activated all children when it entered R.
      return kind == NodeKind::Parallel ? TickType::CheckingFall : TickType::ActivatingFall;
    case TickType::CheckingRise: return TickType::CheckingFall;
    case TickType::CheckingFall:
    case TickType::None: return TickType::None;
  }
  return TickType::None;
}

void TickQueue::insert(std::uint32_t rank, NodeId node, TickType tick) {
  if (rank >= slots_.size()) slots_.resize(rank + 1);
  Slot& slot = slots_[rank];
  if (slot.tick == TickType::None) {
    slot = {tick, node};
    heap_.push_back(rank);
    std::push_heap(heap_.begin(), heap_.end(), std::greater<>());
  } else if (tick > slot.tick) {
    slot.tick = tick;
  }
}

std::pair<NodeId, TickType> TickQueue::pop() {
  std::pop_heap(heap_.begin(), heap_.end(), std::greater<>());
  Slot& slot = slots_[heap_.back()];
  heap_.pop_back();
  std::pair<NodeId, TickType> out{slot.node, slot.tick};
  slot.tick = TickType::None;
  return out;
}

void TickQueue::clear() {
  for (std::uint32_t rank : heap_) slots_[rank].tick = TickType::None;
  heap_.clear();
}

Tree::Tree(const TreeDefinition& def) {
  for (const auto& d : def.declarations) memory_.declare(d.key, d.scope, d.initial, d.local);
  add_node(def.root, kNoParent, OrderKey{0});

  // Post-order position is the Kleene-Brouwer rank.
  std::uint32_t next = 0;
  std::vector<std::pair<NodeId, std::size_t>> stack{{0, 0}};
  while (!stack.empty()) {
    auto& [id, child] = stack.back();
    if (child < nodes_[id].children.size()) {
      NodeId c = nodes_[id].children[child++];
      stack.emplace_back(c, 0);
    } else {
      nodes_[id].kb_rank = next++;
      stack.pop_back();
    }
  }

  watchers_.resize(memory_.size());
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    for (SlotId s : nodes_[id].watch) watchers_[s].push_back(id);
  }
  for (auto& list : watchers_) {
    std::sort(list.begin(), list.end(), [this](NodeId a, NodeId b) { return nodes_[a].kb_rank < nodes_[b].kb_rank; });
  }
  stamp_.assign(nodes_.size(), 0);
}

NodeId Tree::add_node(const NodeDef& def, NodeId parent, OrderKey order) {
  auto id = static_cast<NodeId>(nodes_.size());
  nodes_.emplace_back();
  {
    Node& n = nodes_.back();
    n.kind = def.kind;
    n.name = def.name;
    n.parent = parent;
    n.order = order;
  }
  if (def.kind == NodeKind::Condition) {
    ConditionSpec bound = def.condition.bind(memory_);
    std::vector<SlotId> watch;
    for (const auto& key : def.condition.deps()) watch.push_back(memory_.slot(key));
    nodes_[id].condition = std::move(bound);
    nodes_[id].watch = std::move(watch);
  } else if (def.kind == NodeKind::Action) {
    nodes_[id].action = def.action.bind(memory_);
  }
  nodes_[id].state_slot = memory_.declare_state(std::string(kStatePrefix) + format_order(order), encode(NodeState::Running));

  for (std::uint32_t i = 0; i < def.children.size(); ++i) {
    OrderKey child = order;
    child.push_back(i);
    NodeId c = add_node(def.children[i], id, std::move(child));
    nodes_[id].children.push_back(c);
  }
  return id;
}

std::optional<NodeId> Tree::find(std::string_view name) const {
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].name == name) return id;
  }
  return std::nullopt;
}

std::optional<NodeId> Tree::find(const OrderKey& order) const {
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].order == order) return id;
  }
  return std::nullopt;
}

std::vector<NodeId> Tree::conditions() const {
  std::vector<NodeId> out;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].kind == NodeKind::Condition) out.push_back(id);
  }
  return out;
}

std::pair<NodeState, TickType> Tree::tick(NodeId id, TickType received) {
  ++ticks_;
  const Node& n = nodes_[id];
  NodeState before = state(id);
  NodeState after = evaluate(id, call_tick(n.kind, before, received));
  memory_.set_state(n.state_slot, encode(after));
  if (observer_) observer_(id, received, before, after);
  return {after, return_tick(before, after)};
}

NodeState Tree::evaluate(NodeId id, TickType tick) {
  const Node& n = nodes_[id];
  switch (n.kind) {
    case NodeKind::Sequence:
    case NodeKind::Selector:
    case NodeKind::Skipper: return evaluate_sequential(n, tick);
    case NodeKind::Parallel: return evaluate_parallel(n, tick);
    case NodeKind::Condition:
    case NodeKind::Action: return evaluate_leaf(n, tick);
  }
  return NodeState::Running;
}

namespace {

struct SequentialRule {
  NodeState continue_on;
  NodeState returns_a;
  NodeState returns_b;
};

constexpr SequentialRule rule_for(NodeKind kind) {
  switch (kind) {
    case NodeKind::Selector: return {NodeState::Failure, NodeState::Running, NodeState::Success};
    case NodeKind::Skipper: return {NodeState::Running, NodeState::Success, NodeState::Failure};
    default: return {NodeState::Success, NodeState::Running, NodeState::Failure};
  }
}

}  // namespace

NodeState Tree::evaluate_sequential(const Node& n, TickType tick) {
  if (tick == TickType::None) return decode_state(memory_.value(n.state_slot));
  const SequentialRule rule = rule_for(n.kind);
  for (NodeId child : n.children) {
    NodeState s = this->tick(child, tick).first;
    if (s == rule.returns_a || s == rule.returns_b) return s;
  }
  return rule.continue_on;
}

NodeState Tree::evaluate_parallel(const Node& n, TickType tick) {
  if (tick == TickType::None) return decode_state(memory_.value(n.state_slot));
  bool any_failure = false;
  bool any_running = false;
  for (NodeId child : n.children) {
    NodeState s = this->tick(child, tick).first;
    any_failure |= s == NodeState::Failure;
    any_running |= s == NodeState::Running;
  }
  if (any_failure) return NodeState::Failure;
  return any_running ? NodeState::Running : NodeState::Success;
}

NodeState Tree::fresh_condition(const Node& n) const {
  try {
    return eval_condition(n.condition, memory_);
  } catch (const Error& e) {
    throw Error(e.code(), "condition '" + n.name + "' (" + format_order(n.order) + "): " + e.what());
  }
}

NodeState Tree::evaluate_leaf(const Node& n, TickType tick) {
  NodeState stored = decode_state(memory_.value(n.state_slot));
  if (n.kind == NodeKind::Condition) {
    if (tick == TickType::ActivatingFall || tick == TickType::CheckingFall) return fresh_condition(n);
    return stored;
  }
  if (tick != TickType::ActivatingFall) return stored;
  try {
    run_action(n.action, memory_);
  } catch (const Error& e) {
    throw Error(e.code(), "action '" + n.name + "' (" + format_order(n.order) + "): " + e.what());
  }
  return NodeState::Success;
}

void Tree::collect_candidates(std::vector<NodeId>& out) const {
  bool stamped = false;
  for (SlotId s : memory_.dirty_candidates()) {
    if (s >= watchers_.size() || watchers_[s].empty() || !memory_.is_dirty(s)) continue;
    if (!stamped) {
      stamped = true;
      if (++generation_ == 0) {
        std::fill(stamp_.begin(), stamp_.end(), 0);
        generation_ = 1;
      }
    }
    for (NodeId c : watchers_[s]) {
      if (stamp_[c] == generation_) continue;
      stamp_[c] = generation_;
      out.push_back(c);
    }
  }
}

std::vector<NodeId> Tree::changed_conditions() {
  std::vector<NodeId> candidates;
  collect_candidates(candidates);
  memory_.clear_dirty();
  std::vector<NodeId> changed;
  for (NodeId c : candidates) {
    if (fresh_condition(nodes_[c]) != state(c)) changed.push_back(c);
  }
  std::sort(changed.begin(), changed.end(), [this](NodeId a, NodeId b) { return nodes_[a].kb_rank < nodes_[b].kb_rank; });
  return changed;
}

bool Tree::has_changed_conditions() const {
  std::vector<NodeId> candidates;
  collect_candidates(candidates);
  for (NodeId c : candidates) {
    if (fresh_condition(nodes_[c]) != state(c)) return true;
  }
  return false;
}

void Tree::enqueue_changed() {
  if (memory_.dirty_candidates().empty()) return;
  scratch_.clear();
  collect_candidates(scratch_);
  memory_.clear_dirty();
  // The queue orders by rank, so no sorting is needed here.
  for (NodeId c : scratch_) {
    if (fresh_condition(nodes_[c]) != state(c)) queue_.insert(nodes_[c].kb_rank, c, TickType::ActivatingFall);
  }
}

Sample Tree::run_queue() {
  try {
    enqueue_changed();
    std::size_t pops = 0;
    while (!queue_.empty()) {
      if (++pops > budget_) {
        throw Error(ErrorCode::CycleBudgetExceeded,
                    "callback exceeded the budget of " + std::to_string(budget_) + " queue pops");
      }
      auto [id, received] = queue_.pop();
      TickType rise = tick(id, received).second;
      NodeId parent = nodes_[id].parent;
      if ((rise == TickType::ActivatingRise || rise == TickType::CheckingRise) && parent != kNoParent) {
        queue_.insert(nodes_[parent].kb_rank, parent, rise);
      }
      enqueue_changed();
    }
  } catch (...) {
    queue_.clear();
    throw;
  }
  return memory_.drain_output_changes();
}

Sample Tree::callback(const Sample& sample) {
  memory_.apply(sample);
  return run_queue();
}

Sample Tree::start() {
  queue_.insert(nodes_[root()].kb_rank, root(), TickType::ActivatingFall);
  return run_queue();
}

Sample Tree::classical_callback(const Sample& sample) {
  memory_.apply(sample);
  memory_.clear_dirty();
  tick(root(), TickType::ActivatingFall);
  memory_.clear_dirty();
  return memory_.drain_output_changes();
}

}  // namespace abtm
