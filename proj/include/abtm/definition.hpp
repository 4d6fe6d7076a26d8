#pragma once

#include <string>
#include <vector>

#include "abtm/expr.hpp"
#include "abtm/memory.hpp"

namespace abtm {

enum class NodeKind : std::uint8_t { Sequence, Selector, Skipper, Parallel, Condition, Action };

bool is_control(NodeKind kind) noexcept;
std::string_view keyword(NodeKind kind) noexcept;

// Unbuilt tree description, produced by the text parser or by generators.
struct NodeDef {
  NodeKind kind = NodeKind::Sequence;
  std::string name;
  std::vector<NodeDef> children;
  ConditionSpec condition;
  ActionSpec action;
  int line = 0;
  int column = 0;
};

struct Declaration {
  std::string key;
  Scope scope = Scope::Input;
  double initial = 0.0;
  bool local = false;
};

struct TreeDefinition {
  std::vector<Declaration> declarations;
  NodeDef root;
};

}  // namespace abtm
