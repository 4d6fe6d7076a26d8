#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "abtm/memory.hpp"
#include "abtm/state.hpp"

namespace abtm {

enum class ExprOp : std::uint8_t {
  Number,
  Var,
  Neg,
  Add,
  Sub,
  Mul,
  Div,
  Eq,
  Ne,
  Lt,
  Gt,
  Le,
  Ge,
  And,
  Or,
  Not,
};

/// Immutable expression tree stored as a flat array; the root is the last
/// term. Comparisons and logical operators yield 1.0 or 0.0 and any nonzero
/// value counts as true. `and`/`or` short-circuit.
class Expr {
 public:
  static constexpr SlotId kUnbound = std::numeric_limits<SlotId>::max();

  struct Term {
    ExprOp op = ExprOp::Number;
    double number = 0.0;
    std::string key;
    SlotId slot = kUnbound;
    std::int32_t lhs = -1;
    std::int32_t rhs = -1;
  };

  Expr() = default;
  explicit Expr(std::vector<Term> terms) : terms_(std::move(terms)) {}

  /// Evaluates against `memory`. Unbound variables are looked up by key and
  /// read as 0.0 when undeclared; evaluation never modifies memory.
  double eval(const Memory& memory) const;

  /// Copy with every variable resolved to a slot of `memory`; referenced
  /// keys that are not declared yet get auto-declared.
  Expr bind(Memory& memory) const;

  std::set<std::string> deps() const;
  bool contains_division() const;
  /// Canonical text; parsing it yields a structurally identical tree.
  std::string to_string() const;

  const std::vector<Term>& terms() const { return terms_; }
  bool empty() const { return terms_.empty(); }

  friend bool operator==(const Expr& a, const Expr& b);

 private:
  double eval_at(std::int32_t index, const Memory& memory) const;
  void print_at(std::int32_t index, std::string& out) const;

  std::vector<Term> terms_;
};

/// Recursive-descent parser for the leaf expression language. Precedence
/// from loosest: or, and, not, comparison, + -, * /, unary minus. `=` is
/// accepted as an alias of `==`. Throws Error(SyntaxError) with the byte
/// offset of the offending token.
Expr parse_expr(std::string_view text);

std::string format_number(double v);

struct ConditionRule {
  std::optional<Expr> guard;  // nullopt: the default rule
  NodeState result = NodeState::Running;
};

/// Ordered guard rules; first match wins, the trailing default always
/// matches.
struct ConditionSpec {
  std::vector<ConditionRule> rules;

  /// Checks the rule-list invariants; returns a description of the first
  /// violation.
  std::optional<std::string> invalid_reason() const;
  std::set<std::string> deps() const;
  ConditionSpec bind(Memory& memory) const;
};

struct Assignment {
  std::string target;
  Expr value;
  SlotId slot = Expr::kUnbound;
};

struct ActionSpec {
  std::vector<Assignment> assignments;

  ActionSpec bind(Memory& memory) const;
};

NodeState eval_condition(const ConditionSpec& condition, const Memory& memory);

/// Applies assignments in order; each right-hand side sees earlier writes of
/// the same action. Throws on division by zero, leaving the applied prefix.
std::set<std::string> run_action(const ActionSpec& action, Memory& memory);

}  // namespace abtm
