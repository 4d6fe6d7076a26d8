#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "abtm/definition.hpp"
#include "abtm/tree.hpp"

namespace abtm {

enum class Severity : std::uint8_t { Error, Warning };

enum class DiagCode : std::uint8_t {
  MissingDefault,
  InvalidRules,
  EmptyControlNode,
  LeafWithChildren,
  ReservedKeyWrite,
  AssignToInput,
  DivisionPresent,
  UndeclaredVariable,
};

std::string_view to_string(DiagCode code) noexcept;

struct Diagnostic {
  Severity severity = Severity::Error;
  DiagCode code = DiagCode::MissingDefault;
  std::string node;
  std::string message;
  int line = 0;
  int column = 0;

  /// "line:col: error MissingDefault: condition 'c' ..."
  std::string to_string() const;
};

/// Parses the tree text format:
///
///   file  := { decl } node
///   decl  := ("input"|"output"|"local"|"var") IDENT [ "=" NUMBER ] ";"
///   ctrl  := ("seq"|"sel"|"skip"|"par") [IDENT] "{" node { node } "}"
///   leaf  := "cond" IDENT "{" rule { rule } "}" | "act" IDENT "{" asg { asg } "}"
///   rule  := ("S"|"F"|"R") ":" ( "default" | expr ) ";"
///   asg   := IDENT ":=" expr ";"
///
/// `//` starts a comment. Throws SyntaxError (message carries line:column)
/// or Error(DuplicateName) for siblings sharing a name. Rule-list problems
/// and empty control nodes are left to `validate`.
TreeDefinition parse_tree(std::string_view text);

std::vector<Diagnostic> validate(const TreeDefinition& def);
bool has_errors(const std::vector<Diagnostic>& diagnostics);

/// Canonical text rendering; parse_tree(print_tree(d)) reproduces d.
std::string print_tree(const TreeDefinition& def);

/// Validates, then builds. Throws Error(ValidationFailed) listing the errors.
Tree build(const TreeDefinition& def);

/// parse_tree + build.
Tree load_tree(std::string_view text);

}  // namespace abtm
