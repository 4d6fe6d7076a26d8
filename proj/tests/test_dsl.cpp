#include <doctest.h>

#include <algorithm>

#include "abtm/dsl.hpp"
#include "abtm/error.hpp"

using namespace abtm;

namespace {

const char* kLatchTree = R"(
output mem;
output sub;
seq root {
  skip latch {
    cond latch_condition { S: sub = 1 and mem = 1; F: sub = 2 and mem = 1; R: default; }
    sel {
      seq {
        cond target { S: t > 0; F: t < 0; R: default; }
        act remember_s { mem := 1; sub := 1; }
      }
      act remember_f { mem := 1; sub := 2; }
    }
  }
}
)";

bool has_code(const std::vector<Diagnostic>& d, DiagCode code) {
  return std::any_of(d.begin(), d.end(), [&](const Diagnostic& x) { return x.code == code; });
}

}  // namespace

TEST_CASE("parse_tree: condition and action pair") {
  TreeDefinition def = parse_tree("seq { cond c { S: x > 0; F: x < 0; R: default; } act a { x := 1; } }");
  CHECK(def.root.kind == NodeKind::Sequence);
  REQUIRE(def.root.children.size() == 2);
  CHECK(def.root.children[0].kind == NodeKind::Condition);
  CHECK(def.root.children[0].condition.rules.size() == 3);
  CHECK(def.root.children[1].kind == NodeKind::Action);
  CHECK(def.root.children[1].action.assignments.size() == 1);
}

TEST_CASE("parse_tree: keywords, declarations and comments") {
  TreeDefinition def = parse_tree(
      "// header\n"
      "input a = 2; output b; local t = -1.5; var v;\n"
      "skip s { // trailing\n"
      "  cond c { R: default; }\n"
      "}\n");
  CHECK(def.root.kind == NodeKind::Skipper);
  CHECK(def.root.name == "s");
  REQUIRE(def.declarations.size() == 4);
  CHECK(def.declarations[0].initial == 2.0);
  CHECK(def.declarations[1].scope == Scope::Output);
  CHECK(def.declarations[2].local);
  CHECK(def.declarations[2].initial == -1.5);
  CHECK(def.declarations[3].scope == Scope::Input);

  CHECK(parse_tree("par { cond c { R: default; } }").root.kind == NodeKind::Parallel);
  CHECK(parse_tree("sel { cond c { R: default; } }").root.kind == NodeKind::Selector);
}

TEST_CASE("parse_tree: errors carry line and column") {
  try {
    parse_tree("seq {\n  cond c { S: x > ; R: default; }\n}");
    FAIL("expected SyntaxError");
  } catch (const SyntaxError& e) {
    CHECK(std::string(e.what()).find("2:") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_tree("seq { cond c { R: default; }"), SyntaxError);
  CHECK_THROWS_AS(parse_tree("seq { } extra"), SyntaxError);
  CHECK_THROWS_AS(parse_tree("cond c { Q: default; }"), SyntaxError);
  try {
    parse_tree("seq { cond c { R: default; } cond c { R: default; } }");
    FAIL("expected DuplicateName");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DuplicateName);
  }
  // The same name under different parents is fine.
  CHECK_NOTHROW(parse_tree("seq { seq { cond c { R: default; } } seq { cond c { R: default; } } }"));
}

TEST_CASE("validate: MissingDefault") {
  auto d = validate(parse_tree("cond c { S: x > 0; }"));
  CHECK(has_errors(d));
  CHECK(has_code(d, DiagCode::MissingDefault));
  CHECK_THROWS_AS(load_tree("cond c { S: x > 0; }"), Error);
}

TEST_CASE("validate: EmptyControlNode") {
  auto d = validate(parse_tree("seq { sel { } }"));
  CHECK(has_code(d, DiagCode::EmptyControlNode));
  CHECK(has_errors(d));
}

TEST_CASE("validate: ReservedKeyWrite") {
  // The text grammar cannot spell the key; generated definitions can.
  TreeDefinition def = parse_tree("act a { x := 1; }");
  def.root.action.assignments[0].target = "__state__/0";
  auto d = validate(def);
  CHECK(has_code(d, DiagCode::ReservedKeyWrite));
  CHECK(has_errors(d));
}

TEST_CASE("validate: warnings do not block building") {
  auto d = validate(parse_tree("input x; act a { x := 1 / y; }"));
  CHECK(has_code(d, DiagCode::AssignToInput));
  CHECK(has_code(d, DiagCode::DivisionPresent));
  CHECK(has_code(d, DiagCode::UndeclaredVariable));
  CHECK_FALSE(has_errors(d));
  for (const auto& x : d) CHECK(x.severity == Severity::Warning);
}

TEST_CASE("validate: latch tree is clean") {
  auto d = validate(parse_tree(kLatchTree));
  CHECK_FALSE(has_errors(d));
}

TEST_CASE("diagnostic text") {
  auto d = validate(parse_tree("seq {\n  cond c { S: x > 0; }\n}"));
  REQUIRE(!d.empty());
  CHECK(d[0].to_string().rfind("2:3: error MissingDefault:", 0) == 0);
}

TEST_CASE("build: order keys follow the latch illustration") {
  Tree tree = load_tree(kLatchTree);
  CHECK(tree.node(0).order == OrderKey{0});
  CHECK(tree.node(*tree.find("latch")).order == OrderKey{0, 0});
  CHECK(tree.node(*tree.find("latch_condition")).order == OrderKey{0, 0, 0});
  CHECK(tree.node(*tree.find("target")).order == OrderKey{0, 0, 1, 0, 0});
  CHECK(tree.node(*tree.find("remember_s")).order == OrderKey{0, 0, 1, 0, 1});
  CHECK(tree.node(*tree.find("remember_f")).order == OrderKey{0, 0, 1, 1});
  CHECK(tree.find(OrderKey{0, 0, 1}).has_value());
  CHECK(tree.find(OrderKey{0, 0, 1, 0}).has_value());
}

TEST_CASE("build: two-child seq and initial states") {
  Tree tree = load_tree("seq { cond a { R: default; } cond b { R: default; } }");
  CHECK(tree.node(1).order == OrderKey{0, 0});
  CHECK(tree.node(2).order == OrderKey{0, 1});
  for (NodeId i = 0; i < tree.size(); ++i) CHECK(tree.state(i) == NodeState::Running);
}

TEST_CASE("build is deterministic") {
  Tree a = load_tree(kLatchTree);
  Tree b = load_tree(kLatchTree);
  REQUIRE(a.size() == b.size());
  for (NodeId i = 0; i < a.size(); ++i) {
    CHECK(a.node(i).order == b.node(i).order);
    CHECK(a.node(i).name == b.node(i).name);
  }
  CHECK(a.memory().hash() == b.memory().hash());
  CHECK(a.memory().canonical_snapshot() == b.memory().canonical_snapshot());
}

TEST_CASE("undeclared references become Input 0") {
  Tree tree = load_tree("cond c { S: ghost > 0; R: default; }");
  REQUIRE(tree.memory().contains("ghost"));
  CHECK(tree.memory().variable(*tree.memory().find("ghost")).scope == Scope::Input);
  CHECK(tree.memory().get("ghost") == 0.0);
}

TEST_CASE("property: parse, print, parse is a fixed point") {
  const char* texts[] = {
      kLatchTree,
      "seq { cond c { S: x > 0; F: x < 0; R: default; } act a { x := 1; } }",
      "input a = 0.1; output b = -3; local time;\npar p { sel { cond q { F: not (a or b) and a * 2 >= -b; S: default; } } act z { b := b - 1; a := 1 / 3; } }",
  };
  for (const char* text : texts) {
    TreeDefinition first = parse_tree(text);
    std::string printed = print_tree(first);
    TreeDefinition second = parse_tree(printed);
    CHECK(print_tree(second) == printed);
    Tree ta = build(first);
    Tree tb = build(second);
    CHECK(ta.size() == tb.size());
    CHECK(ta.memory().canonical_snapshot() == tb.memory().canonical_snapshot());
  }
}
