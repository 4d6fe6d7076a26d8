#include "abtm/dsl.hpp"

#include <charconv>
#include <cmath>
#include <map>
#include <set>

#include "abtm/error.hpp"

namespace abtm {

namespace {

struct Cursor {
  std::string_view text;
  std::size_t pos = 0;

  std::pair<int, int> line_col(std::size_t at) const {
    int line = 1;
    int col = 1;
    for (std::size_t i = 0; i < at && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    return {line, col};
  }
};

bool ident_start(char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_'; }
bool ident_char(char c) { return ident_start(c) || (c >= '0' && c <= '9'); }

class TreeParser {
 public:
  explicit TreeParser(std::string_view text) { cur_.text = text; }

  TreeDefinition parse() {
    TreeDefinition def;
    skip_space();
    while (true) {
      auto word = peek_word();
      if (word == "input" || word == "output" || word == "local" || word == "var") {
        def.declarations.push_back(parse_decl());
      } else {
        break;
      }
    }
    def.root = parse_node();
    skip_space();
    if (cur_.pos < cur_.text.size()) fail(cur_.pos, "end of input after the root node");
    return def;
  }

 private:
  [[noreturn]] void fail(std::size_t at, std::string_view expected) {
    auto [line, col] = cur_.line_col(at);
    std::string found = at < cur_.text.size() ? "'" + std::string(cur_.text.substr(at, 1)) + "'" : "end of input";
    throw SyntaxError(at, std::to_string(line) + ":" + std::to_string(col) + ": expected " + std::string(expected) +
                              ", found " + found);
  }

  void skip_space() {
    auto& t = cur_.text;
    auto& p = cur_.pos;
    while (p < t.size()) {
      char c = t[p];
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        ++p;
      } else if (c == '/' && p + 1 < t.size() && t[p + 1] == '/') {
        while (p < t.size() && t[p] != '\n') ++p;
      } else {
        break;
      }
    }
  }

  std::string_view peek_word() {
    skip_space();
    std::size_t p = cur_.pos;
    if (p >= cur_.text.size() || !ident_start(cur_.text[p])) return {};
    std::size_t e = p;
    while (e < cur_.text.size() && ident_char(cur_.text[e])) ++e;
    return cur_.text.substr(p, e - p);
  }

  std::string ident(std::string_view what) {
    auto word = peek_word();
    if (word.empty()) fail(cur_.pos, what);
    cur_.pos += word.size();
    return std::string(word);
  }

  bool accept(char c) {
    skip_space();
    if (cur_.pos < cur_.text.size() && cur_.text[cur_.pos] == c) {
      ++cur_.pos;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(cur_.pos, std::string("'") + c + "'");
  }

  double number() {
    skip_space();
    std::size_t start = cur_.pos;
    bool negative = accept('-');
    skip_space();
    std::size_t p = cur_.pos;
    auto& t = cur_.text;
    std::size_t e = p;
    while (e < t.size() && t[e] >= '0' && t[e] <= '9') ++e;
    if (e == p) fail(start, "number");
    if (e < t.size() && t[e] == '.') {
      ++e;
      std::size_t frac = e;
      while (e < t.size() && t[e] >= '0' && t[e] <= '9') ++e;
      if (e == frac) fail(e, "digits after decimal point");
    }
    double v = 0.0;
    std::from_chars(t.data() + p, t.data() + e, v);
    cur_.pos = e;
    return negative ? -v : v;
  }

  Declaration parse_decl() {
    auto kw = ident("declaration keyword");
    Declaration d;
    d.scope = kw == "output" ? Scope::Output : Scope::Input;
    d.local = kw == "local";
    d.key = ident("variable name");
    if (accept('=')) d.initial = number();
    expect(';');
    return d;
  }

  // Raw text up to the next ';', parsed as an expression.
  Expr expression() {
    skip_space();
    std::size_t start = cur_.pos;
    std::size_t end = cur_.text.find(';', start);
    if (end == std::string_view::npos) fail(cur_.text.size(), "';'");
    try {
      Expr e = parse_expr(cur_.text.substr(start, end - start));
      cur_.pos = end + 1;
      return e;
    } catch (const SyntaxError& err) {
      auto [line, col] = cur_.line_col(start + err.offset());
      throw SyntaxError(start + err.offset(), std::to_string(line) + ":" + std::to_string(col) + ": " + err.what());
    }
  }

  NodeDef parse_node() {
    skip_space();
    std::size_t at = cur_.pos;
    auto kw = ident("node keyword (seq, sel, skip, par, cond, act)");
    NodeDef node;
    auto [line, col] = cur_.line_col(at);
    node.line = line;
    node.column = col;
    if (kw == "seq") node.kind = NodeKind::Sequence;
    else if (kw == "sel") node.kind = NodeKind::Selector;
    else if (kw == "skip") node.kind = NodeKind::Skipper;
    else if (kw == "par") node.kind = NodeKind::Parallel;
    else if (kw == "cond") node.kind = NodeKind::Condition;
    else if (kw == "act") node.kind = NodeKind::Action;
    else fail(at, "node keyword (seq, sel, skip, par, cond, act)");

    if (is_control(node.kind)) {
      if (!peek_word().empty()) node.name = ident("node name");
      expect('{');
      std::set<std::string> names;
      while (!accept('}')) {
        NodeDef child = parse_node();
        if (!child.name.empty() && !names.insert(child.name).second) {
          throw Error(ErrorCode::DuplicateName, std::to_string(child.line) + ":" + std::to_string(child.column) +
                                                    ": duplicate sibling name '" + child.name + "'");
        }
        node.children.push_back(std::move(child));
      }
      return node;
    }

    node.name = ident("node name");
    expect('{');
    if (node.kind == NodeKind::Condition) {
      while (!accept('}')) {
        skip_space();
        std::size_t rat = cur_.pos;
        auto letter = ident("rule state (S, F or R)");
        ConditionRule rule;
        if (letter == "S") rule.result = NodeState::Success;
        else if (letter == "F") rule.result = NodeState::Failure;
        else if (letter == "R") rule.result = NodeState::Running;
        else fail(rat, "rule state (S, F or R)");
        expect(':');
        if (peek_word() == "default") {
          cur_.pos += 7;
          expect(';');
        } else {
          rule.guard = expression();
        }
        node.condition.rules.push_back(std::move(rule));
      }
    } else {
      while (!accept('}')) {
        Assignment a;
        a.target = ident("assignment target");
        skip_space();
        if (cur_.text.substr(cur_.pos, 2) != ":=") fail(cur_.pos, "':='");
        cur_.pos += 2;
        a.value = expression();
        node.action.assignments.push_back(std::move(a));
      }
    }
    return node;
  }

  Cursor cur_;
};

struct Validator {
  std::map<std::string, const Declaration*, std::less<>> declared;
  std::set<std::string> warned_undeclared;
  std::vector<Diagnostic> out;

  void add(Severity sev, DiagCode code, const NodeDef& n, std::string message) {
    out.push_back(Diagnostic{sev, code, n.name, std::move(message), n.line, n.column});
  }

  std::string label(const NodeDef& n) const {
    return std::string(keyword(n.kind)) + (n.name.empty() ? "" : " '" + n.name + "'");
  }

  void check_reads(const NodeDef& n, const std::set<std::string>& keys) {
    for (const auto& key : keys) {
      if (declared.contains(key) || key == kTimeKey) continue;
      if (warned_undeclared.insert(key).second) {
        add(Severity::Warning, DiagCode::UndeclaredVariable, n,
            "variable '" + key + "' is not declared; it will be an Input initialized to 0");
      }
    }
  }

  void visit(const NodeDef& n) {
    if (is_control(n.kind)) {
      if (n.children.empty()) add(Severity::Error, DiagCode::EmptyControlNode, n, label(n) + " has no children");
      for (const auto& c : n.children) visit(c);
      return;
    }
    if (!n.children.empty()) add(Severity::Error, DiagCode::LeafWithChildren, n, label(n) + " cannot have children");
    if (n.kind == NodeKind::Condition) {
      const auto& rules = n.condition.rules;
      if (rules.empty() || rules.back().guard.has_value()) {
        add(Severity::Error, DiagCode::MissingDefault, n, "condition '" + n.name + "' has no trailing default rule");
      } else if (auto why = n.condition.invalid_reason()) {
        add(Severity::Error, DiagCode::InvalidRules, n, "condition '" + n.name + "': " + *why);
      }
      for (const auto& r : rules) {
        if (r.guard && r.guard->contains_division()) {
          add(Severity::Warning, DiagCode::DivisionPresent, n,
              "condition '" + n.name + "' divides; a zero divisor aborts the callback");
          break;
        }
      }
      check_reads(n, n.condition.deps());
      return;
    }
    for (const auto& a : n.action.assignments) {
      if (is_state_key(a.target)) {
        add(Severity::Error, DiagCode::ReservedKeyWrite, n,
            "action '" + n.name + "' writes reserved key '" + a.target + "'");
        continue;
      }
      auto it = declared.find(a.target);
      if (it == declared.end() || (it->second->scope == Scope::Input && !it->second->local)) {
        add(Severity::Warning, DiagCode::AssignToInput, n,
            "action '" + n.name + "' assigns Input variable '" + a.target + "'");
      }
      if (a.value.contains_division()) {
        add(Severity::Warning, DiagCode::DivisionPresent, n,
            "action '" + n.name + "' divides; a zero divisor aborts the action mid-list");
      }
      check_reads(n, a.value.deps());
    }
  }
};

void print_node(const NodeDef& n, int depth, std::string& out) {
  std::string indent(static_cast<std::size_t>(depth) * 2, ' ');
  out += indent;
  out += keyword(n.kind);
  if (!n.name.empty()) out += " " + n.name;
  out += " {\n";
  std::string inner(static_cast<std::size_t>(depth + 1) * 2, ' ');
  if (is_control(n.kind)) {
    for (const auto& c : n.children) print_node(c, depth + 1, out);
  } else if (n.kind == NodeKind::Condition) {
    for (const auto& r : n.condition.rules) {
      out += inner + std::string(to_string(r.result)) + ": " + (r.guard ? r.guard->to_string() : "default") + ";\n";
    }
  } else {
    for (const auto& a : n.action.assignments) out += inner + a.target + " := " + a.value.to_string() + ";\n";
  }
  out += indent + "}\n";
}

}  // namespace

std::string_view to_string(DiagCode code) noexcept {
  switch (code) {
    case DiagCode::MissingDefault: return "MissingDefault";
    case DiagCode::InvalidRules: return "InvalidRules";
    case DiagCode::EmptyControlNode: return "EmptyControlNode";
    case DiagCode::LeafWithChildren: return "LeafWithChildren";
    case DiagCode::ReservedKeyWrite: return "ReservedKeyWrite";
    case DiagCode::AssignToInput: return "AssignToInput";
    case DiagCode::DivisionPresent: return "DivisionPresent";
    case DiagCode::UndeclaredVariable: return "UndeclaredVariable";
  }
  return "Unknown";
}

std::string Diagnostic::to_string() const {
  std::string out = std::to_string(line) + ":" + std::to_string(column) + ": ";
  out += severity == Severity::Error ? "error " : "warning ";
  out += abtm::to_string(code);
  out += ": " + message;
  return out;
}

TreeDefinition parse_tree(std::string_view text) { return TreeParser(text).parse(); }

std::vector<Diagnostic> validate(const TreeDefinition& def) {
  Validator v;
  for (const auto& d : def.declarations) v.declared.emplace(d.key, &d);
  v.visit(def.root);
  return std::move(v.out);
}

bool has_errors(const std::vector<Diagnostic>& diagnostics) {
  for (const auto& d : diagnostics) {
    if (d.severity == Severity::Error) return true;
  }
  return false;
}

std::string print_tree(const TreeDefinition& def) {
  std::string out;
  for (const auto& d : def.declarations) {
    std::string_view kw = d.scope == Scope::Output ? "output" : (d.local ? "local" : "input");
    out += std::string(kw) + " " + d.key;
    if (d.initial != 0.0 || std::signbit(d.initial)) {
      out += " = ";
      if (std::signbit(d.initial)) out += "-";
      out += format_number(std::fabs(d.initial));
    }
    out += ";\n";
  }
  print_node(def.root, 0, out);
  return out;
}

Tree build(const TreeDefinition& def) {
  auto diagnostics = validate(def);
  if (has_errors(diagnostics)) {
    std::string msg = "tree does not validate:";
    for (const auto& d : diagnostics) {
      if (d.severity == Severity::Error) msg += "\n  " + d.to_string();
    }
    throw Error(ErrorCode::ValidationFailed, msg);
  }
  return Tree(def);
}

Tree load_tree(std::string_view text) { return build(parse_tree(text)); }

}  // namespace abtm
