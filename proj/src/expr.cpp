#include "abtm/expr.hpp"

#include <charconv>
#include <cmath>

#include "abtm/error.hpp"

namespace abtm {

namespace {

enum class Tok : std::uint8_t {
  End,
  Number,
  Ident,
  And,
  Or,
  Not,
  Plus,
  Minus,
  Star,
  Slash,
  LParen,
  RParen,
  Eq,
  Ne,
  Lt,
  Gt,
  Le,
  Ge,
};

struct Token {
  Tok kind = Tok::End;
  std::size_t offset = 0;
  std::string_view text;
  double number = 0.0;
};

bool is_ident_start(char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_'; }
bool is_ident_char(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

[[noreturn]] void syntax_error(std::size_t offset, std::string_view expected, std::string_view found) {
  std::string msg = "syntax error at offset " + std::to_string(offset) + ": expected " + std::string(expected);
  msg += found.empty() ? ", found end of input" : ", found '" + std::string(found) + "'";
  throw SyntaxError(offset, msg);
}

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {}

  Token next() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n' || text_[pos_] == '\r')) {
      ++pos_;
    }
    Token tok;
    tok.offset = pos_;
    if (pos_ >= text_.size()) return tok;
    char c = text_[pos_];
    std::size_t start = pos_;
    if (is_digit(c)) {
      while (pos_ < text_.size() && is_digit(text_[pos_])) ++pos_;
      if (pos_ < text_.size() && text_[pos_] == '.') {
        ++pos_;
        if (pos_ >= text_.size() || !is_digit(text_[pos_])) {
          syntax_error(pos_, "digits after decimal point", text_.substr(pos_, 1));
        }
        while (pos_ < text_.size() && is_digit(text_[pos_])) ++pos_;
      }
      tok.kind = Tok::Number;
      tok.text = text_.substr(start, pos_ - start);
      std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(), tok.number);
      return tok;
    }
    if (is_ident_start(c)) {
      while (pos_ < text_.size() && is_ident_char(text_[pos_])) ++pos_;
      tok.text = text_.substr(start, pos_ - start);
      if (tok.text == "and") tok.kind = Tok::And;
      else if (tok.text == "or") tok.kind = Tok::Or;
      else if (tok.text == "not") tok.kind = Tok::Not;
      else tok.kind = Tok::Ident;
      return tok;
    }
    auto two = text_.substr(pos_, 2);
    auto take = [&](Tok kind, std::size_t len) {
      tok.kind = kind;
      tok.text = text_.substr(pos_, len);
      pos_ += len;
      return tok;
    };
    if (two == "==") return take(Tok::Eq, 2);
    if (two == "!=") return take(Tok::Ne, 2);
    if (two == "<=") return take(Tok::Le, 2);
    if (two == ">=") return take(Tok::Ge, 2);
    switch (c) {
      case '=': return take(Tok::Eq, 1);
      case '<': return take(Tok::Lt, 1);
      case '>': return take(Tok::Gt, 1);
      case '+': return take(Tok::Plus, 1);
      case '-': return take(Tok::Minus, 1);
      case '*': return take(Tok::Star, 1);
      case '/': return take(Tok::Slash, 1);
      case '(': return take(Tok::LParen, 1);
      case ')': return take(Tok::RParen, 1);
      default: break;
    }
    syntax_error(pos_, "expression", text_.substr(pos_, two == ":=" ? 2 : 1));
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

class Parser {
 public:
  explicit Parser(std::string_view text) : lexer_(text) { advance(); }

  Expr parse() {
    parse_or();
    if (cur_.kind != Tok::End) syntax_error(cur_.offset, "operator or end of input", cur_.text);
    return Expr(std::move(terms_));
  }

 private:
  void advance() { cur_ = lexer_.next(); }

  std::int32_t push(Expr::Term term) {
    terms_.push_back(std::move(term));
    return static_cast<std::int32_t>(terms_.size() - 1);
  }

  std::int32_t binary(ExprOp op, std::int32_t lhs, std::int32_t rhs) {
    Expr::Term t;
    t.op = op;
    t.lhs = lhs;
    t.rhs = rhs;
    return push(std::move(t));
  }

  std::int32_t parse_or() {
    auto lhs = parse_and();
    while (cur_.kind == Tok::Or) {
      advance();
      lhs = binary(ExprOp::Or, lhs, parse_and());
    }
    return lhs;
  }

  std::int32_t parse_and() {
    auto lhs = parse_not();
    while (cur_.kind == Tok::And) {
      advance();
      lhs = binary(ExprOp::And, lhs, parse_not());
    }
    return lhs;
  }

  std::int32_t parse_not() {
    if (cur_.kind == Tok::Not) {
      advance();
      return binary(ExprOp::Not, parse_cmp(), -1);
    }
    return parse_cmp();
  }

  std::int32_t parse_cmp() {
    auto lhs = parse_sum();
    ExprOp op;
    switch (cur_.kind) {
      case Tok::Eq: op = ExprOp::Eq; break;
      case Tok::Ne: op = ExprOp::Ne; break;
      case Tok::Lt: op = ExprOp::Lt; break;
      case Tok::Gt: op = ExprOp::Gt; break;
      case Tok::Le: op = ExprOp::Le; break;
      case Tok::Ge: op = ExprOp::Ge; break;
      default: return lhs;
    }
    advance();
    return binary(op, lhs, parse_sum());
  }

  std::int32_t parse_sum() {
    auto lhs = parse_term();
    while (cur_.kind == Tok::Plus || cur_.kind == Tok::Minus) {
      ExprOp op = cur_.kind == Tok::Plus ? ExprOp::Add : ExprOp::Sub;
      advance();
      lhs = binary(op, lhs, parse_term());
    }
    return lhs;
  }

  std::int32_t parse_term() {
    auto lhs = parse_factor();
    while (cur_.kind == Tok::Star || cur_.kind == Tok::Slash) {
      ExprOp op = cur_.kind == Tok::Star ? ExprOp::Mul : ExprOp::Div;
      advance();
      lhs = binary(op, lhs, parse_factor());
    }
    return lhs;
  }

  std::int32_t parse_factor() {
    Expr::Term t;
    switch (cur_.kind) {
      case Tok::Number:
        t.op = ExprOp::Number;
        t.number = cur_.number;
        advance();
        return push(std::move(t));
      case Tok::Ident:
        t.op = ExprOp::Var;
        t.key = std::string(cur_.text);
        advance();
        return push(std::move(t));
      case Tok::Minus:
        advance();
        return binary(ExprOp::Neg, parse_factor(), -1);
      case Tok::LParen: {
        advance();
        auto inner = parse_or();
        if (cur_.kind != Tok::RParen) syntax_error(cur_.offset, "')'", cur_.text);
        advance();
        return inner;
      }
      default:
        syntax_error(cur_.offset, "number, identifier, '-' or '('", cur_.text);
    }
  }

  Lexer lexer_;
  Token cur_;
  std::vector<Expr::Term> terms_;
};

bool truthy(double v) { return v != 0.0; }
double boolean(bool b) { return b ? 1.0 : 0.0; }

int precedence(ExprOp op) {
  switch (op) {
    case ExprOp::Or: return 1;
    case ExprOp::And: return 2;
    case ExprOp::Not: return 3;
    case ExprOp::Eq:
    case ExprOp::Ne:
    case ExprOp::Lt:
    case ExprOp::Gt:
    case ExprOp::Le:
    case ExprOp::Ge: return 4;
    case ExprOp::Add:
    case ExprOp::Sub: return 5;
    case ExprOp::Mul:
    case ExprOp::Div: return 6;
    case ExprOp::Neg: return 7;
    case ExprOp::Number:
    case ExprOp::Var: return 8;
  }
  return 0;
}

std::string_view symbol(ExprOp op) {
  switch (op) {
    case ExprOp::Add: return " + ";
    case ExprOp::Sub: return " - ";
    case ExprOp::Mul: return " * ";
    case ExprOp::Div: return " / ";
    case ExprOp::Eq: return " == ";
    case ExprOp::Ne: return " != ";
    case ExprOp::Lt: return " < ";
    case ExprOp::Gt: return " > ";
    case ExprOp::Le: return " <= ";
    case ExprOp::Ge: return " >= ";
    case ExprOp::And: return " and ";
    case ExprOp::Or: return " or ";
    default: return "";
  }
}

}  // namespace

Expr parse_expr(std::string_view text) { return Parser(text).parse(); }

std::string format_number(double v) {
  char buf[400];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed);
  if (ec != std::errc()) return "0";
  return std::string(buf, ptr);
}

double Expr::eval(const Memory& memory) const {
  if (terms_.empty()) return 0.0;
  return eval_at(static_cast<std::int32_t>(terms_.size() - 1), memory);
}

double Expr::eval_at(std::int32_t index, const Memory& memory) const {
  const Term& t = terms_[static_cast<std::size_t>(index)];
  switch (t.op) {
    case ExprOp::Number: return t.number;
    case ExprOp::Var: return t.slot != kUnbound ? memory.value(t.slot) : memory.peek(t.key);
    case ExprOp::Neg: return -eval_at(t.lhs, memory);
    case ExprOp::Not: return boolean(!truthy(eval_at(t.lhs, memory)));
    case ExprOp::And: return boolean(truthy(eval_at(t.lhs, memory)) && truthy(eval_at(t.rhs, memory)));
    case ExprOp::Or: return boolean(truthy(eval_at(t.lhs, memory)) || truthy(eval_at(t.rhs, memory)));
    default: break;
  }
  double a = eval_at(t.lhs, memory);
  double b = eval_at(t.rhs, memory);
  switch (t.op) {
    case ExprOp::Add: return a + b;
    case ExprOp::Sub: return a - b;
    case ExprOp::Mul: return a * b;
    case ExprOp::Div:
      if (b == 0.0) throw Error(ErrorCode::DivideByZero, "division by zero in '" + to_string() + "'");
      return a / b;
    case ExprOp::Eq: return boolean(a == b);
    case ExprOp::Ne: return boolean(a != b);
    case ExprOp::Lt: return boolean(a < b);
    case ExprOp::Gt: return boolean(a > b);
    case ExprOp::Le: return boolean(a <= b);
    case ExprOp::Ge: return boolean(a >= b);
    default: return 0.0;
  }
}

Expr Expr::bind(Memory& memory) const {
  Expr out = *this;
  for (Term& t : out.terms_) {
    if (t.op == ExprOp::Var) t.slot = memory.slot(t.key);
  }
  return out;
}

std::set<std::string> Expr::deps() const {
  std::set<std::string> keys;
  for (const Term& t : terms_) {
    if (t.op == ExprOp::Var) keys.insert(t.key);
  }
  return keys;
}

bool Expr::contains_division() const {
  for (const Term& t : terms_) {
    if (t.op == ExprOp::Div) return true;
  }
  return false;
}

void Expr::print_at(std::int32_t index, std::string& out) const {
  const Term& t = terms_[static_cast<std::size_t>(index)];
  auto child = [&](std::int32_t c, bool wrap) {
    if (wrap) out.push_back('(');
    print_at(c, out);
    if (wrap) out.push_back(')');
  };
  auto compound = [&](std::int32_t c) {
    ExprOp op = terms_[static_cast<std::size_t>(c)].op;
    return op != ExprOp::Number && op != ExprOp::Var;
  };
  switch (t.op) {
    case ExprOp::Number:
      if (std::signbit(t.number)) {
        out += "(-" + format_number(-t.number) + ")";
      } else {
        out += format_number(t.number);
      }
      return;
    case ExprOp::Var: out += t.key; return;
    case ExprOp::Neg:
      out.push_back('-');
      child(t.lhs, compound(t.lhs));
      return;
    case ExprOp::Not:
      out += "not ";
      child(t.lhs, precedence(terms_[static_cast<std::size_t>(t.lhs)].op) <= precedence(ExprOp::Not));
      return;
    default: break;
  }
  // Left-associative chains print without parentheses on the left; the
  // right operand is wrapped whenever it is itself an operator.
  int prec = precedence(t.op);
  int lprec = precedence(terms_[static_cast<std::size_t>(t.lhs)].op);
  bool non_assoc = prec == precedence(ExprOp::Eq);
  child(t.lhs, lprec < prec || (non_assoc && lprec == prec));
  out += symbol(t.op);
  child(t.rhs, compound(t.rhs) && precedence(terms_[static_cast<std::size_t>(t.rhs)].op) <= prec);
}

std::string Expr::to_string() const {
  std::string out;
  if (!terms_.empty()) print_at(static_cast<std::int32_t>(terms_.size() - 1), out);
  return out;
}

bool operator==(const Expr& a, const Expr& b) {
  if (a.terms_.size() != b.terms_.size()) return false;
  for (std::size_t i = 0; i < a.terms_.size(); ++i) {
    const auto& x = a.terms_[i];
    const auto& y = b.terms_[i];
    if (x.op != y.op || x.key != y.key || x.lhs != y.lhs || x.rhs != y.rhs) return false;
    if (x.op == ExprOp::Number && std::bit_cast<std::uint64_t>(x.number) != std::bit_cast<std::uint64_t>(y.number)) {
      return false;
    }
  }
  return true;
}

std::optional<std::string> ConditionSpec::invalid_reason() const {
  if (rules.empty() || rules.back().guard.has_value()) return "missing trailing default rule";
  bool seen[3] = {false, false, false};
  for (std::size_t i = 0; i < rules.size(); ++i) {
    if (!rules[i].guard && i + 1 != rules.size()) return "default rule must be last";
    auto s = static_cast<int>(rules[i].result);
    if (seen[s]) return "more than one rule for state " + std::string(to_string(rules[i].result));
    seen[s] = true;
  }
  return std::nullopt;
}

std::set<std::string> ConditionSpec::deps() const {
  std::set<std::string> keys;
  for (const auto& rule : rules) {
    if (rule.guard) keys.merge(rule.guard->deps());
  }
  return keys;
}

ConditionSpec ConditionSpec::bind(Memory& memory) const {
  ConditionSpec out;
  out.rules.reserve(rules.size());
  for (const auto& rule : rules) {
    ConditionRule r{std::nullopt, rule.result};
    if (rule.guard) r.guard = rule.guard->bind(memory);
    out.rules.push_back(std::move(r));
  }
  return out;
}

ActionSpec ActionSpec::bind(Memory& memory) const {
  ActionSpec out;
  out.assignments.reserve(assignments.size());
  for (const auto& a : assignments) {
    out.assignments.push_back(Assignment{a.target, a.value.bind(memory), memory.slot(a.target)});
  }
  return out;
}

NodeState eval_condition(const ConditionSpec& condition, const Memory& memory) {
  for (const auto& rule : condition.rules) {
    if (!rule.guard || truthy(rule.guard->eval(memory))) return rule.result;
  }
  // Only reachable when the spec lacks its default rule.
  return NodeState::Running;
}

std::set<std::string> run_action(const ActionSpec& action, Memory& memory) {
  std::set<std::string> changed;
  for (const auto& a : action.assignments) {
    double v = a.value.eval(memory);
    SlotId slot = a.slot != Expr::kUnbound ? a.slot : memory.slot(a.target);
    if (memory.assign(slot, v)) changed.insert(a.target);
  }
  return changed;
}

}  // namespace abtm
