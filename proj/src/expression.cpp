#include "orchestra/expression.hpp"

#include <cctype>
#include <cstdlib>
#include <variant>
#include <vector>

#include "orchestra/errors.hpp"

namespace orchestra {

std::optional<Value> EvalEnv::global(std::string_view) const { return std::nullopt; }
std::optional<Value> EvalEnv::storage(std::string_view) const { return std::nullopt; }
std::optional<std::string> EvalEnv::caller(std::string_view) const { return std::nullopt; }

namespace {

enum class Tier { Local, Global, Storage };

enum class Op {
  Or, And, Not, Eq, Ne, Lt, Le, Gt, Ge, Add, Sub, Mul, Div, Mod, Neg, Coalesce,
};

}  // namespace

struct Expression::Node {
  struct Literal { Value value; };
  struct Var { Tier tier; std::string name; };
  struct Unary { Op op; std::shared_ptr<const Node> operand; };
  struct Binary { Op op; std::shared_ptr<const Node> lhs, rhs; };
  struct Call { std::string fn; std::vector<std::shared_ptr<const Node>> args; };

  std::variant<Literal, Var, Unary, Binary, Call> v;
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;

template <class T>
NodePtr make(T t) {
  return std::make_shared<const Expression::Node>(Expression::Node{std::move(t)});
}

// ---------------------------------------------------------------- lexer

enum class Tok { End, Int, Double, String, Ident, Sym };

struct Token {
  Tok kind;
  std::string text;
  std::size_t pos;
};

std::vector<Token> lex(std::string_view src) {
  std::vector<Token> out;
  std::size_t i = 0;
  auto fail = [&](const std::string& msg) {
    throw ParseError("expression '" + std::string(src) + "' at " + std::to_string(i) + ": " + msg);
  };
  while (i < src.size()) {
    char c = src[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    std::size_t start = i;
    if (std::isdigit(static_cast<unsigned char>(c))) {
      while (i < src.size() && std::isdigit(static_cast<unsigned char>(src[i]))) ++i;
      bool is_double = false;
      if (i + 1 < src.size() && src[i] == '.' && std::isdigit(static_cast<unsigned char>(src[i + 1]))) {
        is_double = true;
        ++i;
        while (i < src.size() && std::isdigit(static_cast<unsigned char>(src[i]))) ++i;
      }
      if (i < src.size() && (src[i] == 'e' || src[i] == 'E')) {
        std::size_t j = i + 1;
        if (j < src.size() && (src[j] == '+' || src[j] == '-')) ++j;
        if (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) {
          is_double = true;
          i = j;
          while (i < src.size() && std::isdigit(static_cast<unsigned char>(src[i]))) ++i;
        }
      }
      out.push_back({is_double ? Tok::Double : Tok::Int, std::string(src.substr(start, i - start)), start});
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (i < src.size() && (std::isalnum(static_cast<unsigned char>(src[i])) || src[i] == '_')) ++i;
      out.push_back({Tok::Ident, std::string(src.substr(start, i - start)), start});
      continue;
    }
    if (c == '\'' || c == '"') {
      char quote = c;
      std::string text;
      ++i;
      for (;;) {
        if (i >= src.size()) fail("unterminated string literal");
        char d = src[i++];
        if (d == quote) break;
        if (d == '\\') {
          if (i >= src.size()) fail("dangling escape");
          char e = src[i++];
          switch (e) {
            case 'n': text += '\n'; break;
            case 't': text += '\t'; break;
            case '\\': case '\'': case '"': text += e; break;
            default: fail(std::string("unknown escape \\") + e);
          }
        } else {
          text += d;
        }
      }
      out.push_back({Tok::String, std::move(text), start});
      continue;
    }
    static constexpr std::string_view two[] = {"==", "!=", "<=", ">=", "&&", "||", "??"};
    bool matched = false;
    for (auto sym : two) {
      if (src.substr(i, 2) == sym) {
        out.push_back({Tok::Sym, std::string(sym), start});
        i += 2;
        matched = true;
        break;
      }
    }
    if (matched) continue;
    if (std::string_view("+-*/%<>()!,.").find(c) != std::string_view::npos) {
      out.push_back({Tok::Sym, std::string(1, c), start});
      ++i;
      continue;
    }
    fail(std::string("unexpected character '") + c + "'");
  }
  out.push_back({Tok::End, "", src.size()});
  return out;
}

// ---------------------------------------------------------------- parser

class Parser {
 public:
  Parser(std::string_view src) : src_(src), toks_(lex(src)) {}

  NodePtr parse() {
    NodePtr e = parse_or();
    if (peek().kind != Tok::End) fail("unexpected '" + peek().text + "'");
    return e;
  }

 private:
  const Token& peek() const { return toks_[pos_]; }
  const Token& next() { return toks_[pos_++]; }

  bool accept_sym(std::string_view s) {
    if (peek().kind == Tok::Sym && peek().text == s) {
      ++pos_;
      return true;
    }
    return false;
  }
  bool accept_word(std::string_view w) {
    if (peek().kind == Tok::Ident && peek().text == w) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect_sym(std::string_view s) {
    if (!accept_sym(s)) fail("expected '" + std::string(s) + "'");
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("expression '" + std::string(src_) + "' at " + std::to_string(peek().pos) + ": " + msg);
  }

  NodePtr parse_or() {
    NodePtr lhs = parse_and();
    while (accept_sym("||") || accept_word("or")) lhs = make(Expression::Node::Binary{Op::Or, lhs, parse_and()});
    return lhs;
  }

  NodePtr parse_and() {
    NodePtr lhs = parse_not();
    while (accept_sym("&&") || accept_word("and")) lhs = make(Expression::Node::Binary{Op::And, lhs, parse_not()});
    return lhs;
  }

  NodePtr parse_not() {
    if (accept_sym("!") || accept_word("not")) return make(Expression::Node::Unary{Op::Not, parse_not()});
    return parse_cmp();
  }

  NodePtr parse_cmp() {
    NodePtr lhs = parse_add();
    static constexpr std::pair<std::string_view, Op> ops[] = {
        {"==", Op::Eq}, {"!=", Op::Ne}, {"<=", Op::Le}, {">=", Op::Ge}, {"<", Op::Lt}, {">", Op::Gt}};
    for (auto [sym, op] : ops) {
      if (accept_sym(sym)) {
        NodePtr rhs = parse_add();
        for (auto [sym2, op2] : ops)
          if (peek().kind == Tok::Sym && peek().text == sym2) fail("comparisons do not chain");
        return make(Expression::Node::Binary{op, lhs, rhs});
      }
    }
    return lhs;
  }

  NodePtr parse_add() {
    NodePtr lhs = parse_mul();
    for (;;) {
      if (accept_sym("+")) lhs = make(Expression::Node::Binary{Op::Add, lhs, parse_mul()});
      else if (accept_sym("-")) lhs = make(Expression::Node::Binary{Op::Sub, lhs, parse_mul()});
      else return lhs;
    }
  }

  NodePtr parse_mul() {
    NodePtr lhs = parse_unary();
    for (;;) {
      if (accept_sym("*")) lhs = make(Expression::Node::Binary{Op::Mul, lhs, parse_unary()});
      else if (accept_sym("/")) lhs = make(Expression::Node::Binary{Op::Div, lhs, parse_unary()});
      else if (accept_sym("%")) lhs = make(Expression::Node::Binary{Op::Mod, lhs, parse_unary()});
      else return lhs;
    }
  }

  NodePtr parse_unary() {
    if (accept_sym("-")) return make(Expression::Node::Unary{Op::Neg, parse_unary()});
    return parse_coalesce();
  }

  NodePtr parse_coalesce() {
    NodePtr lhs = parse_primary();
    while (accept_sym("??")) lhs = make(Expression::Node::Binary{Op::Coalesce, lhs, parse_primary()});
    return lhs;
  }

  NodePtr parse_primary() {
    const Token& t = next();
    switch (t.kind) {
      case Tok::Int: {
        errno = 0;
        char* end = nullptr;
        long long v = std::strtoll(t.text.c_str(), &end, 10);
        if (errno == ERANGE) fail("integer literal out of range");
        return make(Expression::Node::Literal{Value(static_cast<std::int64_t>(v))});
      }
      case Tok::Double: return make(Expression::Node::Literal{Value(std::strtod(t.text.c_str(), nullptr))});
      case Tok::String: return make(Expression::Node::Literal{Value(t.text)});
      case Tok::Ident: return parse_name(t);
      case Tok::Sym:
        if (t.text == "(") {
          NodePtr e = parse_or();
          expect_sym(")");
          return e;
        }
        --pos_;
        fail("unexpected '" + t.text + "'");
      case Tok::End: --pos_; fail("unexpected end of expression");
    }
    fail("unreachable");
  }

  NodePtr parse_name(const Token& t) {
    if (t.text == "true") return make(Expression::Node::Literal{Value(true)});
    if (t.text == "false") return make(Expression::Node::Literal{Value(false)});
    static constexpr std::string_view reserved[] = {"and", "or", "not"};
    for (auto r : reserved)
      if (t.text == r) {
        --pos_;
        fail("unexpected keyword '" + t.text + "'");
      }
    if (t.text == "global" || t.text == "storage") {
      if (accept_sym(".")) {
        const Token& n = next();
        if (n.kind != Tok::Ident) fail("expected a name after '" + t.text + ".'");
        return make(Expression::Node::Var{t.text == "global" ? Tier::Global : Tier::Storage, n.text});
      }
    }
    if (accept_sym("(")) {
      Expression::Node::Call call{t.text, {}};
      if (!accept_sym(")")) {
        do call.args.push_back(parse_or());
        while (accept_sym(","));
        expect_sym(")");
      }
      check_call(call);
      return make(std::move(call));
    }
    return make(Expression::Node::Var{Tier::Local, t.text});
  }

  void check_call(const Expression::Node::Call& c) {
    if (c.fn == "str") {
      if (c.args.size() != 1) fail("str() takes one argument");
    } else if (c.fn == "defined") {
      if (c.args.size() != 1 || !std::holds_alternative<Expression::Node::Var>(c.args[0]->v))
        fail("defined() takes one variable name");
    } else if (c.fn == "caller") {
      auto* lit = c.args.size() == 1 ? std::get_if<Expression::Node::Literal>(&c.args[0]->v) : nullptr;
      if (!lit || !std::holds_alternative<std::string>(lit->value)) fail("caller() takes one operation name literal");
    } else {
      fail("unknown function '" + c.fn + "'");
    }
  }

  std::string_view src_;
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------- evaluation

[[noreturn]] void type_fault(const char* what, const Value& a, const Value& b) {
  throw Fault(faults::kTypeFault, std::string(what) + " on " + variant_name(a) + " and " + variant_name(b));
}

bool as_bool(const Value& v, const char* what) {
  if (auto* b = std::get_if<bool>(&v)) return *b;
  throw Fault(faults::kTypeFault, std::string(what) + " needs a bool, got " + variant_name(v));
}

Value arith(Op op, const Value& a, const Value& b) {
  if (a.index() != b.index()) type_fault("arithmetic", a, b);
  if (auto* x = std::get_if<std::int64_t>(&a)) {
    std::int64_t y = std::get<std::int64_t>(b);
    std::int64_t r = 0;
    switch (op) {
      case Op::Add:
        if (__builtin_add_overflow(*x, y, &r)) throw Fault(faults::kArithmeticFault, "integer overflow");
        return r;
      case Op::Sub:
        if (__builtin_sub_overflow(*x, y, &r)) throw Fault(faults::kArithmeticFault, "integer overflow");
        return r;
      case Op::Mul:
        if (__builtin_mul_overflow(*x, y, &r)) throw Fault(faults::kArithmeticFault, "integer overflow");
        return r;
      case Op::Div:
      case Op::Mod:
        if (y == 0) throw Fault(faults::kDivisionByZero);
        if (*x == INT64_MIN && y == -1) throw Fault(faults::kArithmeticFault, "integer overflow");
        return op == Op::Div ? *x / y : *x % y;
      default: break;
    }
  } else if (auto* x = std::get_if<double>(&a)) {
    double y = std::get<double>(b);
    switch (op) {
      case Op::Add: return *x + y;
      case Op::Sub: return *x - y;
      case Op::Mul: return *x * y;
      case Op::Div:
        if (y == 0.0) throw Fault(faults::kDivisionByZero);
        return *x / y;
      default: break;
    }
  } else if (auto* x = std::get_if<std::string>(&a); x && op == Op::Add) {
    return *x + std::get<std::string>(b);
  }
  type_fault("arithmetic", a, b);
}

bool order(Op op, const Value& a, const Value& b) {
  if (a.index() != b.index() || std::holds_alternative<bool>(a)) type_fault("ordering", a, b);
  bool lt = a < b, gt = b < a;
  switch (op) {
    case Op::Lt: return lt;
    case Op::Le: return !gt;
    case Op::Gt: return gt;
    default: return !lt;
  }
}

Value lookup_var(const Expression::Node::Var& var, const EvalEnv& env) {
  std::optional<Value> v;
  switch (var.tier) {
    case Tier::Local: v = env.local(var.name); break;
    case Tier::Global: v = env.global(var.name); break;
    case Tier::Storage: v = env.storage(var.name); break;
  }
  if (!v) {
    const char* prefix = var.tier == Tier::Global ? "global." : var.tier == Tier::Storage ? "storage." : "";
    throw Fault(faults::kUndefinedVariable, prefix + var.name);
  }
  return *std::move(v);
}

Value eval_node(const Expression::Node& n, const EvalEnv& env);

Value eval_call(const Expression::Node::Call& c, const EvalEnv& env) {
  if (c.fn == "str") return to_display(eval_node(*c.args[0], env));
  if (c.fn == "defined") {
    const auto& var = std::get<Expression::Node::Var>(c.args[0]->v);
    switch (var.tier) {
      case Tier::Local: return env.local(var.name).has_value();
      case Tier::Global: return env.global(var.name).has_value();
      case Tier::Storage: return env.storage(var.name).has_value();
    }
  }
  // caller('op')
  const auto& op = std::get<std::string>(std::get<Expression::Node::Literal>(c.args[0]->v).value);
  if (auto ch = env.caller(op)) return *ch;
  throw Fault(faults::kUndefinedVariable, "caller('" + op + "')");
}

Value eval_node(const Expression::Node& n, const EvalEnv& env) {
  using N = Expression::Node;
  if (auto* lit = std::get_if<N::Literal>(&n.v)) return lit->value;
  if (auto* var = std::get_if<N::Var>(&n.v)) return lookup_var(*var, env);
  if (auto* call = std::get_if<N::Call>(&n.v)) return eval_call(*call, env);
  if (auto* un = std::get_if<N::Unary>(&n.v)) {
    Value v = eval_node(*un->operand, env);
    if (un->op == Op::Not) return !as_bool(v, "not");
    if (auto* i = std::get_if<std::int64_t>(&v)) {
      if (*i == INT64_MIN) throw Fault(faults::kArithmeticFault, "integer overflow");
      return -*i;
    }
    if (auto* d = std::get_if<double>(&v)) return -*d;
    throw Fault(faults::kTypeFault, std::string("negation of ") + variant_name(v));
  }
  const auto& bin = std::get<N::Binary>(n.v);
  if (bin.op == Op::Coalesce) {
    try {
      return eval_node(*bin.lhs, env);
    } catch (const Fault& f) {
      if (f.name() != faults::kUndefinedVariable) throw;
      return eval_node(*bin.rhs, env);
    }
  }
  if (bin.op == Op::Or || bin.op == Op::And) {
    const char* what = bin.op == Op::Or ? "or" : "and";
    bool lhs = as_bool(eval_node(*bin.lhs, env), what);
    if (lhs == (bin.op == Op::Or)) return lhs;
    return as_bool(eval_node(*bin.rhs, env), what);
  }
  Value a = eval_node(*bin.lhs, env);
  Value b = eval_node(*bin.rhs, env);
  switch (bin.op) {
    case Op::Eq: return a == b;
    case Op::Ne: return a != b;
    case Op::Lt: case Op::Le: case Op::Gt: case Op::Ge: return order(bin.op, a, b);
    default: return arith(bin.op, a, b);
  }
}

}  // namespace

Expression Expression::parse(std::string_view text) { return Expression(Parser(text).parse(), std::string(text)); }

Expression Expression::literal(Value v) {
  std::string src = std::holds_alternative<std::string>(v) ? "'" + std::get<std::string>(v) + "'" : to_display(v);
  return Expression(make(Node::Literal{std::move(v)}), std::move(src));
}

Value Expression::eval(const EvalEnv& env) const { return eval_node(*root_, env); }

}  // namespace orchestra
