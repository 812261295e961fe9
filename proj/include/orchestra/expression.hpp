#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "orchestra/state.hpp"

namespace orchestra {

/// Where an expression reads names from. `local` is the session state;
/// `global.x` and `storage.x` go through the engine tiers.
class EvalEnv {
 public:
  virtual ~EvalEnv() = default;
  virtual std::optional<Value> local(std::string_view name) const = 0;
  virtual std::optional<Value> global(std::string_view name) const;
  virtual std::optional<Value> storage(std::string_view name) const;
  /// Channel id of the request awaiting a reply on `op`, if any.
  virtual std::optional<std::string> caller(std::string_view op) const;
};

/// EvalEnv over a bare State; the global and storage tiers are empty.
class StateEnv : public EvalEnv {
 public:
  explicit StateEnv(const State& s) : state_(s) {}
  std::optional<Value> local(std::string_view name) const override { return state_.lookup(name); }

 private:
  const State& state_;
};

/// Infix expression over flat values.
///
/// Precedence, loosest first:
///
///   or ||            left
///   and &&           left
///   not !            prefix
///   == != < <= > >=  non-associative
///   + -              left   (+ also concatenates two strings)
///   * / %            left   (integer / and % truncate toward zero)
///   -                prefix negation
///   ??               left   (a ?? b is b when a reads an undefined name)
///   primary          literal, name, global.name, storage.name, (e), f(args)
///
/// Literals: 42, 4.2, 'text' or "text" (backslash escapes), true, false.
/// Builtins: str(e), defined(name), caller('op').
///
/// `and`/`or` short-circuit; everything else evaluates all operands.
/// Evaluation either returns a Value or throws a Fault (UndefinedVariable, DivisionByZero, TypeFault, ArithmeticFault).
class Expression {
 public:
  struct Node;

  /// Throws ParseError.
  static Expression parse(std::string_view text);
  static Expression literal(Value v);

  Value eval(const EvalEnv& env) const;
  Value eval(const State& s) const { return eval(StateEnv(s)); }

  const std::string& source() const noexcept { return source_; }

 private:
  Expression(std::shared_ptr<const Node> root, std::string source)
      : root_(std::move(root)), source_(std::move(source)) {}

  std::shared_ptr<const Node> root_;
  std::string source_;
};

}  // namespace orchestra
