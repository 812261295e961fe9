#pragma once

#include <cstdint>
#include <initializer_list>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

namespace orchestra {

/// Flat scalar value. Equality is exact per variant: 1 != 1.0.
using Value = std::variant<std::string, std::int64_t, double, bool>;

/// True when `name` matches [A-Za-z_][A-Za-z0-9_]*.
bool is_var_name(std::string_view name) noexcept;

/// Human-readable rendering; strings are returned unquoted.
std::string to_display(const Value& v);

const char* variant_name(const Value& v) noexcept;

/// Finite partial map from variable names to values.
///
/// Lookup outside the domain yields std::nullopt, which plays the role of
/// `undefined`; it is never stored as a value.
class State {
 public:
  using Map = std::map<std::string, Value, std::less<>>;
  using const_iterator = Map::const_iterator;

  State() = default;
  State(std::initializer_list<Map::value_type> init) : bindings_(init) {}
  explicit State(Map bindings) : bindings_(std::move(bindings)) {}

  std::optional<Value> lookup(std::string_view name) const;
  const Value* find(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name) != nullptr; }

  /// Returns a copy with `name` bound to `v`.
  [[nodiscard]] State update(std::string name, Value v) const&;
  [[nodiscard]] State update(std::string name, Value v) &&;

  /// In-place variants used by the interpreter and the correlation binder.
  void set(std::string name, Value v);
  void erase(std::string_view name);

  std::size_t size() const noexcept { return bindings_.size(); }
  bool empty() const noexcept { return bindings_.empty(); }
  const_iterator begin() const noexcept { return bindings_.begin(); }
  const_iterator end() const noexcept { return bindings_.end(); }
  const Map& bindings() const noexcept { return bindings_; }

  friend bool operator==(const State&, const State&) = default;

 private:
  Map bindings_;
};

/// Left-biased composition: left(x) where defined, else right(x).
State compose(const State& left, const State& right);

/// Domains set-equal and every variable bound to an equal value.
bool equals(const State& left, const State& right);

/// Restriction of `s` to the names in `names`.
template <class Names>
State project(const State& s, const Names& names) {
  State out;
  for (const auto& n : names)
    if (const Value* v = s.find(n)) out.set(std::string(n), *v);
  return out;
}

}  // namespace orchestra
