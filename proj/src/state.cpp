#include "orchestra/state.hpp"

#include <sstream>

namespace orchestra {

bool is_var_name(std::string_view name) noexcept {
  if (name.empty()) return false;
  auto alpha = [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; };
  if (!alpha(name.front())) return false;
  for (char c : name)
    if (!alpha(c) && !(c >= '0' && c <= '9')) return false;
  return true;
}

std::string to_display(const Value& v) {
  struct Visitor {
    std::string operator()(const std::string& s) const { return s; }
    std::string operator()(std::int64_t i) const { return std::to_string(i); }
    std::string operator()(double d) const {
      std::ostringstream os;
      os.precision(17);
      os << d;
      std::string out = os.str();
      if (out.find_first_of(".eEn") == std::string::npos) out += ".0";
      return out;
    }
    std::string operator()(bool b) const { return b ? "true" : "false"; }
  };
  return std::visit(Visitor{}, v);
}

const char* variant_name(const Value& v) noexcept {
  switch (v.index()) {
    case 0: return "string";
    case 1: return "int";
    case 2: return "double";
    default: return "bool";
  }
}

std::optional<Value> State::lookup(std::string_view name) const {
  if (const Value* v = find(name)) return *v;
  return std::nullopt;
}

const Value* State::find(std::string_view name) const {
  auto it = bindings_.find(name);
  return it == bindings_.end() ? nullptr : &it->second;
}

State State::update(std::string name, Value v) const& {
  State out = *this;
  out.set(std::move(name), std::move(v));
  return out;
}

State State::update(std::string name, Value v) && {
  set(std::move(name), std::move(v));
  return std::move(*this);
}

void State::set(std::string name, Value v) { bindings_.insert_or_assign(std::move(name), std::move(v)); }

void State::erase(std::string_view name) {
  auto it = bindings_.find(name);
  if (it != bindings_.end()) bindings_.erase(it);
}

State compose(const State& left, const State& right) {
  State::Map out = left.bindings();
  // insert() keeps existing keys, which is exactly the left bias.
  out.insert(right.begin(), right.end());
  return State(std::move(out));
}

bool equals(const State& left, const State& right) { return left == right; }

}  // namespace orchestra
