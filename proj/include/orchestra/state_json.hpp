#pragma once

#include <cmath>

#include <json.hpp>

#include "orchestra/errors.hpp"
#include "orchestra/state.hpp"

namespace orchestra {

// JSON encoding of values and states. Integers encode without a fraction
// part; doubles always carry one (nlohmann prints 1.0 as "1.0"). Non-finite
// doubles have no JSON spelling and are rejected.

template <class Json = nlohmann::json>
Json value_to_json(const Value& v) {
  struct Visitor {
    Json operator()(const std::string& s) const { return Json(s); }
    Json operator()(std::int64_t i) const { return Json(i); }
    Json operator()(double d) const {
      if (!std::isfinite(d)) throw EncodeError("non-finite double has no JSON encoding");
      return Json(d);
    }
    Json operator()(bool b) const { return Json(b); }
  };
  return std::visit(Visitor{}, v);
}

template <class Json>
Value value_from_json(const Json& j) {
  switch (j.type()) {
    case Json::value_t::string: return j.template get<std::string>();
    case Json::value_t::boolean: return j.template get<bool>();
    case Json::value_t::number_integer: return j.template get<std::int64_t>();
    case Json::value_t::number_unsigned: {
      auto u = j.template get<std::uint64_t>();
      if (u > static_cast<std::uint64_t>(INT64_MAX)) throw DecodeError("integer out of int64 range");
      return static_cast<std::int64_t>(u);
    }
    case Json::value_t::number_float: return j.template get<double>();
    default: throw DecodeError(std::string("not a scalar value: ") + j.type_name());
  }
}

template <class Json = nlohmann::json>
Json state_to_json(const State& s) {
  Json out = Json::object();
  for (const auto& [k, v] : s) out[k] = value_to_json<Json>(v);
  return out;
}

template <class Json>
State state_from_json(const Json& j) {
  if (!j.is_object()) throw DecodeError("state must be a JSON object");
  State out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!is_var_name(it.key())) throw DecodeError("invalid variable name '" + it.key() + "'");
    out.set(it.key(), value_from_json(it.value()));
  }
  return out;
}

}  // namespace orchestra
