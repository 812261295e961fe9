#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "orchestra/message.hpp"
#include "orchestra/state.hpp"

namespace orchestra {

using SessionId = std::uint64_t;

/// Message field -> session variable, for one input operation.
using CorrelationFunction = std::map<std::string, std::string, std::less<>>;

class CorrelationConfig {
 public:
  CorrelationConfig() = default;
  /// Throws ValidationError when a function is not injective or names are bad.
  explicit CorrelationConfig(std::map<std::string, CorrelationFunction> functions);

  /// The function for `op`; empty when none is declared.
  const CorrelationFunction& function_for(std::string_view op) const;
  const std::map<std::string, CorrelationFunction>& functions() const noexcept { return functions_; }
  /// Union of the codomains of every function.
  const std::set<std::string>& cset() const noexcept { return cset_; }

  /// `{op: {field: var}}`. Throws ParseError / ValidationError.
  static CorrelationConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  friend bool operator==(const CorrelationConfig& a, const CorrelationConfig& b) {
    return a.functions_ == b.functions_;
  }

 private:
  std::map<std::string, CorrelationFunction> functions_;
  std::set<std::string> cset_;
};

/// The routing predicate: every correlated field of `m` either equals the
/// session's variable or finds it unbound.
bool correlates(const Message& m, const CorrelationFunction& c, const State& s);
bool correlates(const Message& m, const CorrelationConfig& cfg, const State& s);

/// Sessions whose state correlates with `m`; ties broken by `seed` over the
/// matches sorted by id.
std::optional<SessionId> select_session(const Message& m, const std::vector<std::pair<SessionId, State>>& candidates,
                                        const CorrelationConfig& cfg, std::uint64_t seed);

/// Binds every correlation variable that `m` matched while unbound.
State bind_correlation(const Message& m, const CorrelationFunction& c, const State& s);
State bind_correlation(const Message& m, const CorrelationConfig& cfg, const State& s);

/// True when `m` carries at least one field that `cfg` correlates.
bool carries_correlation(const Message& m, const CorrelationConfig& cfg);

}  // namespace orchestra
