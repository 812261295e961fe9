#include "orchestra/correlation.hpp"

#include <algorithm>

#include "orchestra/errors.hpp"

namespace orchestra {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

CorrelationConfig::CorrelationConfig(std::map<std::string, CorrelationFunction> functions)
    : functions_(std::move(functions)) {
  for (const auto& [op, c] : functions_) {
    std::set<std::string> seen;
    for (const auto& [field, var] : c) {
      if (!is_var_name(field) || !is_var_name(var))
        throw ValidationError("correlation for '" + op + "': bad name '" + (is_var_name(field) ? var : field) + "'");
      if (!seen.insert(var).second)
        throw ValidationError("correlation for '" + op + "' is not injective: two fields map to '" + var + "'");
      cset_.insert(var);
    }
  }
}

const CorrelationFunction& CorrelationConfig::function_for(std::string_view op) const {
  static const CorrelationFunction empty;
  auto it = functions_.find(std::string(op));
  return it == functions_.end() ? empty : it->second;
}

CorrelationConfig CorrelationConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("correlation: expected an object");
  std::map<std::string, CorrelationFunction> fns;
  for (const auto& [op, c] : j.items()) {
    if (!c.is_object()) throw ParseError("correlation for '" + op + "': expected an object");
    auto& f = fns[op];
    for (const auto& [field, var] : c.items()) {
      if (!var.is_string()) throw ParseError("correlation for '" + op + "': variable must be a string");
      f.emplace(field, var.get<std::string>());
    }
  }
  return CorrelationConfig(std::move(fns));
}

nlohmann::json CorrelationConfig::to_json() const {
  auto j = nlohmann::json::object();
  for (const auto& [op, c] : functions_) {
    auto& o = j[op] = nlohmann::json::object();
    for (const auto& [field, var] : c) o[field] = var;
  }
  return j;
}

bool correlates(const Message& m, const CorrelationFunction& c, const State& s) {
  for (const auto& [field, value] : m.payload) {
    auto it = c.find(field);
    if (it == c.end()) continue;
    const Value* bound = s.find(it->second);
    if (bound && *bound != value) return false;
  }
  return true;
}

bool correlates(const Message& m, const CorrelationConfig& cfg, const State& s) {
  return correlates(m, cfg.function_for(m.operation), s);
}

std::optional<SessionId> select_session(const Message& m, const std::vector<std::pair<SessionId, State>>& candidates,
                                        const CorrelationConfig& cfg, std::uint64_t seed) {
  std::vector<SessionId> hits;
  for (const auto& [id, s] : candidates)
    if (correlates(m, cfg, s)) hits.push_back(id);
  if (hits.empty()) return std::nullopt;
  std::sort(hits.begin(), hits.end());
  return hits[splitmix64(seed) % hits.size()];
}

State bind_correlation(const Message& m, const CorrelationFunction& c, const State& s) {
  State out = s;
  for (const auto& [field, value] : m.payload) {
    auto it = c.find(field);
    if (it != c.end() && !out.contains(it->second)) out.set(it->second, value);
  }
  return out;
}

State bind_correlation(const Message& m, const CorrelationConfig& cfg, const State& s) {
  return bind_correlation(m, cfg.function_for(m.operation), s);
}

bool carries_correlation(const Message& m, const CorrelationConfig& cfg) {
  const auto& c = cfg.function_for(m.operation);
  return std::any_of(m.payload.begin(), m.payload.end(), [&](const auto& kv) { return c.count(kv.first) > 0; });
}

}  // namespace orchestra
