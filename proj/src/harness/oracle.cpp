#include "orchestra/harness/oracle.hpp"

namespace orchestra::harness {

bool oracle_correlates(const State& message, const std::map<std::string, std::string>& c,
                       const std::set<std::string>& cset, const State& s) {
  for (const auto& binding : message.bindings()) {
    const std::string& x = binding.first;
    auto cx = c.find(x);
    if (cx == c.end()) continue;
    if (cset.find(cx->second) == cset.end()) continue;
    std::optional<Value> in_state = s.lookup(cx->second);
    std::optional<Value> in_message = message.lookup(x);
    bool same = in_state.has_value() && in_state == in_message;
    bool undefined = !in_state.has_value();
    if (!(same || undefined)) return false;
  }
  return true;
}

bool oracle_correlates(const State& message, const std::map<std::string, std::string>& c, const State& s) {
  std::set<std::string> cset;
  for (const auto& [x, var] : c) cset.insert(var);
  return oracle_correlates(message, c, cset, s);
}

}  // namespace orchestra::harness
