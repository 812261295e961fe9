#pragma once

#include <map>
#include <set>
#include <string>

#include "orchestra/state.hpp"

namespace orchestra::harness {

/// The routing formula written out directly:
///
///   for all x in Dom(M): c(x) defined and c(x) in cset
///                        implies S(c(x)) = M(x) or S(c(x)) undefined
///
/// Deliberately shares no code with the engine's correlation module.
bool oracle_correlates(const State& message, const std::map<std::string, std::string>& c,
                       const std::set<std::string>& cset, const State& s);

/// Same, with cset taken as the codomain of `c`.
bool oracle_correlates(const State& message, const std::map<std::string, std::string>& c, const State& s);

}  // namespace orchestra::harness
