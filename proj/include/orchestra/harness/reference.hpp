#pragma once

#include <cstddef>
#include <set>
#include <vector>

#include "orchestra/behaviour.hpp"
#include "orchestra/interpreter.hpp"
#include "orchestra/message.hpp"

namespace orchestra::harness {

struct Outcome {
  State local;
  State global;
  Completion completion;

  friend bool operator<(const Outcome& a, const Outcome& b);
  friend bool operator==(const Outcome&, const Outcome&) = default;
};

struct Enumeration {
  std::set<Outcome> finals;
  /// Paths that stopped with nothing runnable (receive with no message).
  std::size_t blocked = 0;
  /// Paths cut at `max_steps`.
  std::size_t pruned = 0;
  std::size_t explored = 0;
};

/// Explores every scheduler choice of a small behaviour with a functional
/// small-step interpreter of its own (immutable terms, no shared code with
/// Interpreter beyond the AST and expressions). Messages in `trace` form the
/// mailbox; receives take the first message on their operation.
///
/// Paths longer than `max_steps` are dropped. Throws BudgetExceeded when no
/// path finishes, or when more than `max_configs` configurations are visited.
/// Throws Error for reply/solicit, which need a live peer.
Enumeration enumerate_interleavings(const BehaviourDef& b, const std::vector<Message>& trace, std::size_t max_steps,
                                    std::size_t max_configs = 2'000'000);

}  // namespace orchestra::harness
