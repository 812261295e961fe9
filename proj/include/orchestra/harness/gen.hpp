#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "orchestra/state.hpp"

namespace orchestra::harness {

/// Hand-rolled generators over the small pools the oracles are exact for:
/// four variable names, values drawn from {1, 2} or left undefined.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  static const std::vector<std::string>& pool() {
    static const std::vector<std::string> names{"a", "b", "c", "d"};
    return names;
  }

  std::uint64_t next() { return rng_(); }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(rng_() % n); }
  bool coin() { return rng_() & 1; }

  /// Each pool name is 1, 2, or unbound.
  State small_state() {
    State s;
    for (const auto& n : pool())
      if (auto k = below(3); k < 2) s.set(n, std::int64_t(k + 1));
    return s;
  }

  /// Partial injective map from pool names to pool names.
  std::map<std::string, std::string> function() {
    std::vector<std::string> targets = pool();
    std::shuffle(targets.begin(), targets.end(), rng_);
    std::map<std::string, std::string> c;
    std::size_t used = 0;
    for (const auto& field : pool())
      if (coin()) c[field] = targets[used++];
    return c;
  }

  /// Mixed-variant state over a wider pool, for algebra properties.
  State any_state() {
    static const char* names[] = {"a", "b", "c", "d", "e", "f"};
    State s;
    for (const char* n : names) {
      switch (below(6)) {
        case 0: s.set(n, std::int64_t(below(3))); break;
        case 1: s.set(n, double(below(3))); break;
        case 2: s.set(n, std::string(1, char('x' + below(2)))); break;
        case 3: s.set(n, coin()); break;
        default: break;
      }
    }
    return s;
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace orchestra::harness
