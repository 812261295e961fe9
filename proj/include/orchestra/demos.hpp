#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "orchestra/engine.hpp"
#include "orchestra/event_log.hpp"

namespace orchestra::demos {

struct Options {
  std::uint64_t seed = 1;
  std::shared_ptr<EventLog> log = std::make_shared<EventLog>();
  std::chrono::milliseconds watchdog_grace{500};
};

struct Result {
  std::string name;
  std::vector<std::string> transcript;
  std::vector<std::string> expected;

  bool ok() const { return transcript == expected; }
  /// Line-by-line comparison, `-` expected / `+` actual.
  std::string diff() const;
};

/// rr-vs-callback, web, slave-mobility, master-mobility, sos, deadlock.
const std::vector<std::string>& names();
/// Throws std::invalid_argument for an unknown name.
Result run(const std::string& name, const Options& opts = {});

Result rr_vs_callback(const Options& opts);
Result web(const Options& opts);
Result slave_mobility(const Options& opts);
Result master_mobility(const Options& opts);
Result sos(const Options& opts);
Result deadlock(const Options& opts);

/// Service A solicits B, and B needs a new session on A before answering.
struct DeadlockRun {
  bool deadlock_reported = false;
  bool completed = false;
  std::chrono::milliseconds elapsed{0};
};
DeadlockRun deadlock_scenario(ExecutionMode mode, const Options& opts,
                              std::chrono::milliseconds budget = std::chrono::seconds(3));

/// One client script against the calculator deployed four ways.
struct Transparency {
  /// deployment -> one line per call
  std::map<std::string, std::vector<std::string>> responses;
  std::uint64_t embedded_socket_bytes = 0;
};
Transparency composition_transparency(const Options& opts);

}  // namespace orchestra::demos
