#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "orchestra/behaviour.hpp"
#include "orchestra/correlation.hpp"
#include "orchestra/event_log.hpp"
#include "orchestra/interface.hpp"
#include "orchestra/interpreter.hpp"
#include "orchestra/ports.hpp"
#include "orchestra/storage.hpp"

namespace orchestra {

enum class ExecutionMode { Sequential, Concurrent };

struct RoutingOutcome {
  enum class Kind { Delivered, Created, Queued, Rejected };
  Kind kind = Kind::Rejected;
  SessionId session = 0;
  std::string fault;  // Rejected only

  std::string to_string() const;
  friend bool operator==(const RoutingOutcome&, const RoutingOutcome&) = default;
};

struct EngineConfig {
  std::string service = "service";
  std::shared_ptr<const BehaviourDef> behaviour;
  CorrelationConfig correlation;
  /// Declared operations; input kinds are accepted by submit.
  Interface interface;
  ExecutionMode mode = ExecutionMode::Concurrent;
  /// Empty: the service has no storage tier.
  std::string storage_path;
  State globals;
  std::uint64_t seed = 0;
  std::chrono::milliseconds watchdog_grace{500};
  /// Also log every interpreter step (used by serialization checks).
  bool trace_steps = false;
  std::shared_ptr<EventLog> log;
  std::map<std::string, std::shared_ptr<OutputPort>> outputs;
};

struct SessionReport {
  SessionId id = 0;
  std::optional<Completion> completion;  // empty while unfinished
};

/// Runs the sessions of one service.
///
/// Intake is serialized: each submitted message is routed (select, bind,
/// enqueue or create) before the next is looked at. In concurrent mode each
/// session runs on its own thread; in sequential mode a single executor runs
/// sessions one at a time, to completion, in creation order, firing session
/// first.
///
/// A watchdog records a `deadlock` event when unfinished sessions exist, none
/// of them can make progress, and nothing has happened for the grace period.
class Engine {
 public:
  /// Opens the storage file (StorageError).
  explicit Engine(EngineConfig cfg);
  ~Engine();
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  /// Creates the firing session, if any, and starts executing.
  /// With `fire_now` false the firing session is created but held back, and
  /// in sequential mode nothing runs, until `fire()`. Messages are accepted
  /// meanwhile.
  void start(bool fire_now = true);
  void fire();
  RoutingOutcome submit(Message m);

  std::optional<Value> global_read(std::string_view name) const;
  void global_write(const std::string& name, Value v);
  /// Atomic read-modify-write; undefined counts as 0. Throws Fault(TypeFault)
  /// for non-numeric or mixed operands, Fault(ArithmeticFault) on overflow.
  Value global_add(const std::string& name, const Value& delta);

  /// Null when no storage path is configured or after stop.
  Storage* storage() noexcept { return storage_.get(); }

  /// Terminates running sessions (their termination handlers run), drops
  /// never-started ones, discards the global state, closes storage.
  /// Sessions still stuck after `grace` are abandoned.
  std::vector<SessionReport> stop(std::chrono::milliseconds grace = std::chrono::seconds(2));

  bool wait_all_finished(std::chrono::milliseconds timeout);
  /// Waits for `n` sessions to have finished in total.
  bool wait_finished(std::size_t n, std::chrono::milliseconds timeout);
  std::vector<SessionReport> sessions() const;
  std::size_t live_sessions() const;

  /// When the watchdog last reported quiescence; reset by any activity.
  std::optional<std::chrono::steady_clock::time_point> deadlock_detected() const;

  struct Counters {
    std::uint64_t submitted = 0, delivered = 0, created = 0, queued = 0, rejected = 0;
  };
  Counters counters() const;

  const EngineConfig& config() const noexcept { return cfg_; }
  bool stopped() const noexcept { return stopped_; }

 private:
  struct Session;
  class Context;

  std::shared_ptr<Session> create_session(State local);
  void launch(const std::shared_ptr<Session>& s);
  void run_session(const std::shared_ptr<Session>& s);
  void finish_session(Session& s);
  void executor_loop();
  void watchdog_loop();
  void log(const std::string& session, std::string_view event, std::string_view detail = {});
  static void signal(Session& s);

  EngineConfig cfg_;
  std::unique_ptr<Storage> storage_;

  mutable std::recursive_mutex global_mu_;
  State globals_;

  std::mutex intake_mu_;
  std::mt19937_64 rng_;

  mutable std::mutex table_mu_;
  std::condition_variable table_cv_;
  std::map<SessionId, std::shared_ptr<Session>> sessions_;
  std::deque<std::shared_ptr<Session>> ready_;  // sequential mode
  SessionId next_id_ = 1;
  std::size_t finished_count_ = 0;
  std::vector<std::thread> threads_;

  std::atomic<std::uint64_t> epoch_{0};
  std::atomic<bool> started_{false}, stopping_{false}, stopped_{false};
  std::thread executor_, watchdog_;
  std::shared_ptr<Session> held_;  // firing session awaiting fire()
  bool fired_ = false;
  mutable std::mutex watch_mu_;
  std::condition_variable watch_cv_;
  std::optional<std::chrono::steady_clock::time_point> deadlock_at_;

  std::atomic<std::uint64_t> submitted_{0}, delivered_{0}, created_{0}, queued_{0}, rejected_{0};
};

}  // namespace orchestra
