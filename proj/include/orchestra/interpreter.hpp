#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "orchestra/behaviour.hpp"
#include "orchestra/message.hpp"

namespace orchestra {

struct Completion {
  enum class Kind { Success, Fault, Terminated };
  Kind kind = Kind::Success;
  std::string fault;

  static Completion success() { return {}; }
  static Completion failed(std::string name) { return {Kind::Fault, std::move(name)}; }
  static Completion terminated() { return {Kind::Terminated, {}}; }

  std::string to_string() const;
  friend bool operator==(const Completion&, const Completion&) = default;
  friend bool operator<(const Completion& a, const Completion& b) {
    return a.kind != b.kind ? a.kind < b.kind : a.fault < b.fault;
  }
};

/// Completion slot for an outstanding solicit. Filled from a transport thread;
/// `wake` lets the owning session notice.
class SolicitTicket {
 public:
  explicit SolicitTicket(std::function<void()> wake = {}) : wake_(std::move(wake)) {}

  void complete(State payload);
  void fail(std::string fault);
  bool ready() const;
  /// Response payload, or throws the carried Fault.
  State take();

 private:
  void finish();

  mutable std::mutex mu_;
  bool ready_ = false;
  std::optional<State> payload_;
  std::string fault_;
  std::function<void()> wake_;
};

struct Received {
  Message message;
  bool needs_reply = false;
};

/// Everything a session can do besides touching its own local state.
/// Communication failures surface as thrown Faults.
class SessionContext {
 public:
  virtual ~SessionContext() = default;

  virtual bool has_message(const std::string& op) const = 0;
  virtual Received take_message(const std::string& op) = 0;
  virtual void reply(const std::string& op, const State& payload) = 0;
  /// The pending request on `op` will never be answered normally.
  virtual void abort_reply(const std::string& op, const std::string& fault) = 0;
  virtual void notify(const std::string& port, const std::string& op, const State& payload) = 0;
  virtual std::shared_ptr<SolicitTicket> solicit(const std::string& port, const std::string& op,
                                                 const State& payload) = 0;

  virtual std::optional<Value> read_global(std::string_view name) const = 0;
  virtual void write_global(const std::string& name, Value v) = 0;
  virtual std::optional<Value> read_storage(std::string_view name) const = 0;
  virtual void write_storage(const std::string& name, Value v) = 0;
  virtual std::optional<std::string> caller(std::string_view op) const = 0;
  /// Runs `fn` with the global tier locked against other sessions.
  virtual void atomically(const std::function<void()>& fn) { fn(); }

  virtual void trace(std::string_view /*event*/, std::string_view /*detail*/) {}
};

/// Step interpreter for one session.
///
/// The running behaviour is a tree of nodes; leaves are atomic actions
/// (assign, throw, nil, a condition test, a communication). Each step runs one
/// runnable leaf. With `run`, the leaf is chosen by a PRNG seeded at
/// construction, so a behaviour, a message trace and a seed fix the outcome.
///
/// Fault discipline: a fault travels to the nearest enclosing scope whose body
/// is running. That scope kills its body, runs the termination handlers of
/// every scope still running inside it (innermost first, left to right), then
/// runs its handler for the fault or, lacking one, re-raises the fault in its
/// parent. A fault escaping a termination handler becomes HandlerFault. The
/// behaviour root acts as a scope without handlers.
///
/// A scope whose body succeeds installs its compensation handler;
/// `compensate(s)` runs the installed handlers of `s` newest first, once each.
class Interpreter {
 public:
  struct Node;
  using Thread = const Node*;

  Interpreter(std::shared_ptr<const BehaviourDef> def, State initial, std::uint64_t seed);
  ~Interpreter();
  Interpreter(const Interpreter&) = delete;
  Interpreter& operator=(const Interpreter&) = delete;

  bool finished() const noexcept { return completion_.has_value(); }
  const std::optional<Completion>& completion() const noexcept { return completion_; }

  const State& local() const noexcept { return local_; }
  State& local() noexcept { return local_; }

  std::vector<Thread> runnable(const SessionContext& ctx) const;
  void step(Thread t, SessionContext& ctx);

  /// Takes scheduler-chosen steps until finished, blocked, or `max_steps`.
  std::size_t run(SessionContext& ctx, std::size_t max_steps = SIZE_MAX);

  /// Starts terminating the whole session: running scopes get their
  /// termination handlers, then the session completes as Terminated.
  void terminate(SessionContext& ctx);
  /// Forces completion (used when termination handlers block forever).
  void abandon();

  std::size_t steps_taken() const noexcept { return steps_; }

 private:
  std::unique_ptr<Node> spawn(const Activity* a, Node* parent);
  void activate(Node* n);
  void finish(Node* n);
  void child_done(Node* parent, Node* child);
  void raise(const std::string& fault, Node* origin, SessionContext& ctx);
  void catch_fault(Node* scope, const std::string& fault, SessionContext& ctx);
  void start_agenda(Node* scope);
  void finish_termination(Node* scope, SessionContext* ctx);
  void kill_child(Node* parent, std::size_t index, const std::string& fault, SessionContext& ctx);
  void bury(std::unique_ptr<Node>& slot);
  void exec(Node* leaf, SessionContext& ctx);
  void complete_root(Completion c);

  std::shared_ptr<const BehaviourDef> def_;
  State local_;
  std::mt19937_64 rng_;
  std::unique_ptr<Node> root_;
  std::vector<std::unique_ptr<Node>> graveyard_;
  std::optional<Completion> completion_;
  std::uint64_t next_id_ = 0;
  std::size_t steps_ = 0;
  bool stopping_ = false;
  SessionContext* ctx_ = nullptr;
  /// Installed compensation handlers in completion order.
  std::vector<std::pair<std::string, const Activity*>> compensations_;
  /// Pending request-response receives: op -> ids of the receive's ancestors.
  std::map<std::string, std::vector<std::uint64_t>> pending_;
};

/// In-memory SessionContext for running a behaviour without an engine.
class LocalContext : public SessionContext {
 public:
  using Responder = std::function<State(const std::string& port, const std::string& op, const State& payload)>;

  struct Output {
    std::string kind;  // "reply", "notify", "solicit", "abort"
    std::string target;
    std::string op;
    State payload;
    std::string fault;
  };

  std::deque<Message> mailbox;
  std::vector<Output> outputs;
  State global;
  State storage;
  /// Answers solicits synchronously; a thrown Fault becomes the solicit's fault.
  Responder responder;
  /// Operations treated as request-response on receive.
  std::set<std::string> request_response;

  bool has_message(const std::string& op) const override;
  Received take_message(const std::string& op) override;
  void reply(const std::string& op, const State& payload) override;
  void abort_reply(const std::string& op, const std::string& fault) override;
  void notify(const std::string& port, const std::string& op, const State& payload) override;
  std::shared_ptr<SolicitTicket> solicit(const std::string& port, const std::string& op,
                                         const State& payload) override;
  std::optional<Value> read_global(std::string_view name) const override { return global.lookup(name); }
  void write_global(const std::string& name, Value v) override { global.set(name, std::move(v)); }
  std::optional<Value> read_storage(std::string_view name) const override { return storage.lookup(name); }
  void write_storage(const std::string& name, Value v) override { storage.set(name, std::move(v)); }
  std::optional<std::string> caller(std::string_view op) const override;

 private:
  std::set<std::string> awaiting_;
};

}  // namespace orchestra
