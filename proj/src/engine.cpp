#include "orchestra/engine.hpp"

#include <algorithm>

#include "orchestra/errors.hpp"

namespace orchestra {

using namespace std::chrono_literals;
using Clock = std::chrono::steady_clock;

std::string RoutingOutcome::to_string() const {
  switch (kind) {
    case Kind::Delivered: return "delivered(" + std::to_string(session) + ")";
    case Kind::Created: return "created(" + std::to_string(session) + ")";
    case Kind::Queued: return "queued(" + std::to_string(session) + ")";
    case Kind::Rejected: return "rejected(" + fault + ")";
  }
  return "?";
}

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RoutingOutcome outcome(RoutingOutcome::Kind k, SessionId id, std::string fault = {}) { return {k, id, std::move(fault)}; }

}  // namespace

// ---------------------------------------------------------------- sessions

struct Engine::Session {
  enum class Status { Created, Running, Blocked, Finished };

  SessionId id = 0;
  std::string label;

  std::mutex mu;  // interpreter, mailbox, pending replies
  std::unique_ptr<Interpreter> interp;
  std::unique_ptr<Context> ctx;
  std::deque<Message> mailbox;
  std::map<std::string, Message> pending;
  bool terminate_sent = false;

  std::atomic<Status> status{Status::Created};
  std::optional<Completion> completion;  // guarded by table_mu_

  std::mutex sig_mu;
  std::condition_variable sig_cv;
  bool signaled = false;
};

class Engine::Context : public SessionContext {
 public:
  Context(Engine& e, const std::shared_ptr<Session>& s) : e_(e), s_(*s), weak_(s) {}

  bool has_message(const std::string& op) const override {
    return std::any_of(s_.mailbox.begin(), s_.mailbox.end(), [&](const Message& m) { return m.operation == op; });
  }

  Received take_message(const std::string& op) override {
    auto it = std::find_if(s_.mailbox.begin(), s_.mailbox.end(), [&](const Message& m) { return m.operation == op; });
    if (it == s_.mailbox.end()) throw Fault(faults::kProtocolFault, "no message on " + op);
    bool rr = it->reply_to != nullptr;
    if (rr && s_.pending.count(op)) throw Fault(faults::kProtocolFault, "second receive on " + op + " before reply");
    Received r{std::move(*it), rr};
    s_.mailbox.erase(it);
    if (rr) s_.pending[op] = r.message;
    e_.log(s_.label, "receive", op);
    return r;
  }

  void reply(const std::string& op, const State& payload) override {
    auto it = s_.pending.find(op);
    if (it == s_.pending.end()) throw Fault(faults::kProtocolFault, "no pending request on " + op);
    if (const OperationDecl* d = e_.cfg_.interface.find(op)) {
      if (auto why = d->response.mismatch(payload); !why.empty()) throw Fault(faults::kTypeFault, op + ": " + why);
    }
    Message m = std::move(it->second);
    s_.pending.erase(it);
    m.reply_to->send_response(m.request_id, payload);
    e_.log(s_.label, "reply", op);
  }

  void abort_reply(const std::string& op, const std::string& fault) override {
    auto it = s_.pending.find(op);
    if (it == s_.pending.end()) return;
    Message m = std::move(it->second);
    s_.pending.erase(it);
    m.reply_to->send_fault(m.request_id, fault);
    e_.log(s_.label, "reply-fault", op + " " + fault);
  }

  void notify(const std::string& port, const std::string& op, const State& payload) override {
    e_.log(s_.label, "notify", port + "." + op);
    output(port).notify(op, payload);
  }

  std::shared_ptr<SolicitTicket> solicit(const std::string& port, const std::string& op,
                                         const State& payload) override {
    e_.log(s_.label, "solicit", port + "." + op);
    std::weak_ptr<Session> w = weak_;
    return output(port).solicit(op, payload, [w] {
      if (auto s = w.lock()) Engine::signal(*s);
    });
  }

  std::optional<Value> read_global(std::string_view name) const override { return e_.global_read(name); }
  void write_global(const std::string& name, Value v) override { e_.global_write(name, std::move(v)); }

  std::optional<Value> read_storage(std::string_view name) const override {
    return e_.storage_ ? e_.storage_->get(name) : std::nullopt;
  }
  void write_storage(const std::string& name, Value v) override {
    if (!e_.storage_) throw Fault(faults::kStorageError, "service has no storage");
    try {
      e_.storage_->put(name, v);
    } catch (const StorageError& err) {
      throw Fault(faults::kStorageError, err.what());
    }
  }

  std::optional<std::string> caller(std::string_view op) const override {
    auto it = s_.pending.find(std::string(op));
    if (it == s_.pending.end() || it->second.channel_id.empty()) return std::nullopt;
    return it->second.channel_id;
  }

  void atomically(const std::function<void()>& fn) override {
    std::lock_guard lock(e_.global_mu_);
    fn();
  }

  void trace(std::string_view event, std::string_view detail) override {
    if (event == "step" && !e_.cfg_.trace_steps) return;
    e_.log(s_.label, event, detail);
  }

 private:
  OutputPort& output(const std::string& port) const {
    auto it = e_.cfg_.outputs.find(port);
    if (it == e_.cfg_.outputs.end()) throw Fault(faults::kIoFault, "no output port '" + port + "'");
    return *it->second;
  }

  Engine& e_;
  Session& s_;
  std::weak_ptr<Session> weak_;
};

// ---------------------------------------------------------------- engine

Engine::Engine(EngineConfig cfg) : cfg_(std::move(cfg)), globals_(cfg_.globals), rng_(cfg_.seed) {
  if (!cfg_.behaviour) throw ValidationError("engine: no behaviour");
  if (!cfg_.storage_path.empty()) storage_ = std::make_unique<Storage>(cfg_.storage_path);
}

Engine::~Engine() { stop(200ms); }

void Engine::log(const std::string& session, std::string_view event, std::string_view detail) {
  if (cfg_.log) cfg_.log->record(session, event, detail);
}

void Engine::signal(Session& s) {
  {
    std::lock_guard lock(s.sig_mu);
    s.signaled = true;
  }
  s.sig_cv.notify_all();
}

void Engine::start(bool fire_now) {
  if (started_.exchange(true)) return;
  log(cfg_.service, "engine-start", cfg_.mode == ExecutionMode::Sequential ? "sequential" : "concurrent");
  if (cfg_.behaviour->firing) {
    std::lock_guard lock(intake_mu_);
    held_ = create_session({});
    log(held_->label, "create", "firing");
  }
  watchdog_ = std::thread(&Engine::watchdog_loop, this);
  if (fire_now) fire();
}

void Engine::fire() {
  std::lock_guard lock(intake_mu_);
  if (fired_ || !started_ || stopping_) return;
  fired_ = true;
  if (held_) {
    if (cfg_.mode == ExecutionMode::Sequential) {
      // The firing session runs before anything that arrived while held.
      std::lock_guard table(table_mu_);
      ready_.push_front(held_);
    } else {
      launch(held_);
    }
    held_.reset();
  }
  if (cfg_.mode == ExecutionMode::Sequential) executor_ = std::thread(&Engine::executor_loop, this);
}

std::shared_ptr<Engine::Session> Engine::create_session(State local) {
  auto s = std::make_shared<Session>();
  std::lock_guard lock(table_mu_);
  s->id = next_id_++;
  s->label = cfg_.service + "#" + std::to_string(s->id);
  s->interp = std::make_unique<Interpreter>(cfg_.behaviour, std::move(local), mix(cfg_.seed ^ (s->id * 0x2545f4914f6cdd1dULL)));
  s->ctx = std::make_unique<Context>(*this, s);
  sessions_[s->id] = s;
  return s;
}

void Engine::launch(const std::shared_ptr<Session>& s) {
  std::lock_guard lock(table_mu_);
  if (cfg_.mode == ExecutionMode::Sequential) {
    ready_.push_back(s);
    table_cv_.notify_all();
  } else {
    s->status = Session::Status::Running;
    threads_.emplace_back(&Engine::run_session, this, s);
  }
}

RoutingOutcome Engine::submit(Message m) {
  using K = RoutingOutcome::Kind;
  std::lock_guard intake(intake_mu_);
  ++submitted_;
  ++epoch_;
  auto reject = [&](const char* fault) {
    ++rejected_;
    log(cfg_.service, "reject", m.operation + " " + fault);
    return outcome(K::Rejected, 0, fault);
  };

  const OperationDecl* decl = cfg_.interface.find(m.operation);
  if (!decl || !is_input(decl->kind)) return reject(faults::kUnknownOperation);
  if (stopping_ || !started_) return reject(faults::kIoFault);

  const bool initiator = cfg_.behaviour->initiators.count(m.operation) > 0;
  // An initiator message that carries no correlated field would match every
  // session vacuously; it always opens a new one instead.
  if (!initiator || carries_correlation(m, cfg_.correlation)) {
    std::set<SessionId> excluded;
    for (;;) {
      std::vector<std::pair<SessionId, State>> candidates;
      std::vector<std::shared_ptr<Session>> live;
      {
        std::lock_guard lock(table_mu_);
        for (const auto& [id, s] : sessions_)
          if (s->status != Session::Status::Finished && !excluded.count(id)) live.push_back(s);
      }
      for (const auto& s : live) {
        std::lock_guard lock(s->mu);
        if (s->interp->finished()) continue;
        candidates.emplace_back(s->id, project(s->interp->local(), cfg_.correlation.cset()));
      }
      auto chosen = select_session(m, candidates, cfg_.correlation, rng_());
      if (!chosen) break;
      auto s = *std::find_if(live.begin(), live.end(), [&](const auto& x) { return x->id == *chosen; });
      bool queued;
      {
        std::lock_guard lock(s->mu);
        if (s->interp->finished()) {
          excluded.insert(s->id);
          continue;
        }
        State bound = bind_correlation(m, cfg_.correlation, s->interp->local());
        s->interp->local() = std::move(bound);
        queued = s->status == Session::Status::Created;
        log(s->label, queued ? "queue" : "deliver", m.operation);
        s->mailbox.push_back(std::move(m));
      }
      signal(*s);
      if (queued) {
        ++queued_;
        return outcome(K::Queued, s->id);
      }
      ++delivered_;
      return outcome(K::Delivered, s->id);
    }
  }

  if (!initiator) return reject(faults::kCorrelationError);
  auto s = create_session(bind_correlation(m, cfg_.correlation, State{}));
  log(s->label, "create", m.operation);
  s->mailbox.push_back(std::move(m));
  ++created_;
  launch(s);
  return outcome(K::Created, s->id);
}

void Engine::run_session(const std::shared_ptr<Session>& sp) {
  Session& s = *sp;
  s.status = Session::Status::Running;
  log(s.label, "start");
  constexpr std::size_t kSlice = 64;
  for (;;) {
    {
      std::lock_guard lock(s.mu);
      if (stopping_ && !s.terminate_sent) {
        s.terminate_sent = true;
        s.interp->terminate(*s.ctx);
      }
      std::size_t n = s.interp->run(*s.ctx, kSlice);
      if (n) epoch_ += n;
      if (s.interp->finished()) break;
      if (n == kSlice) continue;
    }
    std::unique_lock lock(s.sig_mu);
    s.status = Session::Status::Blocked;
    s.sig_cv.wait(lock, [&] { return s.signaled; });
    s.signaled = false;
    s.status = Session::Status::Running;
  }
  finish_session(s);
}

void Engine::finish_session(Session& s) {
  Completion c;
  {
    std::lock_guard lock(s.mu);
    c = *s.interp->completion();
    const std::string unreplied =
        c.kind == Completion::Kind::Fault        ? c.fault
        : c.kind == Completion::Kind::Terminated ? faults::kTerminated
                                                 : faults::kProtocolFault;
    for (auto& [op, m] : s.pending) {
      m.reply_to->send_fault(m.request_id, unreplied);
      log(s.label, "reply-fault", op + " " + unreplied);
    }
    s.pending.clear();
    const std::string leftover = c.kind == Completion::Kind::Terminated ? faults::kTerminated : faults::kCorrelationError;
    for (auto& m : s.mailbox) {
      log(s.label, "unconsumed", m.operation);
      if (m.reply_to) m.reply_to->send_fault(m.request_id, leftover);
    }
    s.mailbox.clear();
  }
  log(s.label, "finish", c.to_string());
  ++epoch_;
  {
    std::lock_guard lock(table_mu_);
    s.completion = c;
    s.status = Session::Status::Finished;
    ++finished_count_;
  }
  table_cv_.notify_all();
}

void Engine::executor_loop() {
  for (;;) {
    std::shared_ptr<Session> next;
    {
      std::unique_lock lock(table_mu_);
      table_cv_.wait(lock, [&] { return stopping_ || !ready_.empty(); });
      if (stopping_) break;
      next = ready_.front();
      ready_.pop_front();
    }
    run_session(next);
  }
  // Sessions that never started are dropped without running anything.
  std::deque<std::shared_ptr<Session>> dropped;
  {
    std::lock_guard lock(table_mu_);
    dropped.swap(ready_);
  }
  for (auto& s : dropped) {
    {
      std::lock_guard lock(s->mu);
      s->interp->abandon();
    }
    finish_session(*s);
  }
}

void Engine::watchdog_loop() {
  std::uint64_t seen = epoch_;
  auto changed = Clock::now();
  bool reported = false;
  std::unique_lock lock(watch_mu_);
  while (!stopping_) {
    watch_cv_.wait_for(lock, 10ms);
    if (stopping_) break;
    if (std::uint64_t e = epoch_; e != seen) {
      seen = e;
      changed = Clock::now();
      reported = false;
      deadlock_at_.reset();
      continue;
    }
    if (reported || Clock::now() - changed < cfg_.watchdog_grace) continue;

    std::vector<std::shared_ptr<Session>> live;
    {
      std::lock_guard tl(table_mu_);
      for (const auto& [id, s] : sessions_)
        if (s->status != Session::Status::Finished) live.push_back(s);
    }
    if (live.empty()) continue;
    bool stuck = std::all_of(live.begin(), live.end(), [](const auto& s) {
      if (s->status == Session::Status::Created) return true;  // waits for the sequential executor
      std::lock_guard sl(s->sig_mu);
      return s->status == Session::Status::Blocked && !s->signaled;
    });
    if (!stuck || epoch_ != seen) continue;
    reported = true;
    deadlock_at_ = Clock::now();
    std::string detail;
    for (const auto& s : live)
      detail += (detail.empty() ? "" : " ") + s->label + (s->status == Session::Status::Created ? ":queued" : ":blocked");
    log(cfg_.service, "deadlock", detail);
  }
}

std::optional<Clock::time_point> Engine::deadlock_detected() const {
  std::lock_guard lock(watch_mu_);
  return deadlock_at_;
}

std::optional<Value> Engine::global_read(std::string_view name) const {
  std::lock_guard lock(global_mu_);
  return globals_.lookup(name);
}

void Engine::global_write(const std::string& name, Value v) {
  std::lock_guard lock(global_mu_);
  globals_.set(name, std::move(v));
  ++epoch_;
}

Value Engine::global_add(const std::string& name, const Value& delta) {
  std::lock_guard lock(global_mu_);
  const Value* cur = globals_.find(name);
  Value result;
  if (const auto* d = std::get_if<std::int64_t>(&delta)) {
    std::int64_t base = 0;
    if (cur) {
      const auto* c = std::get_if<std::int64_t>(cur);
      if (!c) throw Fault(faults::kTypeFault, "add: '" + name + "' is " + variant_name(*cur));
      base = *c;
    }
    std::int64_t sum;
    if (__builtin_add_overflow(base, *d, &sum)) throw Fault(faults::kArithmeticFault, "add: overflow");
    result = sum;
  } else if (const auto* d = std::get_if<double>(&delta)) {
    double base = 0;
    if (cur) {
      const auto* c = std::get_if<double>(cur);
      if (!c) throw Fault(faults::kTypeFault, "add: '" + name + "' is " + variant_name(*cur));
      base = *c;
    }
    result = base + *d;
  } else {
    throw Fault(faults::kTypeFault, std::string("add: delta is ") + variant_name(delta));
  }
  globals_.set(name, result);
  ++epoch_;
  return result;
}

std::vector<SessionReport> Engine::stop(std::chrono::milliseconds grace) {
  if (stopped_) return sessions();
  if (!stopping_.exchange(true)) {
    log(cfg_.service, "engine-stop");
    std::vector<std::shared_ptr<Session>> all;
    {
      std::lock_guard lock(table_mu_);
      for (const auto& [id, s] : sessions_) all.push_back(s);
    }
    table_cv_.notify_all();
    watch_cv_.notify_all();
    for (auto& s : all) signal(*s);

    auto stuck = [&] {
      std::unique_lock lock(table_mu_);
      table_cv_.wait_for(lock, grace, [&] {
        return std::all_of(sessions_.begin(), sessions_.end(), [](const auto& kv) {
          return kv.second->status == Session::Status::Finished || kv.second->status == Session::Status::Created;
        });
      });
      std::vector<std::shared_ptr<Session>> out;
      for (const auto& [id, s] : sessions_)
        if (s->status == Session::Status::Running || s->status == Session::Status::Blocked) out.push_back(s);
      return out;
    }();
    for (auto& s : stuck) {
      {
        std::lock_guard lock(s->mu);
        s->interp->abandon();
      }
      log(s->label, "abandon");
      signal(*s);
    }

    if (executor_.joinable()) executor_.join();
    if (watchdog_.joinable()) watchdog_.join();
    std::vector<std::thread> threads;
    {
      std::lock_guard lock(table_mu_);
      threads.swap(threads_);
    }
    for (auto& t : threads) t.join();

    // Concurrent-mode sessions created but never scheduled cannot exist;
    // anything left unfinished here never ran.
    std::vector<std::shared_ptr<Session>> rest;
    {
      std::lock_guard lock(table_mu_);
      for (const auto& [id, s] : sessions_)
        if (s->status != Session::Status::Finished) rest.push_back(s);
    }
    for (auto& s : rest) {
      {
        std::lock_guard lock(s->mu);
        s->interp->abandon();
      }
      finish_session(*s);
    }
    {
      std::lock_guard lock(global_mu_);
      globals_ = State{};
    }
    storage_.reset();
    stopped_ = true;
  }
  return sessions();
}

bool Engine::wait_all_finished(std::chrono::milliseconds timeout) {
  std::unique_lock lock(table_mu_);
  return table_cv_.wait_for(lock, timeout, [&] { return finished_count_ == sessions_.size(); });
}

bool Engine::wait_finished(std::size_t n, std::chrono::milliseconds timeout) {
  std::unique_lock lock(table_mu_);
  return table_cv_.wait_for(lock, timeout, [&] { return finished_count_ >= n; });
}

std::vector<SessionReport> Engine::sessions() const {
  std::lock_guard lock(table_mu_);
  std::vector<SessionReport> out;
  for (const auto& [id, s] : sessions_) out.push_back({id, s->completion});
  return out;
}

std::size_t Engine::live_sessions() const {
  std::lock_guard lock(table_mu_);
  return sessions_.size() - finished_count_;
}

Engine::Counters Engine::counters() const {
  return {submitted_, delivered_, created_, queued_, rejected_};
}

}  // namespace orchestra
