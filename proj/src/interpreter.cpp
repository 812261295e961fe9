#include "orchestra/interpreter.hpp"

#include <algorithm>
#include <cassert>

#include "orchestra/errors.hpp"

namespace orchestra {

std::string Completion::to_string() const {
  switch (kind) {
    case Kind::Success: return "success";
    case Kind::Fault: return "fault(" + fault + ")";
    case Kind::Terminated: return "terminated";
  }
  return "?";
}

// ---------------------------------------------------------------- SolicitTicket

void SolicitTicket::complete(State payload) {
  {
    std::lock_guard lock(mu_);
    if (ready_) return;
    ready_ = true;
    payload_ = std::move(payload);
  }
  finish();
}

void SolicitTicket::fail(std::string fault) {
  {
    std::lock_guard lock(mu_);
    if (ready_) return;
    ready_ = true;
    fault_ = std::move(fault);
  }
  finish();
}

void SolicitTicket::finish() {
  if (wake_) wake_();
}

bool SolicitTicket::ready() const {
  std::lock_guard lock(mu_);
  return ready_;
}

State SolicitTicket::take() {
  std::lock_guard lock(mu_);
  assert(ready_);
  if (!payload_) throw Fault(fault_);
  return std::move(*payload_);
}

// ---------------------------------------------------------------- nodes

struct Interpreter::Node {
  enum class Phase { Body, Terminating, Handling, Failed };

  std::uint64_t id = 0;
  Node* parent = nullptr;
  const Activity* act = nullptr;  // null only for the root
  std::vector<std::unique_ptr<Node>> kids;
  std::size_t index = 0;  // sequence position / agenda position
  std::size_t live = 0;   // parallel: children still running
  bool entered = false;   // if/while: branch running; compensate: snapshot taken; solicit: request sent
  bool dead = false;

  // Scope and root bookkeeping.
  Phase phase = Phase::Body;
  std::string pending;
  std::vector<const Activity*> agenda;

  std::shared_ptr<SolicitTicket> ticket;

  const act::Scope* scope() const { return act ? act->as<act::Scope>() : nullptr; }
  bool scope_like() const { return act == nullptr || scope() != nullptr; }

  bool is_leaf() const {
    if (!act) return false;
    switch (act->node.index()) {
      case 0: case 1: case 2: case 3: case 4: case 5: case 10: return true;  // atomic kinds
      case 8: case 9: case 12: return !entered;  // if, while, compensate before they expand
      default: return false;
    }
  }
};

namespace {

class SessionEnv : public EvalEnv {
 public:
  SessionEnv(const State& local, const SessionContext& ctx) : local_(local), ctx_(ctx) {}
  std::optional<Value> local(std::string_view n) const override { return local_.lookup(n); }
  std::optional<Value> global(std::string_view n) const override { return ctx_.read_global(n); }
  std::optional<Value> storage(std::string_view n) const override { return ctx_.read_storage(n); }
  std::optional<std::string> caller(std::string_view op) const override { return ctx_.caller(op); }

 private:
  const State& local_;
  const SessionContext& ctx_;
};

bool truth(const Value& v) {
  if (auto* b = std::get_if<bool>(&v)) return *b;
  throw Fault(faults::kTypeFault, std::string("condition must be bool, got ") + variant_name(v));
}

}  // namespace

namespace {
void mark_dead(Interpreter::Node* n) {
  n->dead = true;
  for (auto& k : n->kids)
    if (k) mark_dead(k.get());
}

void collect_termination(const Interpreter::Node* n, std::vector<const Activity*>& agenda) {
  if (!n) return;
  for (const auto& k : n->kids) collect_termination(k.get(), agenda);
  const act::Scope* s = n->scope();
  if (s && n->phase == Interpreter::Node::Phase::Body && s->on_terminate) agenda.push_back(s->on_terminate.get());
}
}  // namespace

// ---------------------------------------------------------------- Interpreter

Interpreter::Interpreter(std::shared_ptr<const BehaviourDef> def, State initial, std::uint64_t seed)
    : def_(std::move(def)), local_(std::move(initial)), rng_(seed) {
  root_ = std::make_unique<Node>();
  root_->id = next_id_++;
  root_->kids.push_back(spawn(def_->root.get(), root_.get()));
  activate(root_->kids[0].get());
}

Interpreter::~Interpreter() = default;

std::unique_ptr<Interpreter::Node> Interpreter::spawn(const Activity* a, Node* parent) {
  auto n = std::make_unique<Node>();
  n->id = next_id_++;
  n->parent = parent;
  n->act = a;
  return n;
}

void Interpreter::bury(std::unique_ptr<Node>& slot) {
  if (!slot) return;
  mark_dead(slot.get());
  graveyard_.push_back(std::move(slot));
}

void Interpreter::activate(Node* n) {
  if (const auto* seq = n->act->as<act::Sequence>()) {
    if (seq->children.empty()) return finish(n);
    n->kids.push_back(spawn(seq->children[0].get(), n));
    activate(n->kids[0].get());
  } else if (const auto* par = n->act->as<act::Parallel>()) {
    if (par->children.empty()) return finish(n);
    for (const auto& c : par->children) n->kids.push_back(spawn(c.get(), n));
    n->live = n->kids.size();
    for (std::size_t i = 0; i < n->kids.size() && !n->dead; ++i)
      if (Node* k = n->kids[i].get()) activate(k);
  } else if (const auto* sc = n->act->as<act::Scope>()) {
    n->kids.push_back(spawn(sc->body.get(), n));
    activate(n->kids[0].get());
  }
}

void Interpreter::finish(Node* n) {
  assert(n->parent);
  child_done(n->parent, n);
}

void Interpreter::child_done(Node* p, Node* c) {
  if (p->scope_like()) {
    bury(p->kids[0]);
    switch (p->phase) {
      case Node::Phase::Body:
        if (const auto* sc = p->scope(); sc && sc->on_compensate)
          compensations_.emplace_back(sc->name, sc->on_compensate.get());
        if (p == root_.get()) return complete_root(Completion::success());
        return finish(p);
      case Node::Phase::Terminating:
        ++p->index;
        return start_agenda(p);
      case Node::Phase::Handling:
        return finish(p);
      case Node::Phase::Failed:
        return;
    }
  }
  if (const auto* seq = p->act->as<act::Sequence>()) {
    bury(p->kids[0]);
    if (++p->index < seq->children.size()) {
      p->kids[0] = spawn(seq->children[p->index].get(), p);
      activate(p->kids[0].get());
    } else {
      finish(p);
    }
  } else if (p->act->as<act::Parallel>()) {
    for (auto& k : p->kids)
      if (k.get() == c) bury(k);
    if (--p->live == 0) finish(p);
  } else if (p->act->as<act::If>()) {
    bury(p->kids[0]);
    p->kids.clear();
    finish(p);
  } else if (p->act->as<act::While>()) {
    bury(p->kids[0]);
    p->kids.clear();
    p->entered = false;
  } else if (p->act->as<act::Compensate>()) {
    bury(p->kids[0]);
    if (++p->index < p->agenda.size()) {
      p->kids[0] = spawn(p->agenda[p->index], p);
      activate(p->kids[0].get());
    } else {
      finish(p);
    }
  }
}

void Interpreter::kill_child(Node* parent, std::size_t index, const std::string& fault, SessionContext& ctx) {
  Node* victim = parent->kids[index].get();
  if (!victim) return;
  for (auto it = pending_.begin(); it != pending_.end();) {
    if (std::find(it->second.begin(), it->second.end(), victim->id) != it->second.end()) {
      ctx.abort_reply(it->first, fault);
      it = pending_.erase(it);
    } else {
      ++it;
    }
  }
  bury(parent->kids[index]);
}

void Interpreter::raise(const std::string& fault, Node* origin, SessionContext& ctx) {
  ctx.trace("fault", fault);
  for (Node* n = origin->parent; n; n = n->parent) {
    if (!n->scope_like()) continue;
    if (n->phase == Node::Phase::Body) return catch_fault(n, fault, ctx);
    if (n->phase == Node::Phase::Terminating) {
      // A termination handler failed; the remaining ones still run.
      n->pending = faults::kHandlerFault;
      kill_child(n, 0, faults::kHandlerFault, ctx);
      ++n->index;
      return start_agenda(n);
    }
    // Handling or Failed: the fault escapes this scope too.
  }
  complete_root(Completion::failed(fault));
}

void Interpreter::catch_fault(Node* scope, const std::string& fault, SessionContext& ctx) {
  std::vector<const Activity*> agenda;
  if (!scope->kids.empty()) collect_termination(scope->kids[0].get(), agenda);
  if (!scope->kids.empty()) kill_child(scope, 0, fault, ctx);
  scope->kids.resize(1);
  scope->phase = Node::Phase::Terminating;
  scope->pending = fault;
  scope->agenda = std::move(agenda);
  scope->index = 0;
  start_agenda(scope);
}

void Interpreter::start_agenda(Node* scope) {
  if (scope->index < scope->agenda.size()) {
    scope->kids[0] = spawn(scope->agenda[scope->index], scope);
    activate(scope->kids[0].get());
  } else {
    finish_termination(scope, ctx_);
  }
}

void Interpreter::finish_termination(Node* scope, SessionContext* ctx) {
  if (scope == root_.get()) {
    return complete_root(stopping_ ? Completion::terminated() : Completion::failed(scope->pending));
  }
  const act::Scope* sc = scope->scope();
  if (auto it = sc->fault_handlers.find(scope->pending); it != sc->fault_handlers.end()) {
    scope->phase = Node::Phase::Handling;
    scope->kids[0] = spawn(it->second.get(), scope);
    activate(scope->kids[0].get());
    return;
  }
  scope->phase = Node::Phase::Failed;
  raise(scope->pending, scope, *ctx);
}

void Interpreter::complete_root(Completion c) {
  if (completion_) return;
  completion_ = std::move(c);
  for (auto& k : root_->kids) bury(k);
}

std::vector<Interpreter::Thread> Interpreter::runnable(const SessionContext& ctx) const {
  std::vector<Thread> out;
  if (finished()) return out;
  auto visit = [&](auto&& self, const Node* n) -> void {
    if (!n) return;
    if (n->is_leaf()) {
      if (const auto* r = n->act->as<act::Receive>()) {
        if (ctx.has_message(r->op)) out.push_back(n);
      } else if (n->act->as<act::Solicit>() && n->entered) {
        if (n->ticket->ready()) out.push_back(n);
      } else {
        out.push_back(n);
      }
      return;
    }
    for (const auto& k : n->kids) self(self, k.get());
  };
  visit(visit, root_.get());
  return out;
}

void Interpreter::step(Thread t, SessionContext& ctx) {
  Node* leaf = const_cast<Node*>(t);
  assert(leaf && !leaf->dead && leaf->is_leaf());
  ctx_ = &ctx;
  ++steps_;
  ctx.trace("step", leaf->act->kind());
  try {
    exec(leaf, ctx);
  } catch (const Fault& f) {
    raise(f.name(), leaf, ctx);
  }
  graveyard_.clear();
  ctx_ = nullptr;
}

namespace {
State eval_payload(const PayloadExprs& exprs, const EvalEnv& env) {
  State out;
  for (const auto& [field, e] : exprs) out.set(field, e.eval(env));
  return out;
}

void store_under(State& local, const std::string& prefix, const State& payload) {
  for (const auto& [k, v] : payload) local.set(prefix + k, v);
}

std::vector<std::uint64_t> ancestry(const Interpreter::Node* n) {
  std::vector<std::uint64_t> ids;
  for (n = n->parent; n; n = n->parent) ids.push_back(n->id);
  return ids;
}
}  // namespace

void Interpreter::exec(Node* leaf, SessionContext& ctx) {
  SessionEnv env(local_, ctx);
  const Activity& a = *leaf->act;

  if (a.as<act::Nil>()) return finish(leaf);

  if (const auto* as = a.as<act::Assign>()) {
    std::string_view target = as->target;
    if (target.rfind("global.", 0) == 0) {
      std::string name(target.substr(7));
      ctx.atomically([&] { ctx.write_global(name, as->value.eval(env)); });
    } else if (target.rfind("storage.", 0) == 0) {
      std::string name(target.substr(8));
      ctx.atomically([&] { ctx.write_storage(name, as->value.eval(env)); });
    } else {
      local_.set(as->target, as->value.eval(env));
    }
    return finish(leaf);
  }

  if (const auto* th = a.as<act::Throw>()) return raise(th->fault, leaf, ctx);

  if (const auto* i = a.as<act::If>()) {
    const Activity* branch = truth(i->cond.eval(env)) ? i->then_branch.get() : i->else_branch.get();
    leaf->entered = true;
    leaf->kids.push_back(spawn(branch, leaf));
    return activate(leaf->kids[0].get());
  }

  if (const auto* w = a.as<act::While>()) {
    if (!truth(w->cond.eval(env))) return finish(leaf);
    leaf->entered = true;
    leaf->kids.push_back(spawn(w->body.get(), leaf));
    return activate(leaf->kids[0].get());
  }

  if (const auto* c = a.as<act::Compensate>()) {
    leaf->entered = true;
    for (auto it = compensations_.rbegin(); it != compensations_.rend(); ++it)
      if (it->first == c->target) leaf->agenda.push_back(it->second);
    std::erase_if(compensations_, [&](const auto& e) { return e.first == c->target; });
    if (leaf->agenda.empty()) return finish(leaf);
    leaf->kids.push_back(spawn(leaf->agenda[0], leaf));
    return activate(leaf->kids[0].get());
  }

  if (const auto* r = a.as<act::Receive>()) {
    Received got = ctx.take_message(r->op);
    store_under(local_, r->into, got.message.payload);
    if (got.needs_reply) pending_[r->op] = ancestry(leaf);
    return finish(leaf);
  }

  if (const auto* r = a.as<act::Reply>()) {
    State payload = eval_payload(r->from, env);
    ctx.reply(r->op, payload);
    pending_.erase(r->op);
    return finish(leaf);
  }

  if (const auto* n = a.as<act::Notify>()) {
    ctx.notify(n->port, n->op, eval_payload(n->payload, env));
    return finish(leaf);
  }

  if (const auto* s = a.as<act::Solicit>()) {
    if (!leaf->entered) {
      leaf->ticket = ctx.solicit(s->port, s->op, eval_payload(s->payload, env));
      leaf->entered = true;
      return;
    }
    State response = leaf->ticket->take();
    store_under(local_, s->into, response);
    return finish(leaf);
  }
}

std::size_t Interpreter::run(SessionContext& ctx, std::size_t max_steps) {
  std::size_t taken = 0;
  while (!finished() && taken < max_steps) {
    auto ready = runnable(ctx);
    if (ready.empty()) break;
    step(ready[ready.size() == 1 ? 0 : rng_() % ready.size()], ctx);
    ++taken;
  }
  return taken;
}

void Interpreter::terminate(SessionContext& ctx) {
  if (finished() || stopping_) return;
  stopping_ = true;
  ctx_ = &ctx;
  ctx.trace("terminate", "");
  if (root_->phase == Node::Phase::Body) catch_fault(root_.get(), faults::kTerminated, ctx);
  graveyard_.clear();
  ctx_ = nullptr;
}

void Interpreter::abandon() {
  if (!finished()) complete_root(Completion::terminated());
  graveyard_.clear();
}

// ---------------------------------------------------------------- LocalContext

bool LocalContext::has_message(const std::string& op) const {
  return std::any_of(mailbox.begin(), mailbox.end(), [&](const Message& m) { return m.operation == op; });
}

Received LocalContext::take_message(const std::string& op) {
  auto it = std::find_if(mailbox.begin(), mailbox.end(), [&](const Message& m) { return m.operation == op; });
  if (it == mailbox.end()) throw Fault(faults::kProtocolFault, "no message on " + op);
  bool rr = request_response.count(op) > 0;
  if (rr && !awaiting_.insert(op).second) throw Fault(faults::kProtocolFault, "second receive on " + op);
  Received r{std::move(*it), rr};
  mailbox.erase(it);
  return r;
}

void LocalContext::reply(const std::string& op, const State& payload) {
  if (!awaiting_.erase(op)) throw Fault(faults::kProtocolFault, "no pending request on " + op);
  outputs.push_back({"reply", "", op, payload, ""});
}

void LocalContext::abort_reply(const std::string& op, const std::string& fault) {
  awaiting_.erase(op);
  outputs.push_back({"abort", "", op, {}, fault});
}

void LocalContext::notify(const std::string& port, const std::string& op, const State& payload) {
  outputs.push_back({"notify", port, op, payload, ""});
}

std::shared_ptr<SolicitTicket> LocalContext::solicit(const std::string& port, const std::string& op,
                                                     const State& payload) {
  outputs.push_back({"solicit", port, op, payload, ""});
  auto ticket = std::make_shared<SolicitTicket>();
  if (!responder) {
    ticket->fail(faults::kIoFault);
    return ticket;
  }
  try {
    ticket->complete(responder(port, op, payload));
  } catch (const Fault& f) {
    ticket->fail(f.name());
  }
  return ticket;
}

std::optional<std::string> LocalContext::caller(std::string_view op) const {
  if (awaiting_.count(std::string(op))) return std::string("local");
  return std::nullopt;
}

}  // namespace orchestra
