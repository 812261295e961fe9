#include "orchestra/harness/reference.hpp"

#include <algorithm>
#include <deque>
#include <memory>
#include <optional>
#include <sstream>
#include <unordered_set>

#include "orchestra/errors.hpp"

namespace orchestra::harness {

bool operator<(const Outcome& a, const Outcome& b) {
  if (a.local.bindings() != b.local.bindings()) return a.local.bindings() < b.local.bindings();
  if (a.global.bindings() != b.global.bindings()) return a.global.bindings() < b.global.bindings();
  return a.completion < b.completion;
}

namespace {

enum class Phase { Body, Terminating, Handling, Failed };

struct Term;
using T = std::shared_ptr<const Term>;

// Leaf: an atomic activity (or an if/while/compensate not yet entered).
// Seq: kids[0] is child `index` of the sequence.
// Par: live branches in original order.
// Loop: a while body in progress.
// Comp: kids[0] is the running compensation handler; `agenda` the rest.
// Scope: kids[0] (if any) is the body, a termination handler, or the fault handler.
struct Term {
  enum Kind { Leaf, Seq, Par, Loop, Comp, Scope } kind;
  const Activity* act = nullptr;  // null for the root scope
  std::vector<T> kids;
  std::size_t index = 0;
  std::vector<const Activity*> agenda;
  Phase phase = Phase::Body;
  std::string pending;
};

T make(Term t) { return std::make_shared<const Term>(std::move(t)); }

T with_kid(const T& t, std::size_t i, T kid) {
  Term copy = *t;
  copy.kids[i] = std::move(kid);
  return make(std::move(copy));
}

struct Config {
  T root;
  State local, global, storage;
  std::vector<std::pair<std::string, const Activity*>> comps;
  std::deque<Message> mailbox;
  std::optional<Completion> done;
  std::size_t steps = 0;
};

struct Result {
  enum Kind { Cont, Done, Raised, Over } kind;
  T term;
  std::string fault;
};

Result cont(T t) { return {Result::Cont, std::move(t), {}}; }
Result done() { return {Result::Done, nullptr, {}}; }
Result raised(std::string f, T t) { return {Result::Raised, std::move(t), std::move(f)}; }
Result over() { return {Result::Over, nullptr, {}}; }

class Env : public EvalEnv {
 public:
  explicit Env(const Config& c) : c_(c) {}
  std::optional<Value> local(std::string_view n) const override { return c_.local.lookup(n); }
  std::optional<Value> global(std::string_view n) const override { return c_.global.lookup(n); }
  std::optional<Value> storage(std::string_view n) const override { return c_.storage.lookup(n); }

 private:
  const Config& c_;
};

bool as_condition(const Value& v) {
  if (const bool* b = std::get_if<bool>(&v)) return *b;
  throw Fault(faults::kTypeFault, "condition is not a bool");
}

// Starting an activity may finish it outright (empty seq/par, scope with an
// empty body); nullptr means "already done".
T start(const Activity* a, Config& c);

T start_seq_from(const Activity* a, std::size_t i, Config& c) {
  const auto& kids = a->as<act::Sequence>()->children;
  for (; i < kids.size(); ++i)
    if (T t = start(kids[i].get(), c)) return make({Term::Seq, a, {t}, i, {}, Phase::Body, {}});
  return nullptr;
}

T start(const Activity* a, Config& c) {
  if (a->as<act::Sequence>()) return start_seq_from(a, 0, c);
  if (const auto* p = a->as<act::Parallel>()) {
    std::vector<T> live;
    for (const auto& k : p->children)
      if (T t = start(k.get(), c)) live.push_back(t);
    if (live.empty()) return nullptr;
    return make({Term::Par, a, live, 0, {}, Phase::Body, {}});
  }
  if (const auto* s = a->as<act::Scope>()) {
    if (T body = start(s->body.get(), c)) return make({Term::Scope, a, {body}, 0, {}, Phase::Body, {}});
    if (s->on_compensate) c.comps.emplace_back(s->name, s->on_compensate.get());
    return nullptr;
  }
  return make({Term::Leaf, a, {}, 0, {}, Phase::Body, {}});
}

Result run_comp_agenda(std::vector<const Activity*> agenda, Config& c) {
  while (!agenda.empty()) {
    const Activity* h = agenda.front();
    agenda.erase(agenda.begin());
    if (T t = start(h, c)) return cont(make({Term::Comp, nullptr, {t}, 0, agenda, Phase::Body, {}}));
  }
  return done();
}

void collect_termination(const T& t, std::vector<const Activity*>& out) {
  for (const auto& k : t->kids) collect_termination(k, out);
  if (t->kind == Term::Scope && t->act && t->phase == Phase::Body) {
    if (const auto& h = t->act->as<act::Scope>()->on_terminate) out.push_back(h.get());
  }
}

Result finish_termination(Term s, Config& c) {
  s.kids.clear();
  if (!s.act) {
    c.done = Completion::failed(s.pending);
    return over();
  }
  const auto& handlers = s.act->as<act::Scope>()->fault_handlers;
  if (auto it = handlers.find(s.pending); it != handlers.end()) {
    s.phase = Phase::Handling;
    if (T h = start(it->second.get(), c)) {
      s.kids = {h};
      return cont(make(std::move(s)));
    }
    return done();
  }
  s.phase = Phase::Failed;
  std::string f = s.pending;
  return raised(f, make(std::move(s)));
}

Result next_termination(Term s, Config& c) {
  while (!s.agenda.empty()) {
    const Activity* h = s.agenda.front();
    s.agenda.erase(s.agenda.begin());
    if (T t = start(h, c)) {
      s.kids = {t};
      return cont(make(std::move(s)));
    }
  }
  return finish_termination(std::move(s), c);
}

Result catch_fault(const T& scope, const std::string& f, Config& c) {
  Term s = *scope;
  std::vector<const Activity*> agenda;
  for (const auto& k : s.kids) collect_termination(k, agenda);
  s.kids.clear();
  s.phase = Phase::Terminating;
  s.pending = f;
  s.agenda = std::move(agenda);
  return next_termination(std::move(s), c);
}

void store_under(State& local, const std::string& prefix, const State& payload) {
  for (const auto& [k, v] : payload) local.set(prefix + k, v);
}

Result exec_leaf(const T& leaf, Config& c) {
  const Activity& a = *leaf->act;
  try {
    if (a.as<act::Nil>()) return done();
    if (const auto* th = a.as<act::Throw>()) return raised(th->fault, leaf);
    if (const auto* as = a.as<act::Assign>()) {
      Value v = as->value.eval(Env(c));
      const std::string& t = as->target;
      if (t.rfind("global.", 0) == 0)
        c.global.set(t.substr(7), v);
      else if (t.rfind("storage.", 0) == 0)
        c.storage.set(t.substr(8), v);
      else
        c.local.set(t, v);
      return done();
    }
    if (const auto* i = a.as<act::If>()) {
      const Activity* branch = as_condition(i->cond.eval(Env(c))) ? i->then_branch.get() : i->else_branch.get();
      if (T t = start(branch, c)) return cont(t);
      return done();
    }
    if (const auto* w = a.as<act::While>()) {
      if (!as_condition(w->cond.eval(Env(c)))) return done();
      if (T t = start(w->body.get(), c)) return cont(make({Term::Loop, leaf->act, {t}, 0, {}, Phase::Body, {}}));
      return cont(leaf);
    }
    if (const auto* cp = a.as<act::Compensate>()) {
      std::vector<const Activity*> agenda;
      for (auto it = c.comps.rbegin(); it != c.comps.rend(); ++it)
        if (it->first == cp->target) agenda.push_back(it->second);
      std::erase_if(c.comps, [&](const auto& e) { return e.first == cp->target; });
      return run_comp_agenda(std::move(agenda), c);
    }
    if (const auto* r = a.as<act::Receive>()) {
      auto it = std::find_if(c.mailbox.begin(), c.mailbox.end(), [&](const Message& m) { return m.operation == r->op; });
      store_under(c.local, r->into, it->payload);
      c.mailbox.erase(it);
      return done();
    }
    if (const auto* n = a.as<act::Notify>()) {
      for (const auto& [field, e] : n->payload) e.eval(Env(c));
      return done();
    }
  } catch (const Fault& f) {
    return raised(f.name(), leaf);
  }
  throw Error(std::string("reference interpreter cannot run '") + a.kind() + "'");
}

// Applies the outcome `r` of kid `i` to its parent `t`.
Result absorb(const T& t, std::size_t i, Result r, Config& c) {
  if (r.kind == Result::Over) return r;
  switch (t->kind) {
    case Term::Leaf:
      break;
    case Term::Seq:
      if (r.kind == Result::Cont) return cont(with_kid(t, i, r.term));
      if (r.kind == Result::Raised) return raised(r.fault, with_kid(t, i, r.term));
      if (T next = start_seq_from(t->act, t->index + 1, c)) return cont(next);
      return done();
    case Term::Par: {
      if (r.kind == Result::Cont) return cont(with_kid(t, i, r.term));
      if (r.kind == Result::Raised) return raised(r.fault, with_kid(t, i, r.term));
      Term copy = *t;
      copy.kids.erase(copy.kids.begin() + static_cast<std::ptrdiff_t>(i));
      if (copy.kids.empty()) return done();
      return cont(make(std::move(copy)));
    }
    case Term::Loop:
      if (r.kind == Result::Cont) return cont(with_kid(t, i, r.term));
      if (r.kind == Result::Raised) return raised(r.fault, with_kid(t, i, r.term));
      return cont(make({Term::Leaf, t->act, {}, 0, {}, Phase::Body, {}}));
    case Term::Comp:
      if (r.kind == Result::Cont) return cont(with_kid(t, i, r.term));
      if (r.kind == Result::Raised) return raised(r.fault, with_kid(t, i, r.term));
      return run_comp_agenda(t->agenda, c);
    case Term::Scope:
      switch (t->phase) {
        case Phase::Body:
          if (r.kind == Result::Cont) return cont(with_kid(t, i, r.term));
          if (r.kind == Result::Raised) return catch_fault(with_kid(t, i, r.term), r.fault, c);
          if (!t->act) {
            c.done = Completion::success();
            return over();
          }
          if (const auto& h = t->act->as<act::Scope>()->on_compensate)
            c.comps.emplace_back(t->act->as<act::Scope>()->name, h.get());
          return done();
        case Phase::Terminating: {
          if (r.kind == Result::Cont) return cont(with_kid(t, i, r.term));
          Term copy = *t;
          if (r.kind == Result::Raised) copy.pending = faults::kHandlerFault;
          return next_termination(std::move(copy), c);
        }
        case Phase::Handling:
        case Phase::Failed:
          if (r.kind == Result::Cont) return cont(with_kid(t, i, r.term));
          if (r.kind == Result::Raised) return raised(r.fault, with_kid(t, i, r.term));
          return done();
      }
  }
  throw Error("reference interpreter: bad term");
}

using Path = std::vector<std::size_t>;

Result step_along(const T& t, const Path& path, std::size_t depth, Config& c) {
  if (depth == path.size()) return exec_leaf(t, c);
  std::size_t i = path[depth];
  return absorb(t, i, step_along(t->kids[i], path, depth + 1, c), c);
}

bool has_message(const Config& c, const std::string& op) {
  return std::any_of(c.mailbox.begin(), c.mailbox.end(), [&](const Message& m) { return m.operation == op; });
}

void runnable(const T& t, const Config& c, Path& here, std::vector<Path>& out) {
  if (t->kind == Term::Leaf) {
    if (const auto* r = t->act->as<act::Receive>(); r && !has_message(c, r->op)) return;
    out.push_back(here);
    return;
  }
  for (std::size_t i = 0; i < t->kids.size(); ++i) {
    here.push_back(i);
    runnable(t->kids[i], c, here, out);
    here.pop_back();
  }
}

void key_of(const T& t, std::ostringstream& os) {
  os << '(' << t->kind << ':' << static_cast<const void*>(t->act) << ':' << t->index << ':'
     << static_cast<int>(t->phase) << ':' << t->pending << ':';
  for (const Activity* a : t->agenda) os << static_cast<const void*>(a) << ',';
  for (const auto& k : t->kids) key_of(k, os);
  os << ')';
}

void key_of(const State& s, std::ostringstream& os) {
  for (const auto& [k, v] : s) os << k << '=' << v.index() << ':' << to_display(v) << ';';
  os << '|';
}

std::string key_of(const Config& c) {
  std::ostringstream os;
  os << c.steps << '|';
  key_of(c.root, os);
  key_of(c.local, os);
  key_of(c.global, os);
  key_of(c.storage, os);
  for (const auto& [n, a] : c.comps) os << n << '@' << static_cast<const void*>(a) << ',';
  os << '|' << c.mailbox.size();
  return os.str();
}

void check_supported(const Activity& a) {
  if (a.as<act::Reply>() || a.as<act::Solicit>())
    throw Error(std::string("reference interpreter cannot run '") + a.kind() + "'");
  std::visit(
      [](const auto& n) {
        using N = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<N, act::Sequence> || std::is_same_v<N, act::Parallel>) {
          for (const auto& k : n.children) check_supported(*k);
        } else if constexpr (std::is_same_v<N, act::If>) {
          check_supported(*n.then_branch);
          check_supported(*n.else_branch);
        } else if constexpr (std::is_same_v<N, act::While>) {
          check_supported(*n.body);
        } else if constexpr (std::is_same_v<N, act::Scope>) {
          check_supported(*n.body);
          for (const auto& [f, h] : n.fault_handlers) check_supported(*h);
          if (n.on_terminate) check_supported(*n.on_terminate);
          if (n.on_compensate) check_supported(*n.on_compensate);
        }
      },
      a.node);
}

}  // namespace

Enumeration enumerate_interleavings(const BehaviourDef& b, const std::vector<Message>& trace, std::size_t max_steps,
                                    std::size_t max_configs) {
  check_supported(*b.root);
  Enumeration out;
  Config init;
  init.mailbox.assign(trace.begin(), trace.end());
  {
    T body = start(b.root.get(), init);
    if (!body) {
      init.done = Completion::success();
    } else {
      init.root = make({Term::Scope, nullptr, {body}, 0, {}, Phase::Body, {}});
    }
  }

  std::vector<Config> stack{init};
  std::unordered_set<std::string> seen;
  while (!stack.empty()) {
    Config c = std::move(stack.back());
    stack.pop_back();
    if (c.done) {
      out.finals.insert({c.local, c.global, *c.done});
      continue;
    }
    if (!seen.insert(key_of(c)).second) continue;
    if (++out.explored > max_configs) throw BudgetExceeded("interleaving enumeration visited too many configurations");

    std::vector<Path> ready;
    Path here;
    runnable(c.root, c, here, ready);
    if (ready.empty()) {
      ++out.blocked;
      continue;
    }
    if (c.steps == max_steps) {
      ++out.pruned;
      continue;
    }
    for (const auto& p : ready) {
      Config next = c;
      ++next.steps;
      Result r = step_along(next.root, p, 0, next);
      if (r.kind == Result::Cont) next.root = r.term;
      stack.push_back(std::move(next));
    }
  }
  if (out.finals.empty() && out.blocked == 0)
    throw BudgetExceeded("no interleaving finished within " + std::to_string(max_steps) + " steps");
  return out;
}

}  // namespace orchestra::harness
