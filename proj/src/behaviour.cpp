#include "orchestra/behaviour.hpp"

#include <algorithm>

#include "orchestra/errors.hpp"
#include "orchestra/state_json.hpp"

namespace orchestra {

using nlohmann::json;

const char* Activity::kind() const noexcept {
  static constexpr const char* names[] = {"nil",      "assign", "receive", "reply", "notify",
                                          "solicit",  "seq",    "par",     "if",    "while",
                                          "throw",    "scope",  "compensate"};
  return names[node.index()];
}

ActivityPtr make_activity(decltype(Activity::node) node) {
  return std::make_shared<const Activity>(Activity{std::move(node)});
}

namespace {

[[noreturn]] void parse_fail(const std::string& msg) { throw ParseError("behaviour: " + msg); }

Expression parse_expr(const json& j) {
  if (j.is_string()) return Expression::parse(j.get<std::string>());
  if (j.is_number() || j.is_boolean()) return Expression::literal(value_from_json(j));
  parse_fail("expression must be a string, number or boolean, got " + j.dump());
}

std::string parse_name(const json& j, const char* what) {
  if (!j.is_string() || j.get<std::string>().empty()) parse_fail(std::string(what) + " must be a non-empty string");
  return j.get<std::string>();
}

const json& field(const json& obj, const char* key, const char* node) {
  if (!obj.is_object()) parse_fail(std::string("'") + node + "' expects an object");
  auto it = obj.find(key);
  if (it == obj.end()) parse_fail(std::string("'") + node + "' is missing '" + key + "'");
  return *it;
}

void only_keys(const json& obj, std::initializer_list<const char*> keys, const char* node) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; }))
      parse_fail(std::string("'") + node + "' has unknown key '" + it.key() + "'");
}

std::string parse_prefix(const json& obj) {
  auto it = obj.find("into");
  if (it == obj.end()) return "";
  if (!it->is_string()) parse_fail("'into' must be a string");
  std::string p = it->get<std::string>();
  if (!p.empty() && !is_var_name(p)) parse_fail("'into' prefix '" + p + "' is not a variable-name prefix");
  return p;
}

PayloadExprs parse_payload(const json& obj, const char* node) {
  if (!obj.is_object()) parse_fail(std::string("'") + node + "' payload must be an object");
  PayloadExprs out;
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!is_var_name(it.key())) parse_fail("payload field '" + it.key() + "' is not a valid name");
    out.emplace_back(it.key(), parse_expr(it.value()));
  }
  return out;
}

std::vector<ActivityPtr> parse_list(const json& j, const char* node) {
  if (!j.is_array()) parse_fail(std::string("'") + node + "' expects an array");
  std::vector<ActivityPtr> out;
  for (const auto& c : j) out.push_back(parse_activity(c));
  return out;
}

bool valid_target(const std::string& t) {
  for (std::string_view tier : {"global.", "storage."})
    if (t.compare(0, tier.size(), tier) == 0) return is_var_name(std::string_view(t).substr(tier.size()));
  return is_var_name(t);
}

}  // namespace

ActivityPtr parse_activity(const json& doc) {
  if (doc.is_string()) {
    if (doc.get<std::string>() == "nil") return make_activity(act::Nil{});
    parse_fail("unknown activity '" + doc.get<std::string>() + "'");
  }
  if (!doc.is_object() || doc.size() != 1) parse_fail("activity must be \"nil\" or a single-key object: " + doc.dump());
  const std::string& kind = doc.begin().key();
  const json& body = doc.begin().value();

  if (kind == "seq") return make_activity(act::Sequence{parse_list(body, "seq")});
  if (kind == "par") return make_activity(act::Parallel{parse_list(body, "par")});
  if (kind == "assign") {
    if (!body.is_array() || body.size() != 2) parse_fail("'assign' expects [target, expression]");
    std::string target = parse_name(body[0], "assign target");
    if (!valid_target(target)) parse_fail("invalid assign target '" + target + "'");
    return make_activity(act::Assign{std::move(target), parse_expr(body[1])});
  }
  if (kind == "if") {
    only_keys(body, {"cond", "then", "else"}, "if");
    ActivityPtr else_branch = body.contains("else") ? parse_activity(body["else"]) : make_activity(act::Nil{});
    return make_activity(
        act::If{parse_expr(field(body, "cond", "if")), parse_activity(field(body, "then", "if")), else_branch});
  }
  if (kind == "while") {
    only_keys(body, {"cond", "body"}, "while");
    return make_activity(act::While{parse_expr(field(body, "cond", "while")), parse_activity(field(body, "body", "while"))});
  }
  if (kind == "receive") {
    only_keys(body, {"op", "into"}, "receive");
    return make_activity(act::Receive{parse_name(field(body, "op", "receive"), "op"), parse_prefix(body)});
  }
  if (kind == "reply") {
    only_keys(body, {"op", "from"}, "reply");
    PayloadExprs from = body.contains("from") ? parse_payload(body["from"], "reply") : PayloadExprs{};
    return make_activity(act::Reply{parse_name(field(body, "op", "reply"), "op"), std::move(from)});
  }
  if (kind == "notify") {
    only_keys(body, {"port", "op", "payload"}, "notify");
    PayloadExprs payload = body.contains("payload") ? parse_payload(body["payload"], "notify") : PayloadExprs{};
    return make_activity(act::Notify{parse_name(field(body, "port", "notify"), "port"),
                                     parse_name(field(body, "op", "notify"), "op"), std::move(payload)});
  }
  if (kind == "solicit") {
    only_keys(body, {"port", "op", "payload", "into"}, "solicit");
    PayloadExprs payload = body.contains("payload") ? parse_payload(body["payload"], "solicit") : PayloadExprs{};
    return make_activity(act::Solicit{parse_name(field(body, "port", "solicit"), "port"),
                                      parse_name(field(body, "op", "solicit"), "op"), std::move(payload),
                                      parse_prefix(body)});
  }
  if (kind == "throw") return make_activity(act::Throw{parse_name(body, "fault name")});
  if (kind == "compensate") return make_activity(act::Compensate{parse_name(body, "scope name")});
  if (kind == "scope") {
    only_keys(body, {"name", "body", "faults", "onTerminate", "onCompensate"}, "scope");
    act::Scope s;
    s.name = parse_name(field(body, "name", "scope"), "scope name");
    s.body = parse_activity(field(body, "body", "scope"));
    if (auto it = body.find("faults"); it != body.end()) {
      if (!it->is_object()) parse_fail("'faults' must map fault names to activities");
      for (auto f = it->begin(); f != it->end(); ++f) s.fault_handlers.emplace(f.key(), parse_activity(f.value()));
    }
    if (auto it = body.find("onTerminate"); it != body.end()) s.on_terminate = parse_activity(*it);
    if (auto it = body.find("onCompensate"); it != body.end()) s.on_compensate = parse_activity(*it);
    return make_activity(std::move(s));
  }
  parse_fail("unknown activity kind '" + kind + "'");
}

BehaviourDef parse_behaviour(const json& doc) {
  BehaviourDef def;
  if (doc.is_object() && doc.contains("root")) {
    only_keys(doc, {"root", "firing", "initiators"}, "behaviour");
    def.root = parse_activity(doc["root"]);
    if (auto it = doc.find("firing"); it != doc.end()) {
      if (!it->is_boolean()) parse_fail("'firing' must be a boolean");
      def.firing = it->get<bool>();
    }
    if (auto it = doc.find("initiators"); it != doc.end()) {
      if (!it->is_array()) parse_fail("'initiators' must be an array");
      for (const auto& op : *it) def.initiators.insert(parse_name(op, "initiator"));
    }
  } else {
    def.root = parse_activity(doc);
    def.firing = true;
  }
  validate_behaviour(def);
  return def;
}

// ---------------------------------------------------------------- validation

namespace {

struct Flow {
  std::set<std::string> received;  // definitely received on every path so far
  std::set<std::string> pending;   // request-response receives definitely awaiting reply
};

std::set<std::string> intersect(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::set<std::string> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::inserter(out, out.end()));
  return out;
}

class Validator {
 public:
  explicit Validator(const Activity& root) : replied_(collect_operation_use(root).replied) {}

  Flow run(const Activity& a, Flow in, std::vector<std::string>& scopes) {
    return std::visit([&](const auto& n) { return visit(n, std::move(in), scopes); }, a.node);
  }

 private:
  [[noreturn]] static void fail(const std::string& msg) { throw ValidationError("behaviour: " + msg); }

  template <class T>
  Flow visit(const T&, Flow in, std::vector<std::string>&) {
    return in;
  }

  Flow visit(const act::Receive& r, Flow in, std::vector<std::string>&) {
    if (replied_.count(r.op)) {
      if (in.pending.count(r.op)) fail("second receive on '" + r.op + "' before its reply");
      in.pending.insert(r.op);
    }
    in.received.insert(r.op);
    return in;
  }

  Flow visit(const act::Reply& r, Flow in, std::vector<std::string>&) {
    if (!in.received.count(r.op)) fail("reply on '" + r.op + "' is not dominated by a receive on it");
    in.pending.erase(r.op);
    return in;
  }

  Flow visit(const act::Sequence& s, Flow in, std::vector<std::string>& scopes) {
    for (const auto& c : s.children) in = run(*c, std::move(in), scopes);
    return in;
  }

  Flow visit(const act::Parallel& p, Flow in, std::vector<std::string>& scopes) {
    Flow out = in;
    std::set<std::string> removed, added;
    for (const auto& c : p.children) {
      Flow b = run(*c, in, scopes);
      out.received.insert(b.received.begin(), b.received.end());
      for (const auto& op : in.pending)
        if (!b.pending.count(op)) removed.insert(op);
      for (const auto& op : b.pending)
        if (!in.pending.count(op)) added.insert(op);
    }
    for (const auto& op : removed) out.pending.erase(op);
    out.pending.insert(added.begin(), added.end());
    return out;
  }

  Flow visit(const act::If& i, Flow in, std::vector<std::string>& scopes) {
    Flow t = run(*i.then_branch, in, scopes);
    Flow e = run(*i.else_branch, in, scopes);
    return Flow{intersect(t.received, e.received), intersect(t.pending, e.pending)};
  }

  Flow visit(const act::While& w, Flow in, std::vector<std::string>& scopes) {
    Flow once = run(*w.body, in, scopes);
    Flow again = once;
    again.received.insert(in.received.begin(), in.received.end());
    run(*w.body, again, scopes);
    return in;
  }

  Flow visit(const act::Scope& s, Flow in, std::vector<std::string>& scopes) {
    if (std::find(scopes.begin(), scopes.end(), s.name) != scopes.end())
      fail("scope name '" + s.name + "' repeats along a nesting path");
    scopes.push_back(s.name);
    Flow out = run(*s.body, in, scopes);
    for (const auto& [fault, h] : s.fault_handlers) {
      Flow hf = run(*h, in, scopes);
      out = Flow{intersect(out.received, hf.received), intersect(out.pending, hf.pending)};
    }
    if (s.on_terminate) run(*s.on_terminate, in, scopes);
    if (s.on_compensate) run(*s.on_compensate, Flow{}, scopes);
    scopes.pop_back();
    return out;
  }

  std::set<std::string> replied_;
};

void collect(const Activity& a, OperationUse& use);

struct UseVisitor {
    OperationUse& use;
    void operator()(const act::Receive& r) { use.received.insert(r.op); }
    void operator()(const act::Reply& r) { use.replied.insert(r.op); }
    void operator()(const act::Notify& n) { use.notified.emplace(n.port, n.op); }
    void operator()(const act::Solicit& s) { use.solicited.emplace(s.port, s.op); }
    void operator()(const act::Sequence& s) {
      for (const auto& c : s.children) collect(*c, use);
    }
    void operator()(const act::Parallel& p) {
      for (const auto& c : p.children) collect(*c, use);
    }
    void operator()(const act::If& i) {
      collect(*i.then_branch, use);
      collect(*i.else_branch, use);
    }
    void operator()(const act::While& w) { collect(*w.body, use); }
    void operator()(const act::Scope& s) {
      collect(*s.body, use);
      for (const auto& [f, h] : s.fault_handlers) collect(*h, use);
      if (s.on_terminate) collect(*s.on_terminate, use);
      if (s.on_compensate) collect(*s.on_compensate, use);
    }
  template <class T>
  void operator()(const T&) {}
};

void collect(const Activity& a, OperationUse& use) { std::visit(UseVisitor{use}, a.node); }

}  // namespace

OperationUse collect_operation_use(const Activity& root) {
  OperationUse use;
  collect(root, use);
  return use;
}

void validate_behaviour(const BehaviourDef& def) {
  if (!def.root) throw ValidationError("behaviour: missing root activity");
  if (!def.firing && def.initiators.empty())
    throw ValidationError("behaviour: not firing and no initiator operations, no session could ever start");
  std::vector<std::string> scopes;
  Validator(*def.root).run(*def.root, Flow{}, scopes);
}

}  // namespace orchestra
