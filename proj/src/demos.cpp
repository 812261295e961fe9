#include "orchestra/demos.hpp"

#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "orchestra/container.hpp"
#include "orchestra/errors.hpp"
#include "orchestra/state_json.hpp"

namespace orchestra::demos {

using nlohmann::json;
using namespace std::chrono_literals;
using Clock = std::chrono::steady_clock;
using Vars = std::map<std::string, std::string>;

namespace {

// ---------------------------------------------------------------- documents

const char* kCalc = R"J({"name": "calc",
  "interface": {"eval": {"kind": "RequestResponse",
                         "request": {"op": "string", "a": "int", "b": "int"}, "response": {"r": "int"}}},
  "engine": {"initiators": ["eval"]},
  "behaviour": {"seq": [
    {"receive": {"op": "eval"}},
    {"if": {"cond": "op == 'add'", "then": {"assign": ["r", "a + b"]},
     "else": {"if": {"cond": "op == 'mul'", "then": {"assign": ["r", "a * b"]},
      "else": {"if": {"cond": "op == 'div'", "then": {"assign": ["r", "a / b"]},
       "else": {"throw": "UnknownOperator"}}}}}}},
    {"reply": {"op": "eval", "from": {"r": "r"}}}]},
  "inputPorts": [{"name": "in", "location": "${CALC}", "interface": ["eval"]}]})J";

const char* kAbout = R"J({"name": "about",
  "interface": {"about": {"kind": "RequestResponse", "response": {"version": "string"}}},
  "engine": {"initiators": ["about"]},
  "behaviour": {"seq": [{"receive": {"op": "about"}}, {"reply": {"op": "about", "from": {"version": "'1.0'"}}}]},
  "inputPorts": [{"name": "in", "location": "local://about", "interface": ["about"]}]})J";

const char* kSquareRR = R"J({"name": "B",
  "interface": {"square": {"kind": "RequestResponse", "request": {"x": "int"}, "response": {"y": "int"}}},
  "engine": {"initiators": ["square"]},
  "behaviour": {"seq": [{"receive": {"op": "square"}}, {"reply": {"op": "square", "from": {"y": "x * x + 1"}}}]},
  "inputPorts": [{"name": "in", "location": "socket://127.0.0.1:0", "interface": ["square"]}]})J";

const char* kClientRR = R"J({"name": "A",
  "interface": {"square": {"kind": "SolicitResponse", "request": {"x": "int"}, "response": {"y": "int"}}},
  "engine": {"firing": true},
  "behaviour": {"seq": [{"solicit": {"port": "B", "op": "square", "payload": {"x": "7"}, "into": "res_"}},
                        {"assign": ["global.result", "res_y"]}]},
  "outputPorts": [{"name": "B", "location": "${B}", "interface": ["square"]}]})J";

const char* kSquareCB = R"J({"name": "B",
  "interface": {"request": {"kind": "OneWay", "request": {"x": "int", "cid": "int"}},
                "callback": {"kind": "Notification", "request": {"y": "int", "cid": "int"}}},
  "engine": {"initiators": ["request"]},
  "behaviour": {"seq": [{"receive": {"op": "request"}},
                        {"notify": {"port": "Back", "op": "callback", "payload": {"y": "x * x + 1", "cid": "cid"}}}]},
  "inputPorts": [{"name": "in", "location": "socket://127.0.0.1:0", "interface": ["request"]}],
  "outputPorts": [{"name": "Back", "location": "${A}", "interface": ["callback"]}]})J";

const char* kClientCB = R"J({"name": "A",
  "interface": {"request": {"kind": "Notification", "request": {"x": "int", "cid": "int"}},
                "callback": {"kind": "OneWay", "request": {"y": "int", "cid": "int"}}},
  "correlation": {"callback": {"cid": "cid"}},
  "engine": {"firing": true},
  "behaviour": {"seq": [{"assign": ["cid", "1"]},
                        {"notify": {"port": "B", "op": "request", "payload": {"x": "7", "cid": "cid"}}},
                        {"receive": {"op": "callback"}},
                        {"assign": ["global.result", "y"]}]},
  "inputPorts": [{"name": "in", "location": "${A}", "interface": ["callback"]}],
  "outputPorts": [{"name": "B", "location": "${B}", "interface": ["request"]}]})J";

const char* kShop = R"J({"name": "shop",
  "interface": {"get": {"kind": "RequestResponse", "request": {"user": "string"}, "response": {"token": "string"}},
                "post": {"kind": "RequestResponse", "request": {"token": "string", "item": "string"},
                         "response": {"user": "string", "item": "string"}}},
  "correlation": {"post": {"token": "token"}},
  "engine": {"initiators": ["get"]},
  "behaviour": {"seq": [{"receive": {"op": "get"}},
                        {"assign": ["global.visits", "(global.visits ?? 0) + 1"]},
                        {"assign": ["token", "'tok' + str(global.visits)"]},
                        {"reply": {"op": "get", "from": {"token": "token"}}},
                        {"receive": {"op": "post"}},
                        {"reply": {"op": "post", "from": {"user": "user", "item": "item"}}}]},
  "inputPorts": [{"name": "web", "location": "socket://127.0.0.1:0", "interface": ["get", "post"]}]})J";

// Repository: answers `fetch` with a stored service document. The documents
// live in the engine globals.
const char* kRepo = R"J({"name": "repo",
  "interface": {"fetch": {"kind": "RequestResponse", "request": {"name": "string", "version": "int"},
                          "response": {"service": "string"}}},
  "engine": {"initiators": ["fetch"]},
  "behaviour": {"seq": [{"receive": {"op": "fetch"}},
                        {"if": {"cond": "version == 2",
                                "then": {"reply": {"op": "fetch", "from": {"service": "global.v2"}}},
                                "else": {"reply": {"op": "fetch", "from": {"service": "global.v1"}}}}}]},
  "inputPorts": [{"name": "in", "location": "socket://127.0.0.1:0", "interface": ["fetch"]}]})J";

const char* kSlave = R"J({"name": "slave",
  "interface": {"work": {"kind": "RequestResponse", "request": {"x": "int"}, "response": {"y": "int"}}},
  "engine": {"initiators": ["work"]},
  "behaviour": {"seq": [{"receive": {"op": "work"}}, {"reply": {"op": "work", "from": {"y": "x * 10"}}}]},
  "inputPorts": [{"name": "in", "location": "local://${as}", "interface": ["work"]}]})J";

const char* kSlaveMaster = R"J({"name": "M",
  "interface": {"fetch": {"kind": "SolicitResponse", "request": {"name": "string", "version": "int"},
                          "response": {"service": "string"}},
                "embed": {"kind": "SolicitResponse", "request": {"service": "string", "as": "string"},
                          "response": {"name": "string"}},
                "work": {"kind": "SolicitResponse", "request": {"x": "int"}, "response": {"y": "int"}}},
  "engine": {"firing": true},
  "behaviour": {"seq": [
    {"solicit": {"port": "Repo", "op": "fetch", "payload": {"name": "'slave'", "version": "1"}, "into": "f_"}},
    {"solicit": {"port": "Runtime", "op": "embed", "payload": {"service": "f_service", "as": "'S'"}, "into": "e_"}},
    {"solicit": {"port": "Slave", "op": "work", "payload": {"x": "4"}, "into": "w_"}},
    {"assign": ["global.result", "w_y"]}]},
  "outputPorts": [{"name": "Repo", "location": "${REPO}", "interface": ["fetch"]},
                  {"name": "Runtime", "location": "local://runtime", "interface": ["embed"]},
                  {"name": "Slave", "location": "local://S", "interface": ["work"]}]})J";

const char* kFlow = R"J({"name": "flow",
  "interface": {"eval": {"kind": "SolicitResponse", "request": {"op": "string", "a": "int", "b": "int"},
                         "response": {"r": "int"}},
                "report": {"kind": "Notification", "request": {"value": "int", "flow": "string"}}},
  "engine": {"firing": true},
  "behaviour": {"seq": [
    {"solicit": {"port": "W", "op": "eval", "payload": {"op": "'${OP}'", "a": "6", "b": "7"}, "into": "c_"}},
    {"notify": {"port": "Loader", "op": "report", "payload": {"value": "c_r", "flow": "'${OP}'"}}}]},
  "outputPorts": [{"name": "W", "location": "${W}", "interface": ["eval"]},
                  {"name": "Loader", "location": "local://loader", "interface": ["report"]}]})J";

const char* kLoader = R"J({"name": "loader",
  "interface": {"fetch": {"kind": "SolicitResponse", "request": {"name": "string", "version": "int"},
                          "response": {"service": "string"}},
                "embed": {"kind": "SolicitResponse", "request": {"service": "string", "as": "string"},
                          "response": {"name": "string"}},
                "unembed": {"kind": "SolicitResponse", "request": {"name": "string"}},
                "report": {"kind": "OneWay", "request": {"value": "int", "flow": "string"}}},
  "engine": {"firing": true},
  "behaviour": {"seq": [
    {"solicit": {"port": "Repo", "op": "fetch", "payload": {"name": "'flow'", "version": "1"}, "into": "f_"}},
    {"solicit": {"port": "Runtime", "op": "embed", "payload": {"service": "f_service", "as": "'M'"}, "into": "e_"}},
    {"receive": {"op": "report", "into": "r1_"}},
    {"solicit": {"port": "Runtime", "op": "unembed", "payload": {"name": "'M'"}, "into": "u_"}},
    {"solicit": {"port": "Repo", "op": "fetch", "payload": {"name": "'flow'", "version": "2"}, "into": "g_"}},
    {"solicit": {"port": "Runtime", "op": "embed", "payload": {"service": "g_service", "as": "'M'"}, "into": "e2_"}},
    {"receive": {"op": "report", "into": "r2_"}},
    {"assign": ["global.first", "r1_flow + ' ' + str(r1_value)"]},
    {"assign": ["global.second", "r2_flow + ' ' + str(r2_value)"]}]},
  "inputPorts": [{"name": "in", "location": "local://loader", "interface": ["report"]}],
  "outputPorts": [{"name": "Repo", "location": "${REPO}", "interface": ["fetch"]},
                  {"name": "Runtime", "location": "local://runtime", "interface": ["embed", "unembed"]}]})J";

const char* kCounter = R"J({"name": "counter",
  "interface": {"inc": {"kind": "RequestResponse", "response": {"n": "int"}}},
  "engine": {"initiators": ["inc"]},
  "behaviour": {"seq": [{"receive": {"op": "inc"}},
                        {"assign": ["global.count", "(global.count ?? 0) + 1"]},
                        {"assign": ["n", "global.count"]},
                        {"reply": {"op": "inc", "from": {"n": "n"}}}]},
  "inputPorts": [{"name": "in", "location": "local://${as}", "interface": ["inc"]}]})J";

const char* kSos = R"J({"name": "sos",
  "interface": {"open": {"kind": "RequestResponse", "response": {"resource": "string"}},
                "fetch": {"kind": "SolicitResponse", "request": {"name": "string", "version": "int"},
                          "response": {"service": "string"}},
                "embed": {"kind": "SolicitResponse", "request": {"service": "string", "as": "string"},
                          "response": {"name": "string"}},
                "setRedirect": {"kind": "SolicitResponse",
                                "request": {"resource": "string", "target": "string", "owner": "string"}}},
  "engine": {"initiators": ["open"]},
  "behaviour": {"seq": [
    {"receive": {"op": "open"}},
    {"assign": ["name", "'res-' + caller('open')"]},
    {"solicit": {"port": "Repo", "op": "fetch", "payload": {"name": "'counter'", "version": "1"}, "into": "f_"}},
    {"solicit": {"port": "Runtime", "op": "embed", "payload": {"service": "f_service", "as": "name"}, "into": "e_"}},
    {"solicit": {"port": "Runtime", "op": "setRedirect",
                 "payload": {"resource": "name", "target": "'local://' + name", "owner": "caller('open')"},
                 "into": "s_"}},
    {"reply": {"op": "open", "from": {"resource": "name"}}}]},
  "outputPorts": [{"name": "Repo", "location": "${REPO}", "interface": ["fetch"]},
                  {"name": "Runtime", "location": "local://runtime", "interface": ["embed", "setRedirect"]}]})J";

const char* kDeadA = R"J({"name": "A",
  "interface": {"work": {"kind": "SolicitResponse", "response": {"r": "int"}},
                "help": {"kind": "RequestResponse", "request": {"role": "string"}, "response": {"h": "int"}}},
  "correlation": {"help": {"role": "role"}},
  "engine": {"mode": "${MODE}", "firing": true, "initiators": ["help"]},
  "behaviour": {"if": {"cond": "defined(role)",
    "then": {"seq": [{"receive": {"op": "help"}}, {"reply": {"op": "help", "from": {"h": "1"}}}]},
    "else": {"seq": [{"assign": ["role", "'main'"]},
                     {"solicit": {"port": "B", "op": "work", "into": "w_"}},
                     {"assign": ["global.result", "w_r"]}]}}},
  "inputPorts": [{"name": "in", "location": "${A}", "interface": ["help"]}],
  "outputPorts": [{"name": "B", "location": "${B}", "interface": ["work"]}]})J";

const char* kDeadB = R"J({"name": "B",
  "interface": {"work": {"kind": "RequestResponse", "response": {"r": "int"}},
                "help": {"kind": "SolicitResponse", "request": {"role": "string"}, "response": {"h": "int"}}},
  "engine": {"initiators": ["work"]},
  "behaviour": {"seq": [{"receive": {"op": "work"}},
                        {"solicit": {"port": "A", "op": "help", "payload": {"role": "'helper'"}, "into": "x_"}},
                        {"reply": {"op": "work", "from": {"r": "x_h + 41"}}}]},
  "inputPorts": [{"name": "in", "location": "socket://127.0.0.1:0", "interface": ["work"]}],
  "outputPorts": [{"name": "A", "location": "${A}", "interface": ["help"]}]})J";

// ---------------------------------------------------------------- helpers

std::string subst(std::string text, const Vars& vars) {
  for (const auto& [k, v] : vars) {
    const std::string key = "${" + k + "}";
    for (std::size_t pos = 0; (pos = text.find(key, pos)) != std::string::npos; pos += v.size()) text.replace(pos, key.size(), v);
  }
  return text;
}

json doc(const char* text, const Vars& vars = {}) { return parse_json_strict(subst(text, vars)); }

std::unique_ptr<Container> container(const std::string& name, const Options& opts, std::uint64_t salt) {
  ContainerOptions c;
  c.name = name;
  c.seed = opts.seed * 1000 + salt;
  c.log = opts.log;
  c.watchdog_grace = opts.watchdog_grace;
  return std::make_unique<Container>(std::move(c));
}

std::unique_ptr<Container> load(const std::string& name, const Options& opts, std::uint64_t salt, json config) {
  auto c = container(name, opts, salt);
  c->load(config);
  return c;
}

json services(std::initializer_list<json> defs) { return json{{"services", json(defs)}}; }

/// A free loopback port, for configurations that reference each other.
/// Drawn below the ephemeral range so outgoing connections cannot take it
/// between this check and the real bind.
std::string reserve_port() {
  static std::mt19937 rng{std::random_device{}()};
  for (;;) {
    auto port = static_cast<std::uint16_t>(20000 + rng() % 12000);
    try {
      auto l = Network().listen(Location::socket("127.0.0.1", port));
      return l->location().to_string();
    } catch (const Error&) {
    }
  }
}

using Pair = std::pair<std::unique_ptr<Container>, std::unique_ptr<Container>>;

/// Builds two containers where the second listens at a reserved port the
/// first already points to. Retries when someone else took the port.
Pair circular(const std::function<Pair(const std::string&)>& build) {
  for (int attempt = 1;; ++attempt) {
    try {
      return build(reserve_port());
    } catch (const StartupError&) {
      if (attempt == 5) throw;
    }
  }
}

std::optional<Value> wait_global(Container& c, const std::string& service, const std::string& var,
                                 std::chrono::milliseconds timeout = 5s) {
  auto deadline = Clock::now() + timeout;
  for (;;) {
    if (c.has_service(service))
      if (auto v = c.engine(service).global_read(var)) return v;
    if (Clock::now() > deadline) return std::nullopt;
    std::this_thread::sleep_for(2ms);
  }
}

std::string show(const std::optional<Value>& v) { return v ? to_display(*v) : "<none>"; }

std::string show(const Frame& f) {
  if (f.type == Frame::Type::Fault) return "fault " + f.fault;
  return state_to_json(f.payload).dump();
}

Frame call(FrameClient& client, const std::string& op, State payload, const std::string& resource = {}) {
  return client.call(Frame::request("", op, std::move(payload), resource), 5s);
}

State st(std::initializer_list<std::pair<const char*, Value>> kv) {
  State s;
  for (const auto& [k, v] : kv) s.set(k, v);
  return s;
}

std::string field(const Frame& f, const char* name) {
  if (f.type == Frame::Type::Fault) return "fault " + f.fault;
  return show(f.payload.lookup(name));
}

json repo_with(const std::string& v1, const std::string& v2 = {}) {
  json r = doc(kRepo);
  r["engine"]["globals"] = {{"v1", v1}, {"v2", v2.empty() ? v1 : v2}};
  return r;
}

}  // namespace

std::string Result::diff() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < std::max(transcript.size(), expected.size()); ++i) {
    const std::string* e = i < expected.size() ? &expected[i] : nullptr;
    const std::string* a = i < transcript.size() ? &transcript[i] : nullptr;
    if (e && a && *e == *a) {
      out << "  " << *e << "\n";
      continue;
    }
    if (e) out << "- " << *e << "\n";
    if (a) out << "+ " << *a << "\n";
  }
  return out.str();
}

const std::vector<std::string>& names() {
  static const std::vector<std::string> all = {"rr-vs-callback", "web",  "slave-mobility",
                                               "master-mobility", "sos", "deadlock"};
  return all;
}

Result run(const std::string& name, const Options& opts) {
  if (name == "rr-vs-callback") return rr_vs_callback(opts);
  if (name == "web") return web(opts);
  if (name == "slave-mobility") return slave_mobility(opts);
  if (name == "master-mobility") return master_mobility(opts);
  if (name == "sos") return sos(opts);
  if (name == "deadlock") return deadlock(opts);
  throw std::invalid_argument("unknown demo '" + name + "'");
}

// ---------------------------------------------------------------- demos

Result rr_vs_callback(const Options& opts) {
  Result r{"rr-vs-callback", {}, {}};
  r.expected = {"request-response: A has no input port",
                "request-response: A ends with y=50",
                "callback: A exposes an input port for the callback",
                "callback: A ends with y=50",
                "same final payload: yes"};

  std::string rr, cb;
  {
    auto b = load("B", opts, 1, services({doc(kSquareRR)}));
    auto a = load("A", opts, 2, services({doc(kClientRR, {{"B", b->location("B").to_string()}})}));
    r.transcript.push_back(std::string("request-response: A ") +
                           (a->definition("A").input_ports.empty() ? "has no input port" : "has an input port"));
    rr = show(wait_global(*a, "A", "result"));
    r.transcript.push_back("request-response: A ends with y=" + rr);
  }
  {
    auto [b, a] = circular([&](const std::string& a_at) {
      auto b = load("B", opts, 3, services({doc(kSquareCB, {{"A", a_at}})}));
      auto a = load("A", opts, 4, services({doc(kClientCB, {{"A", a_at}, {"B", b->location("B").to_string()}})}));
      return Pair{std::move(b), std::move(a)};
    });
    r.transcript.push_back(std::string("callback: A ") + (a->definition("A").input_ports.empty()
                                                               ? "has no input port"
                                                               : "exposes an input port for the callback"));
    cb = show(wait_global(*a, "A", "result"));
    r.transcript.push_back("callback: A ends with y=" + cb);
  }
  r.transcript.push_back(std::string("same final payload: ") + (rr == cb ? "yes" : "no"));
  return r;
}

Result web(const Options& opts) {
  Result r{"web", {}, {}};
  r.expected = {"alice GET -> tok1",
                "bob GET -> tok2",
                "bob POST tok2 -> user=bob item=book",
                "alice POST tok1 -> user=alice item=pen",
                "POST with unknown token -> fault CorrelationError",
                "POST without token -> fault TypeFault",
                "alice POST tok1 again -> fault CorrelationError"};

  auto shop = load("shop", opts, 1, services({doc(kShop)}));
  Network net;
  FrameClient alice(net, shop->location("shop")), bob(net, shop->location("shop")), mallory(net, shop->location("shop"));

  std::string t1 = field(call(alice, "get", st({{"user", std::string("alice")}})), "token");
  r.transcript.push_back("alice GET -> " + t1);
  std::string t2 = field(call(bob, "get", st({{"user", std::string("bob")}})), "token");
  r.transcript.push_back("bob GET -> " + t2);

  auto post = [&](FrameClient& c, const std::string& token, const std::string& item) {
    Frame f = call(c, "post", st({{"token", token}, {"item", item}}));
    if (f.type == Frame::Type::Fault) return "fault " + f.fault;
    return "user=" + field(f, "user") + " item=" + field(f, "item");
  };
  r.transcript.push_back("bob POST " + t2 + " -> " + post(bob, t2, "book"));
  r.transcript.push_back("alice POST " + t1 + " -> " + post(alice, t1, "pen"));
  r.transcript.push_back("POST with unknown token -> " + post(mallory, "tok999", "x"));
  r.transcript.push_back("POST without token -> " + show(call(mallory, "post", st({{"item", std::string("x")}}))));
  r.transcript.push_back("alice POST " + t1 + " again -> " + post(alice, t1, "pen"));
  return r;
}

Result slave_mobility(const Options& opts) {
  Result r{"slave-mobility", {}, {}};
  r.expected = {"M fetched S from the repository and embedded it",
                "S runs inside M's container at local://S",
                "M got y=40 from S"};

  auto repo = load("repo", opts, 1, services({repo_with(doc(kSlave).dump())}));
  auto m = load("M", opts, 2, services({doc(kSlaveMaster, {{"REPO", repo->location("repo").to_string()}})}));
  auto y = wait_global(*m, "M", "result");
  r.transcript.push_back(std::string("M fetched S from the repository and ") +
                         (m->has_service("S") ? "embedded it" : "did not embed it"));
  r.transcript.push_back("S runs inside M's container at " +
                         (m->has_service("S") ? m->location("S").to_string() : std::string("<nowhere>")));
  r.transcript.push_back("M got y=" + show(y) + " from S");
  return r;
}

Result master_mobility(const Options& opts) {
  Result r{"master-mobility", {}, {}};
  r.expected = {"loader ran the first workflow: add 13",
                "loader ran the replacement workflow: mul 42",
                "M now runs the replacement: yes"};

  Vars calc_at{{"CALC", "socket://127.0.0.1:0"}};
  auto worker = load("worker", opts, 1, services({doc(kCalc, calc_at)}));
  std::string w = worker->location("calc").to_string();
  auto repo = load("repo", opts, 2,
                   services({repo_with(doc(kFlow, {{"OP", "add"}, {"W", w}}).dump(),
                                       doc(kFlow, {{"OP", "mul"}, {"W", w}}).dump())}));
  auto loader = load("loader", opts, 3, services({doc(kLoader, {{"REPO", repo->location("repo").to_string()}})}));

  auto first = wait_global(*loader, "loader", "first");
  auto second = wait_global(*loader, "loader", "second");
  r.transcript.push_back("loader ran the first workflow: " + show(first));
  r.transcript.push_back("loader ran the replacement workflow: " + show(second));
  bool replaced = loader->has_service("M") && loader->definition("M").to_json().dump().find("'mul'") != std::string::npos;
  r.transcript.push_back(std::string("M now runs the replacement: ") + (replaced ? "yes" : "no"));
  return r;
}

Result sos(const Options& opts) {
  Result r{"sos", {}, {}};
  r.expected = {"client1 opened a private resource",
                "client1 inc -> 1",
                "client1 inc -> 2",
                "client2 opened a distinct resource: yes",
                "client2 inc -> 1",
                "client2 on client1's resource -> fault UnknownResource",
                "client1 inc -> 3"};

  auto repo = load("repo", opts, 1, services({repo_with(doc(kCounter).dump())}));
  json config = services({doc(kSos, {{"REPO", repo->location("repo").to_string()}})});
  config["master"] = {{"location", "socket://127.0.0.1:0"}, {"service", "sos"}};
  auto host = load("sos", opts, 2, config);

  Network net;
  FrameClient c1(net, *host->master_location()), c2(net, *host->master_location());
  std::string r1 = field(call(c1, "open", {}), "resource");
  r.transcript.push_back(r1.rfind("res-", 0) == 0 ? "client1 opened a private resource" : "client1 open -> " + r1);
  r.transcript.push_back("client1 inc -> " + field(call(c1, "inc", {}, r1), "n"));
  r.transcript.push_back("client1 inc -> " + field(call(c1, "inc", {}, r1), "n"));
  std::string r2 = field(call(c2, "open", {}), "resource");
  r.transcript.push_back(std::string("client2 opened a distinct resource: ") +
                         (r2 != r1 && r2.rfind("res-", 0) == 0 ? "yes" : "no (" + r2 + ")"));
  r.transcript.push_back("client2 inc -> " + field(call(c2, "inc", {}, r2), "n"));
  r.transcript.push_back("client2 on client1's resource -> " + show(call(c2, "inc", {}, r1)));
  r.transcript.push_back("client1 inc -> " + field(call(c1, "inc", {}, r1), "n"));
  return r;
}

DeadlockRun deadlock_scenario(ExecutionMode mode, const Options& opts, std::chrono::milliseconds budget) {
  DeadlockRun run;
  auto start = Clock::now();
  auto [b, a] = circular([&](const std::string& a_at) {
    start = Clock::now();
    auto b = load("B", opts, 1, services({doc(kDeadB, {{"A", a_at}})}));
    auto a = load("A", opts, 2,
                  services({doc(kDeadA, {{"A", a_at},
                                         {"B", b->location("B").to_string()},
                                         {"MODE", mode == ExecutionMode::Sequential ? "sequential" : "concurrent"}})}));
    return Pair{std::move(b), std::move(a)};
  });
  Engine& engine = a->engine("A");
  while (Clock::now() - start < budget) {
    if (engine.global_read("result")) {
      run.completed = true;
      break;
    }
    if (engine.deadlock_detected()) {
      run.deadlock_reported = true;
      break;
    }
    std::this_thread::sleep_for(2ms);
  }
  run.elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start);
  opts.log->record("deadlock", run.completed ? "completed" : run.deadlock_reported ? "deadlock" : "timeout",
                   std::to_string(run.elapsed.count()) + "ms");
  return run;
}

Result deadlock(const Options& opts) {
  Result r{"deadlock", {}, {}};
  r.expected = {"sequential: DEADLOCK", "concurrent: OK"};
  auto verdict = [](const DeadlockRun& d) {
    return d.completed ? std::string("OK") : d.deadlock_reported ? std::string("DEADLOCK") : std::string("TIMEOUT");
  };
  r.transcript.push_back("sequential: " + verdict(deadlock_scenario(ExecutionMode::Sequential, opts)));
  r.transcript.push_back("concurrent: " + verdict(deadlock_scenario(ExecutionMode::Concurrent, opts)));
  return r;
}

// ---------------------------------------------------------------- transparency

Transparency composition_transparency(const Options& opts) {
  Transparency t;
  auto script = [](FrameClient& client, const std::string& resource) {
    std::vector<std::string> out;
    auto eval = [&](const char* op, Value a, Value b) {
      out.push_back(show(call(client, "eval", st({{"op", std::string(op)}, {"a", a}, {"b", b}}), resource)));
    };
    eval("add", std::int64_t(2), std::int64_t(3));
    eval("mul", std::int64_t(4), std::int64_t(5));
    eval("div", std::int64_t(7), std::int64_t(2));
    eval("div", std::int64_t(1), std::int64_t(0));
    eval("pow", std::int64_t(2), std::int64_t(8));
    eval("add", std::string("x"), std::int64_t(1));
    eval("add", std::int64_t(-40), std::int64_t(82));
    return out;
  };

  {
    auto c = load("simple", opts, 1, services({doc(kCalc, {{"CALC", "socket://127.0.0.1:0"}})}));
    FrameClient client(Network(), c->location("calc"));
    t.responses["simple"] = script(client, "");
  }
  {
    json config = services({doc(kCalc, {{"CALC", "local://calc"}})});
    config["embed"] = {"calc"};
    auto c = load("embedded", opts, 2, config);
    auto before = transport_stats().socket_bytes.load();
    {
      FrameClient client(c->network(), Location::local("calc"));
      t.responses["embedded"] = script(client, "");
    }
    t.embedded_socket_bytes = transport_stats().socket_bytes.load() - before;
  }
  {
    json config = services({doc(kCalc, {{"CALC", "local://calc"}})});
    config["redirects"] = {{"calc", "local://calc"}};
    config["master"] = "socket://127.0.0.1:0";
    auto c = load("redirected", opts, 3, config);
    FrameClient client(Network(), *c->master_location());
    t.responses["redirected"] = script(client, "calc");
  }
  {
    json config = services({doc(kCalc, {{"CALC", "local://calc"}}), doc(kAbout)});
    config["aggregate"] = {{"publish", {"eval", "about"}}, {"map", {{"eval", "calc"}, {"about", "about"}}}};
    config["master"] = "socket://127.0.0.1:0";
    auto c = load("aggregated", opts, 4, config);
    FrameClient client(Network(), *c->master_location());
    t.responses["aggregated"] = script(client, "");
  }
  return t;
}

}  // namespace orchestra::demos
