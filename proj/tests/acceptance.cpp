// Runs every acceptance criterion and prints one PASS/FAIL line each.
// Exit status is the number of failures.

#include <chrono>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include "orchestra/correlation.hpp"
#include "orchestra/demos.hpp"
#include "orchestra/engine.hpp"
#include "orchestra/errors.hpp"
#include "orchestra/frame.hpp"
#include "orchestra/harness/gen.hpp"
#include "orchestra/harness/id_audit.hpp"
#include "orchestra/harness/oracle.hpp"
#include "orchestra/harness/reference.hpp"
#include "orchestra/ports.hpp"

using namespace orchestra;
using namespace std::chrono_literals;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool ok = true;
  std::string detail;
};

struct Failed {
  std::string why;
};

void expect(bool cond, const std::string& why) {
  if (!cond) throw Failed{why};
}

Message msg(std::string op, State payload) {
  Message m;
  m.operation = std::move(op);
  m.payload = std::move(payload);
  return m;
}

State st(std::initializer_list<std::pair<const char*, Value>> kv) {
  State s;
  for (const auto& [k, v] : kv) s.set(k, v);
  return s;
}

// ---------------------------------------------------------------- 1

std::string routing_oracle() {
  harness::Gen g(20240601);
  for (int i = 0; i < 10'000; ++i) {
    auto c = g.function();
    State m = g.small_state(), s = g.small_state();
    CorrelationFunction fn(c.begin(), c.end());
    expect(correlates(msg("op", m), fn, s) == harness::oracle_correlates(m, c, s),
           "disagreement on triple " + std::to_string(i));
  }
  return "10000 triples, 0 disagreements";
}

// ---------------------------------------------------------------- 2

std::string state_algebra() {
  harness::Gen g(77);
  for (int i = 0; i < 1000; ++i) {
    State a = g.any_state(), b = g.any_state(), c = g.any_state();
    expect(compose(compose(a, b), c) == compose(a, compose(b, c)), "associativity");
    expect(compose(a, State{}) == a && compose(State{}, a) == a, "identity");
    for (const char* x : {"a", "b", "c", "d", "e", "f", "z"})
      expect(compose(a, b).lookup(x) == (a.contains(x) ? a.lookup(x) : b.lookup(x)), "left bias");
    expect(a == a, "reflexive");
    expect((a == b) == (b == a), "symmetric");
    if (a == b && b == c) expect(a == c, "transitive");
    State copy = compose(b, State{});
    expect(copy == b, "equal copies");
  }
  return "1000 triples";
}

// ---------------------------------------------------------------- 3

std::string session_identification() {
  CorrelationConfig cfg({{"buy", {{"token", "tok"}}}, {"open", {{"user", "who"}}}});
  // Same correlation projection, different private variables.
  State s1 = st({{"who", std::string("u")}, {"cart", std::int64_t(1)}});
  State s2 = st({{"who", std::string("u")}, {"total", 9.5}});
  std::mt19937_64 rng(3);
  for (int k = 0; k < 10; ++k) {
    State p;
    if (rng() % 2) p.set("user", std::string(rng() % 2 ? "u" : "v"));
    if (rng() % 2) p.set("token", std::string(rng() % 2 ? "t1" : "t2"));
    Message m = msg(rng() % 2 ? "buy" : "open", p);
    expect(correlates(m, cfg, s1) == correlates(m, cfg, s2), "probe " + std::to_string(k) + " tells them apart");
  }

  s1 = bind_correlation(msg("buy", st({{"token", std::string("t1")}})), cfg, s1);
  s2 = bind_correlation(msg("buy", st({{"token", std::string("t2")}})), cfg, s2);
  std::vector<std::pair<SessionId, State>> sessions{{1, s1}, {2, s2}};
  for (int k = 0; k < 100; ++k) {
    bool first = rng() % 2;
    Message m = msg("buy", st({{"token", std::string(first ? "t1" : "t2")}, {"item", std::int64_t(k)}}));
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      auto chosen = select_session(m, sessions, cfg, seed ^ rng());
      expect(chosen && *chosen == (first ? 1u : 2u), "message " + std::to_string(k) + " misrouted");
    }
    expect(correlates(m, cfg, first ? s1 : s2) && !correlates(m, cfg, first ? s2 : s1), "predicate");
  }

  // The same through a live engine.
  EngineConfig ecfg;
  ecfg.service = "shop";
  ecfg.behaviour = std::make_shared<const BehaviourDef>(parse_behaviour(json::parse(R"({"root":{"seq":[
      {"receive":{"op":"open"}},
      {"while":{"cond":"(n ?? 0) < 50","body":{"seq":[{"receive":{"op":"buy"}},
        {"if":{"cond":"token != tok","then":{"throw":"Misrouted"}}},
        {"assign":["n","(n ?? 0) + 1"]}]}}}]},
      "firing":false,"initiators":["open"]})")));
  ecfg.interface = Interface::from_json(json::parse(R"({"open":{"kind":"OneWay","request":{"token":"string"}},
      "buy":{"kind":"OneWay","request":{"token":"string","item":"int"}}})"));
  ecfg.correlation = CorrelationConfig::from_json(json::parse(R"({"open":{"token":"tok"},"buy":{"token":"tok"}})"));
  ecfg.log = std::make_shared<EventLog>();
  Engine e(std::move(ecfg));
  e.start();
  e.submit(msg("open", st({{"token", std::string("t1")}})));
  e.submit(msg("open", st({{"token", std::string("t2")}})));
  std::vector<std::string> tokens(50, "t1");
  tokens.resize(100, "t2");
  std::shuffle(tokens.begin(), tokens.end(), rng);
  for (int k = 0; k < 100; ++k) {
    auto out = e.submit(msg("buy", st({{"token", tokens[k]}, {"item", std::int64_t(k)}})));
    expect(out.kind != RoutingOutcome::Kind::Rejected, "engine rejected message " + std::to_string(k));
  }
  expect(e.wait_finished(2, 5s), "sessions did not finish");
  for (const auto& r : e.sessions()) expect(r.completion && *r.completion == Completion::success(), "misrouted in engine");
  return "10 probes indistinguishable, 100 messages routed by token (model and engine)";
}

// ---------------------------------------------------------------- 4

std::string engine_lifetimes() {
  auto dir = std::filesystem::temp_directory_path() / ("orchestra-acceptance-" + std::to_string(std::random_device{}()));
  std::filesystem::create_directories(dir);
  struct Cleanup {
    std::filesystem::path p;
    ~Cleanup() { std::filesystem::remove_all(p); }
  } cleanup{dir};

  auto make = [&] {
    EngineConfig cfg;
    cfg.service = "life";
    cfg.behaviour = std::make_shared<const BehaviourDef>(parse_behaviour(json::parse(R"j({"root":{"seq":[
        {"receive":{"op":"go"}},
        {"if":{"cond":"mode == 'put'",
          "then":{"seq":[{"assign":["secret","d"]},{"assign":["storage.d","d"]},{"assign":["storage.s","s"]},
                         {"assign":["storage.i","i"]},{"assign":["global.g","i"]}]},
          "else":{"seq":[{"assign":["global.peek","defined(secret)"]},{"assign":["global.d","storage.d ?? (-1.0)"]},
                         {"assign":["global.s","storage.s ?? ''"]},{"assign":["global.i","storage.i ?? 0"]},
                         {"assign":["global.gseen","global.g ?? (-1)"]}]}}}]},
        "firing":false,"initiators":["go"]})j")));
    cfg.interface = Interface::from_json(json::parse(R"({"go":{"kind":"OneWay",
        "request":{"mode":"string","d":"double","s":"string","i":"int"}}})"));
    cfg.storage_path = (dir / "store").string();
    cfg.log = std::make_shared<EventLog>();
    return std::make_unique<Engine>(std::move(cfg));
  };

  const double d = 0.1 + 0.2;
  const std::string s = "bits \"exact\"\n\té";
  const std::int64_t i = INT64_MIN + 3;
  State put = st({{"mode", std::string("put")}, {"d", d}, {"s", s}, {"i", i}});
  State get = st({{"mode", std::string("get")}, {"d", 0.0}, {"s", std::string()}, {"i", std::int64_t(0)}});

  auto e = make();
  e->start();
  e->submit(msg("go", put));
  expect(e->wait_finished(1, 5s), "put session did not finish");
  e->submit(msg("go", get));
  expect(e->wait_finished(2, 5s), "get session did not finish");
  expect(e->global_read("peek") == Value(false), "local state leaked across sessions");
  expect(e->global_read("gseen") == Value(i), "global state lost between sessions");
  e->stop();

  e = make();
  e->start();
  e->submit(msg("go", get));
  expect(e->wait_finished(1, 5s), "get after restart did not finish");
  expect(e->global_read("gseen") == Value(std::int64_t(-1)), "global state survived a restart");
  auto got = e->global_read("d");
  expect(got && std::holds_alternative<double>(*got), "storage double missing after restart");
  double back = std::get<double>(*got);
  expect(std::memcmp(&back, &d, sizeof d) == 0, "storage double not bit-exact");
  expect(e->global_read("s") == Value(s), "storage string changed");
  expect(e->global_read("i") == Value(i), "storage int changed");
  e->stop();
  return "local private, global per run, storage bit-exact across restart";
}

// ---------------------------------------------------------------- 5

std::string sequential_vs_concurrent() {
  std::chrono::milliseconds worst_detect{0}, worst_complete{0};
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    demos::Options opts;
    opts.seed = seed;
    auto seq = demos::deadlock_scenario(ExecutionMode::Sequential, opts, 3s);
    expect(seq.deadlock_reported && !seq.completed, "seed " + std::to_string(seed) + ": no deadlock reported");
    // Quiescence is declared one grace period after the last activity.
    expect(seq.elapsed <= opts.watchdog_grace + 400ms, "seed " + std::to_string(seed) + ": detection too slow");
    worst_detect = std::max(worst_detect, seq.elapsed);

    auto con = demos::deadlock_scenario(ExecutionMode::Concurrent, opts, 3s);
    expect(con.completed && !con.deadlock_reported, "seed " + std::to_string(seed) + ": concurrent did not complete");
    expect(con.elapsed < 2s, "seed " + std::to_string(seed) + ": concurrent too slow");
    worst_complete = std::max(worst_complete, con.elapsed);
  }
  return "20 seeds each; slowest detection " + std::to_string(worst_detect.count()) + " ms, slowest completion " +
         std::to_string(worst_complete.count()) + " ms";
}

// ---------------------------------------------------------------- 6

Frame random_frame(std::mt19937_64& rng) {
  static const char* strings[] = {"", "a", "x y", "line\nbreak", "quote\"", "ünï", "tab\t", "\\"};
  auto pick = [&](std::size_t n) { return rng() % n; };
  Frame f;
  f.id = std::to_string(rng() % 100000);
  f.type = static_cast<Frame::Type>(pick(3));
  f.operation = strings[pick(8)];
  f.resource = strings[pick(8)];
  for (std::size_t k = 0, n = pick(6); k < n; ++k) {
    std::string key = "f" + std::to_string(pick(10));
    switch (pick(4)) {
      case 0: f.payload.set(key, static_cast<std::int64_t>(rng())); break;
      case 1: f.payload.set(key, static_cast<double>(pick(1'000'000)) / 7.0); break;
      case 2: f.payload.set(key, pick(2) == 0); break;
      default: f.payload.set(key, std::string(strings[pick(8)])); break;
    }
  }
  if (f.type == Frame::Type::Fault) f.fault = strings[1 + pick(7)];
  return f;
}

std::string wire_protocol() {
  std::mt19937_64 rng(99);
  for (int k = 0; k < 10'000; ++k) {
    Frame f = random_frame(rng);
    std::string line = encode_frame(f);
    expect(line.find('\n') == line.size() - 1, "frame " + std::to_string(k) + " is not one line");
    expect(decode_frame(line) == f, "frame " + std::to_string(k) + " did not round-trip");
  }

  std::size_t connections = 0, answers = 0;
  {
    harness::IdAudit audit;
    for (const auto& name : demos::names()) {
      demos::Options opts;
      auto r = demos::run(name, opts);
      expect(r.ok(), "demo " + name + " failed during the id audit");
    }
    auto v = audit.violations();
    expect(v.empty(), v.empty() ? "" : v.front());
    connections = audit.connections();
    answers = audit.answers();
  }

  // Out-of-order answers still reach the right caller.
  Network net;
  std::mutex mu;
  std::condition_variable cv;
  std::vector<std::pair<Frame, std::shared_ptr<ServerChannel>>> held;
  InputPort in("in", Location::local("ooo"), net, [&](const Frame& f, const std::shared_ptr<ServerChannel>& ch) {
    std::lock_guard lock(mu);
    held.emplace_back(f, ch);
    cv.notify_all();
  });
  in.start();
  FrameClient client(net, Location::local("ooo"));
  constexpr int kCalls = 8;
  std::vector<std::optional<Frame>> got(kCalls);
  for (int k = 0; k < kCalls; ++k)
    client.send(Frame::request("", "echo", st({{"n", std::int64_t(k)}})), [&, k](const Frame& r) {
      std::lock_guard lock(mu);
      got[k] = r;
      cv.notify_all();
    });
  {
    std::unique_lock lock(mu);
    expect(cv.wait_for(lock, 5s, [&] { return held.size() == kCalls; }), "requests did not arrive");
  }
  std::vector<std::size_t> order(kCalls);
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::shuffle(order.begin(), order.end(), rng);
  for (auto k : order) held[k].second->send_response(held[k].first.id, held[k].first.payload);
  {
    std::unique_lock lock(mu);
    expect(cv.wait_for(lock, 5s, [&] { return std::all_of(got.begin(), got.end(), [](auto& g) { return g.has_value(); }); }),
           "responses missing");
    for (int k = 0; k < kCalls; ++k) expect(got[k]->payload == st({{"n", std::int64_t(k)}}), "response mismatched");
  }
  in.stop();
  return "10000 frames; " + std::to_string(connections) + " connections, " + std::to_string(answers) +
         " answers audited; shuffled answers matched";
}

// ---------------------------------------------------------------- 7

std::string composition_transparency() {
  demos::Options opts;
  auto t = demos::composition_transparency(opts);
  expect(t.responses.size() == 4, "missing deployments");
  const auto& ref = t.responses.at("simple");
  for (const auto& [name, lines] : t.responses) {
    std::string a, b;
    for (const auto& l : lines) a += l + "\n";
    for (const auto& l : ref) b += l + "\n";
    expect(a == b, name + " differs from simple");
  }
  expect(t.embedded_socket_bytes == 0, "embedded pair used " + std::to_string(t.embedded_socket_bytes) + " socket bytes");
  return "4 deployments x " + std::to_string(ref.size()) + " calls identical; 0 socket bytes embedded";
}

// ---------------------------------------------------------------- 8

std::string pattern_demos() {
  int runs = 0;
  for (const char* name : {"rr-vs-callback", "web", "slave-mobility", "master-mobility", "sos"})
    for (std::uint64_t seed : {1, 17, 4242}) {
      demos::Options opts;
      opts.seed = seed;
      auto r = demos::run(name, opts);
      expect(r.ok(), std::string(name) + " seed " + std::to_string(seed) + ":\n" + r.diff());
      ++runs;
    }
  return std::to_string(runs) + " runs";
}

// ---------------------------------------------------------------- 9

std::size_t check_membership(const char* text, std::size_t max_steps) {
  auto b = parse_behaviour(json::parse(text));
  auto all = harness::enumerate_interleavings(b, {}, max_steps);
  expect(!all.finals.empty(), "oracle found no outcome");
  auto shared = std::make_shared<const BehaviourDef>(b);
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    LocalContext ctx;
    Interpreter in(shared, {}, seed);
    in.run(ctx, 10'000);
    expect(in.finished(), "seeded run did not finish");
    if (in.steps_taken() > max_steps) continue;
    harness::Outcome got{in.local(), ctx.global, *in.completion()};
    expect(all.finals.count(got) == 1, "seed " + std::to_string(seed) + " outside the enumerated set (" +
                                            got.completion.to_string() + ")");
    ++checked;
  }
  return checked;
}

std::string fault_semantics() {
  std::size_t checked = 0;
  checked += check_membership(R"({"scope":{"name":"outer",
      "body":{"par":[
        {"seq":["nil",{"throw":"F"}]},
        {"scope":{"name":"inner","body":{"while":{"cond":"(n ?? 0) < 3","body":{"assign":["n","(n ?? 0)+1"]}}},
                  "onTerminate":{"assign":["t","(t ?? 0) + 1"]},
                  "onCompensate":{"assign":["c","true"]}}}]},
      "faults":{"F":{"seq":[{"assign":["h","t ?? 0"]},{"compensate":"inner"}]}}}})",
                              20);
  checked += check_membership(R"({"scope":{"name":"o","body":{"par":[{"throw":"F"},
      {"scope":{"name":"i","body":{"seq":["nil","nil","nil"]},"onTerminate":{"throw":"G"}}}]},
      "faults":{"HandlerFault":{"assign":["h","2"]}}}})",
                              20);
  checked += check_membership(R"({"seq":[
      {"par":[
        {"scope":{"name":"s","body":{"assign":["x","1"]},"onCompensate":{"assign":["log","(log ?? '') + 'a'"]}}},
        {"scope":{"name":"s","body":{"assign":["y","1"]},"onCompensate":{"assign":["log","(log ?? '') + 'b'"]}}},
        {"scope":{"name":"s","body":{"throw":"X"},"faults":{"X":"nil"},
                  "onCompensate":{"assign":["log","(log ?? '') + 'c'"]}}}]},
      {"compensate":"s"}]})",
                              20);
  checked += check_membership(R"({"scope":{"name":"top","body":{"seq":[
      {"scope":{"name":"a","body":{"assign":["x","1"]},"onCompensate":{"assign":["x","0"]}}},
      {"throw":"Boom"}]},
      "faults":{"Boom":{"compensate":"a"}},"onTerminate":{"assign":["t","1"]}}})",
                              20);

  // A 3-scope chain completing in a scheduler-chosen order is compensated
  // in exactly the reverse order.
  auto chain = std::make_shared<const BehaviourDef>(parse_behaviour(json::parse(R"({"seq":[
      {"par":[
        {"scope":{"name":"step","body":{"assign":["done","(done ?? '') + '1'"]},
                  "onCompensate":{"assign":["undo","(undo ?? '') + '1'"]}}},
        {"scope":{"name":"step","body":{"seq":["nil",{"assign":["done","(done ?? '') + '2'"]}]},
                  "onCompensate":{"assign":["undo","(undo ?? '') + '2'"]}}},
        {"scope":{"name":"step","body":{"seq":["nil","nil",{"assign":["done","(done ?? '') + '3'"]}]},
                  "onCompensate":{"assign":["undo","(undo ?? '') + '3'"]}}}]},
      {"compensate":"step"}]})")));
  std::set<std::string> orders;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    LocalContext ctx;
    Interpreter in(chain, {}, seed);
    in.run(ctx, 10'000);
    expect(in.finished() && *in.completion() == Completion::success(), "chain did not succeed");
    auto done = std::get<std::string>(*in.local().lookup("done"));
    auto undo = std::get<std::string>(*in.local().lookup("undo"));
    expect(std::string(done.rbegin(), done.rend()) == undo, "compensated " + undo + " after completing " + done);
    orders.insert(done);
  }
  return std::to_string(checked) + " seeded runs inside the enumerated sets; reverse compensation over " +
         std::to_string(orders.size()) + " completion orders";
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<std::string()>>> criteria = {
      {"1 routing formula agrees with the oracle", routing_oracle},
      {"2 state algebra", state_algebra},
      {"3 session identification", session_identification},
      {"4 engine lifetimes", engine_lifetimes},
      {"5 sequential deadlock vs concurrent completion", sequential_vs_concurrent},
      {"6 wire protocol", wire_protocol},
      {"7 composition transparency", composition_transparency},
      {"8 pattern demos under three seeds", pattern_demos},
      {"9 fault, termination and compensation semantics", fault_semantics},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    auto start = Clock::now();
    Verdict v;
    try {
      v.detail = run();
    } catch (const Failed& f) {
      v = {false, f.why};
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count();
    std::cout << (v.ok ? "PASS " : "FAIL ") << name << " (" << ms << " ms): " << v.detail << std::endl;
    failures += v.ok ? 0 : 1;
  }
  return failures;
}
