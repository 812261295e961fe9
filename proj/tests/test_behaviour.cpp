#include <doctest.h>

#include "orchestra/behaviour.hpp"
#include "orchestra/errors.hpp"
#include "orchestra/interpreter.hpp"

using namespace orchestra;
using nlohmann::json;

namespace {

std::shared_ptr<const BehaviourDef> firing(const char* activity) {
  return std::make_shared<const BehaviourDef>(parse_behaviour(json::parse(activity)));
}

struct Run {
  Completion completion;
  State local;
  LocalContext ctx;
};

Run run(const char* activity, std::uint64_t seed = 1, LocalContext ctx = {}) {
  Interpreter in(firing(activity), {}, seed);
  in.run(ctx, 10'000);
  REQUIRE(in.finished());
  return {*in.completion(), in.local(), std::move(ctx)};
}

const char* kFaultInParallel = R"({"scope":{"name":"s",
    "body":{"par":[{"throw":"F"},{"while":{"cond":"true","body":"nil"}}]},
    "faults":{"F":{"assign":["h","1"]}}}})";

}  // namespace

TEST_CASE("parse_behaviour examples") {
  auto def = parse_behaviour(json::parse(R"({"seq":[{"assign":["a","1"]}]})"));
  const auto* seq = def.root->as<act::Sequence>();
  REQUIRE(seq);
  REQUIRE(seq->children.size() == 1);
  const auto* as = seq->children[0]->as<act::Assign>();
  REQUIRE(as);
  CHECK(as->target == "a");
  CHECK(as->value.eval(State{}) == Value(std::int64_t(1)));

  CHECK_THROWS_AS(parse_behaviour(json::parse(R"({"reply":{"op":"get","from":{}}})")), ValidationError);
  CHECK_THROWS_AS(parse_behaviour(json::parse(R"({"firing":false,"initiators":[],"root":"nil"})")),
                  ValidationError);
}

TEST_CASE("parse errors") {
  for (const char* bad : {R"({"loop":[]})", R"("nope")", R"({"seq":{}})", R"({"assign":["a"]})",
                          R"({"assign":["1a","1"]})", R"({"if":{"cond":"true"}})", R"({"seq":[],"par":[]})",
                          R"({"scope":{"name":"s","body":"nil","extra":1}})", R"({"assign":["a","1 +"]})"})
    CHECK_THROWS_AS(parse_behaviour(json::parse(bad)), ParseError);
}

TEST_CASE("structural validation") {
  // Reply dominated through a sequence.
  CHECK_NOTHROW(parse_behaviour(json::parse(
      R"({"root":{"seq":[{"receive":{"op":"q"}},{"reply":{"op":"q"}}]},"firing":false,"initiators":["q"]})")));
  // Receive in only one branch does not dominate.
  CHECK_THROWS_AS(parse_behaviour(json::parse(
                      R"({"seq":[{"if":{"cond":"true","then":{"receive":{"op":"q"}}}},{"reply":{"op":"q"}}]})")),
                  ValidationError);
  // Second receive before reply.
  CHECK_THROWS_AS(parse_behaviour(json::parse(
                      R"({"seq":[{"receive":{"op":"q"}},{"receive":{"op":"q"}},{"reply":{"op":"q"}}]})")),
                  ValidationError);
  // Scope names repeat along a path.
  CHECK_THROWS_AS(
      parse_behaviour(json::parse(R"({"scope":{"name":"s","body":{"scope":{"name":"s","body":"nil"}}}})")),
      ValidationError);
  // Siblings may share a name.
  CHECK_NOTHROW(parse_behaviour(
      json::parse(R"({"seq":[{"scope":{"name":"s","body":"nil"}},{"scope":{"name":"s","body":"nil"}}]})")));
}

TEST_CASE("sequence and assignment") {
  auto r = run(R"({"seq":[{"assign":["a","2"]},{"assign":["b","a+1"]}]})");
  CHECK(r.completion == Completion::success());
  CHECK(r.local == State{{"a", std::int64_t(2)}, {"b", std::int64_t(3)}});
}

TEST_CASE("fault handler replaces the scope body") {
  auto r = run(R"({"scope":{"name":"s","body":{"throw":"F"},"faults":{"F":{"assign":["h","1"]}}}})");
  CHECK(r.completion == Completion::success());
  CHECK(r.local == State{{"h", std::int64_t(1)}});
}

TEST_CASE("fault in a parallel branch stops the sibling, then the handler runs") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto r = run(kFaultInParallel, seed);
    CHECK(r.completion == Completion::success());
    CHECK(r.local == State{{"h", std::int64_t(1)}});
  }
}

TEST_CASE("unhandled faults reach the root") {
  auto r = run(R"({"seq":[{"assign":["a","1"]},{"throw":"Boom"},{"assign":["a","2"]}]})");
  CHECK(r.completion == Completion::failed("Boom"));
  CHECK(r.local == State{{"a", std::int64_t(1)}});

  auto div = run(R"({"assign":["a","1/0"]})");
  CHECK(div.completion == Completion::failed(faults::kDivisionByZero));

  // Handler for another fault name does not catch.
  auto miss = run(R"({"scope":{"name":"s","body":{"throw":"F"},"faults":{"G":"nil"}}})");
  CHECK(miss.completion == Completion::failed("F"));
}

TEST_CASE("termination handlers run exactly once before propagation") {
  const char* b = R"({"scope":{"name":"outer",
      "body":{"par":[
        {"seq":["nil","nil",{"throw":"F"}]},
        {"scope":{"name":"inner","body":{"while":{"cond":"true","body":"nil"}},
                  "onTerminate":{"assign":["t","(t ?? 0) + 1"]}}}]},
      "faults":{"F":{"assign":["h","t"]}}}})";
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto r = run(b, seed);
    CHECK(r.completion == Completion::success());
    CHECK(r.local == State{{"t", std::int64_t(1)}, {"h", std::int64_t(1)}});
  }
}

TEST_CASE("innermost termination handler runs first") {
  const char* b = R"({"scope":{"name":"o","body":{"par":[{"throw":"F"},
      {"scope":{"name":"a","onTerminate":{"assign":["log","log + 'a'"]},
        "body":{"scope":{"name":"b","onTerminate":{"assign":["log","(log ?? '') + 'b'"]},
          "body":{"while":{"cond":"true","body":"nil"}}}}}}]},
      "faults":{"F":"nil"}}})";
  auto r = run(b);
  CHECK(r.completion == Completion::success());
  CHECK(r.local.lookup("log") == Value(std::string("ba")));
}

TEST_CASE("a fault escaping a termination handler becomes HandlerFault") {
  const char* b = R"({"scope":{"name":"o","body":{"par":[{"throw":"F"},
      {"scope":{"name":"i","body":{"while":{"cond":"true","body":"nil"}},"onTerminate":{"throw":"G"}}}]},
      "faults":{"F":{"assign":["h","1"]},"HandlerFault":{"assign":["h","2"]}}}})";
  auto r = run(b);
  CHECK(r.completion == Completion::success());
  CHECK(r.local == State{{"h", std::int64_t(2)}});
}

TEST_CASE("fault inside a fault handler propagates to the parent") {
  const char* b = R"({"scope":{"name":"o","faults":{"G":{"assign":["h","'outer'"]}},
      "body":{"scope":{"name":"i","body":{"throw":"F"},"faults":{"F":{"throw":"G"}}}}}})";
  auto r = run(b);
  CHECK(r.completion == Completion::success());
  CHECK(r.local == State{{"h", std::string("outer")}});
}

TEST_CASE("compensation runs completed instances newest first") {
  const char* b = R"({"seq":[
      {"scope":{"name":"s","body":"nil","onCompensate":{"assign":["log","(log ?? '') + '1'"]}}},
      {"scope":{"name":"s","body":"nil","onCompensate":{"assign":["log","(log ?? '') + '2'"]}}},
      {"scope":{"name":"s","body":"nil","onCompensate":{"assign":["log","(log ?? '') + '3'"]}}},
      {"compensate":"s"},
      {"compensate":"s"}]})";
  auto r = run(b);
  CHECK(r.completion == Completion::success());
  CHECK(r.local.lookup("log") == Value(std::string("321")));  // second compensate finds nothing left
}

TEST_CASE("failed or unfinished scopes are not compensated") {
  const char* b = R"({"seq":[
      {"scope":{"name":"s","body":"nil","onCompensate":{"assign":["log","(log ?? '') + '1'"]}}},
      {"scope":{"name":"s","body":{"throw":"F"},"faults":{"F":"nil"},
                "onCompensate":{"assign":["log","(log ?? '') + '2'"]}}},
      {"scope":{"name":"t","body":{"compensate":"t"},"onCompensate":{"assign":["early","true"]}}},
      {"compensate":"s"}]})";
  auto r = run(b);
  CHECK(r.local.lookup("log") == Value(std::string("1")));
  CHECK_FALSE(r.local.contains("early"));
}

TEST_CASE("receive, reply and the request-response fault answer") {
  LocalContext ctx;
  ctx.request_response = {"q"};
  ctx.mailbox.push_back(Message{"q", {{"x", std::int64_t(4)}}, "", "c1", "1", nullptr});
  auto ok = run(R"({"seq":[{"receive":{"op":"q","into":"in_"}},{"reply":{"op":"q","from":{"y":"in_x*2"}}}]})", 1,
                ctx);
  CHECK(ok.completion == Completion::success());
  REQUIRE(ok.ctx.outputs.size() == 1);
  CHECK(ok.ctx.outputs[0].kind == "reply");
  CHECK(ok.ctx.outputs[0].payload == State{{"y", std::int64_t(8)}});

  auto bad = run(R"({"seq":[{"receive":{"op":"q"}},{"throw":"F"},{"reply":{"op":"q"}}]})", 1, ctx);
  CHECK(bad.completion == Completion::failed("F"));
  REQUIRE(bad.ctx.outputs.size() == 1);
  CHECK(bad.ctx.outputs[0].kind == "abort");
  CHECK(bad.ctx.outputs[0].fault == "F");

  // Handled inside the region: the reply still happens.
  auto handled = run(R"({"seq":[{"receive":{"op":"q"}},
      {"scope":{"name":"s","body":{"throw":"F"},"faults":{"F":"nil"}}},{"reply":{"op":"q"}}]})",
                     1, ctx);
  CHECK(handled.completion == Completion::success());
  CHECK(handled.ctx.outputs.at(0).kind == "reply");
}

TEST_CASE("receive blocks until a message arrives") {
  auto def = firing(R"({"seq":[{"receive":{"op":"m","into":"m_"}},{"assign":["b","m_v + 1"]}]})");
  Interpreter in(def, {}, 3);
  LocalContext ctx;
  CHECK(in.run(ctx) == 0);
  CHECK_FALSE(in.finished());
  ctx.mailbox.push_back(Message{"other", {}, "", "", "", nullptr});
  CHECK(in.run(ctx) == 0);
  ctx.mailbox.push_back(Message{"m", {{"v", std::int64_t(1)}}, "", "", "", nullptr});
  in.run(ctx);
  CHECK(in.finished());
  CHECK(in.local().lookup("b") == Value(std::int64_t(2)));
  CHECK(ctx.mailbox.size() == 1);
}

TEST_CASE("solicit stores the response or raises the remote fault") {
  LocalContext ctx;
  ctx.responder = [](const std::string&, const std::string& op, const State& p) -> State {
    if (op == "bad") throw Fault("Remote");
    return p;
  };
  auto ok = run(R"({"solicit":{"port":"p","op":"echo","payload":{"v":"7"},"into":"r_"}})", 1, ctx);
  CHECK(ok.local == State{{"r_v", std::int64_t(7)}});
  auto bad = run(R"({"solicit":{"port":"p","op":"bad"}})", 1, ctx);
  CHECK(bad.completion == Completion::failed("Remote"));
}

TEST_CASE("external termination runs termination handlers") {
  auto def = firing(R"({"scope":{"name":"s","body":{"receive":{"op":"never"}},
                        "onTerminate":{"assign":["global.t","1"]}}})");
  Interpreter in(def, {}, 1);
  LocalContext ctx;
  in.run(ctx);
  in.terminate(ctx);
  in.run(ctx);
  REQUIRE(in.finished());
  CHECK(*in.completion() == Completion::terminated());
  CHECK(ctx.global.lookup("t") == Value(std::int64_t(1)));
}

TEST_CASE("same seed, same final state") {
  const char* b = R"({"par":[{"seq":[{"assign":["a","1"]},{"assign":["a","a*10"]}]},
                            {"seq":[{"assign":["a","2"]},{"assign":["a","(a ?? 0)+5"]}]}]})";
  std::set<std::string> seen;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    auto x = run(b, seed), y = run(b, seed);
    CHECK(equals(x.local, y.local));
    seen.insert(to_display(*x.local.lookup("a")));
  }
  CHECK(seen.size() > 1);  // the scheduler does interleave
}
