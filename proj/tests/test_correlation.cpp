#include <doctest.h>

#include <fstream>
#include <sstream>

#include "orchestra/correlation.hpp"
#include "orchestra/errors.hpp"
#include "orchestra/harness/gen.hpp"
#include "orchestra/harness/oracle.hpp"

using namespace orchestra;
using harness::Gen;

namespace {

Message msg(std::string op, State payload) {
  Message m;
  m.operation = std::move(op);
  m.payload = std::move(payload);
  return m;
}

const State kEmpty;

CorrelationFunction to_fn(const std::map<std::string, std::string>& c) { return {c.begin(), c.end()}; }

}  // namespace

TEST_CASE("correlates examples") {
  CorrelationFunction c{{"id", "sid"}};
  auto m = msg("op", {{"id", std::int64_t(7)}});
  CHECK(correlates(m, c, {{"sid", std::int64_t(7)}}));
  CHECK(correlates(m, c, kEmpty));
  CHECK_FALSE(correlates(m, c, {{"sid", std::int64_t(8)}}));
  // Uncorrelated fields never matter.
  CHECK(correlates(msg("op", {{"x", std::int64_t(1)}}), c, {{"sid", std::int64_t(8)}}));
  // Cross-variant values do not match.
  CHECK_FALSE(correlates(msg("op", {{"id", 7.0}}), c, {{"sid", std::int64_t(7)}}));
}

TEST_CASE("oracle examples") {
  std::map<std::string, std::string> c{{"id", "sid"}};
  CHECK(harness::oracle_correlates({}, c, {{"sid", std::int64_t(1)}}));
  CHECK(harness::oracle_correlates({{"id", std::int64_t(2)}}, {}, {{"sid", std::int64_t(1)}}));
  CHECK_FALSE(harness::oracle_correlates({{"id", std::int64_t(2)}}, c, {{"sid", std::int64_t(1)}}));
  // Outside the correlation set the guard switches the check off.
  CHECK(harness::oracle_correlates({{"id", std::int64_t(2)}}, c, {"other"}, {{"sid", std::int64_t(1)}}));
}

TEST_CASE("correlates agrees with the oracle") {
  Gen g(11);
  for (int i = 0; i < 10'000; ++i) {
    auto c = g.function();
    State m = g.small_state(), s = g.small_state();
    REQUIRE(correlates(msg("op", m), to_fn(c), s) == harness::oracle_correlates(m, c, s));
  }
}

TEST_CASE("the config's cset is the union of codomains") {
  CorrelationConfig cfg({{"open", {{"id", "sid"}}}, {"put", {{"key", "sid"}, {"user", "uid"}}}});
  CHECK(cfg.cset() == std::set<std::string>{"sid", "uid"});
  CHECK(cfg.function_for("missing").empty());
  CHECK_THROWS_AS(CorrelationConfig({{"op", {{"a", "x"}, {"b", "x"}}}}), ValidationError);
  CHECK_THROWS_AS(CorrelationConfig({{"op", {{"a b", "x"}}}}), ValidationError);

  auto j = nlohmann::json::parse(R"({"open":{"id":"sid"},"put":{"key":"sid","user":"uid"}})");
  CHECK(CorrelationConfig::from_json(j) == cfg);
  CHECK(cfg.to_json() == j);
  CHECK_THROWS_AS(CorrelationConfig::from_json(nlohmann::json::parse(R"({"op":{"a":1}})")), ParseError);
}

TEST_CASE("select_session examples") {
  CorrelationConfig cfg({{"op", {{"id", "sid"}}}});
  std::vector<std::pair<SessionId, State>> two{{1, {{"sid", std::int64_t(7)}}}, {2, {{"sid", std::int64_t(8)}}}};
  for (std::uint64_t seed = 0; seed < 20; ++seed)
    CHECK(select_session(msg("op", {{"id", std::int64_t(7)}}), two, cfg, seed) == SessionId(1));

  std::vector<std::pair<SessionId, State>> unbound{{4, {}}, {9, {}}};
  std::set<SessionId> picked;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto a = select_session(msg("op", {{"id", std::int64_t(1)}}), unbound, cfg, seed);
    REQUIRE(a);
    CHECK(a == select_session(msg("op", {{"id", std::int64_t(1)}}), unbound, cfg, seed));
    picked.insert(*a);
  }
  CHECK(picked == std::set<SessionId>{4, 9});

  CHECK_FALSE(select_session(msg("op", {}), {}, cfg, 0));
}

TEST_CASE("bind_correlation examples") {
  CorrelationFunction c{{"id", "sid"}};
  CHECK(bind_correlation(msg("op", {{"id", std::int64_t(7)}}), c, kEmpty) == State{{"sid", std::int64_t(7)}});
  CHECK(bind_correlation(msg("op", {{"id", std::int64_t(7)}}), c, {{"sid", std::int64_t(7)}}) ==
        State{{"sid", std::int64_t(7)}});
  CHECK(bind_correlation(msg("op", {{"id", std::int64_t(7)}, {"other", std::int64_t(1)}}), c, kEmpty) ==
        State{{"sid", std::int64_t(7)}});
}

TEST_CASE("routing stability after binding") {
  Gen g(5);
  for (int i = 0; i < 1000; ++i) {
    auto c = g.function();
    if (c.empty()) continue;
    CorrelationConfig cfg({{"op", to_fn(c)}});
    std::vector<std::pair<SessionId, State>> sessions;
    for (SessionId id = 1; id <= 4; ++id) sessions.emplace_back(id, g.small_state());
    auto m = msg("op", g.small_state());
    auto chosen = select_session(m, sessions, cfg, g.next());
    if (!chosen) continue;
    auto& s = sessions[*chosen - 1].second;
    s = bind_correlation(m, cfg, s);
    CHECK(correlates(m, cfg, s));
    // Any other match has an unbound variable for m or agrees with the chosen one.
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      auto again = select_session(m, sessions, cfg, seed);
      REQUIRE(again);
      if (*again == *chosen) continue;
      const State& other = sessions[*again - 1].second;
      bool unbound = false, same = true;
      for (const auto& [field, v] : m.payload) {
        auto it = c.find(field);
        if (it == c.end()) continue;
        if (!other.contains(it->second)) unbound = true;
        if (other.lookup(it->second) != s.lookup(it->second)) same = false;
      }
      CHECK((unbound || same));
    }
  }
}

TEST_CASE("equal projections are indistinguishable") {
  Gen g(9);
  for (int i = 0; i < 500; ++i) {
    CorrelationConfig cfg({{"op", to_fn(g.function())}});
    State s1 = g.small_state();
    // Same correlation projection, arbitrary other variables.
    State s2 = compose(project(s1, cfg.cset()), State{{"noise", std::int64_t(i)}});
    for (int k = 0; k < 10; ++k) {
      auto m = msg("op", g.small_state());
      CHECK(correlates(m, cfg, s1) == correlates(m, cfg, s2));
    }
  }
}

TEST_CASE("dropping a field never breaks a match") {
  Gen g(13);
  for (int i = 0; i < 2000; ++i) {
    auto c = to_fn(g.function());
    State m = g.small_state(), s = g.small_state();
    if (!correlates(msg("op", m), c, s)) continue;
    for (const auto& [field, v] : m) {
      State smaller = m;
      smaller.erase(field);
      CHECK(correlates(msg("op", smaller), c, s));
    }
  }
}

TEST_CASE("the oracle does not depend on the correlation module") {
  for (const char* file : {"/src/harness/oracle.cpp", "/include/orchestra/harness/oracle.hpp"}) {
    std::ifstream in(std::string(ORCHESTRA_SOURCE_DIR) + file);
    REQUIRE(in);
    std::stringstream text;
    text << in.rdbuf();
    CHECK(text.str().find("correlation.hpp") == std::string::npos);
    CHECK(text.str().find("CorrelationFunction") == std::string::npos);
    CHECK(text.str().find("CorrelationConfig") == std::string::npos);
  }
}
