#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <future>
#include <random>
#include <set>
#include <thread>

#include "orchestra/errors.hpp"
#include "orchestra/frame.hpp"
#include "orchestra/interface.hpp"
#include "orchestra/ports.hpp"
#include "orchestra/storage.hpp"
#include "orchestra/transport.hpp"

using namespace orchestra;
using namespace std::chrono_literals;
using nlohmann::json;

namespace {

std::string temp_path(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() / "orchestra-tests";
  std::filesystem::create_directories(dir);
  auto p = dir / (tag + "-" + std::to_string(std::random_device{}()));
  std::filesystem::remove(p);
  return p.string();
}

State st(std::initializer_list<std::pair<const char*, Value>> kv) {
  State s;
  for (const auto& [k, v] : kv) s.set(k, v);
  return s;
}

Interface iface(const char* text) { return Interface::from_json(json::parse(text)); }

Frame random_frame(std::mt19937_64& rng) {
  static const char* strings[] = {"", "a", "x y", "line\nbreak", "quote\"", "ünï", "tab\t", "\\"};
  auto pick = [&](std::size_t n) { return rng() % n; };
  Frame f;
  f.id = std::to_string(rng() % 1000);
  f.type = static_cast<Frame::Type>(pick(3));
  f.operation = strings[pick(8)];
  f.resource = strings[pick(8)];
  for (std::size_t i = 0, n = pick(5); i < n; ++i) {
    std::string k = "f" + std::to_string(pick(10));
    switch (pick(4)) {
      case 0: f.payload.set(k, static_cast<std::int64_t>(rng())); break;
      case 1: f.payload.set(k, static_cast<double>(pick(100000)) / 7.0); break;
      case 2: f.payload.set(k, pick(2) == 0); break;
      default: f.payload.set(k, std::string(strings[pick(8)])); break;
    }
  }
  if (f.type == Frame::Type::Fault) f.fault = strings[1 + pick(7)];
  return f;
}

}  // namespace

// ---------------------------------------------------------------- storage

TEST_CASE("storage survives reopen") {
  auto path = temp_path("store");
  {
    Storage s(path);
    CHECK_FALSE(s.get("k").has_value());
    s.put("k", std::int64_t(1));
    s.put("gone", std::string("x"));
    s.del("gone");
    CHECK(s.get("k") == Value(std::int64_t(1)));
    CHECK_FALSE(s.get("gone").has_value());
  }
  {
    Storage s(path);
    CHECK(s.get("k") == Value(std::int64_t(1)));
    CHECK_FALSE(s.get("gone").has_value());
    s.put("k", 2.5);
  }
  Storage s(path);
  CHECK(s.get("k") == Value(2.5));
  CHECK(s.snapshot().size() == 1);
}

TEST_CASE("storage drops a torn final line and rejects earlier corruption") {
  auto path = temp_path("torn");
  {
    Storage s(path);
    s.put("a", std::int64_t(1));
  }
  {
    std::ofstream out(path, std::ios::app);
    out << R"({"op":"put","k":"b","v")";
  }
  {
    Storage s(path);
    CHECK(s.get("a") == Value(std::int64_t(1)));
    CHECK_FALSE(s.get("b").has_value());
  }
  {
    std::ofstream out(path, std::ios::trunc);
    out << "garbage\n" << R"({"op":"put","k":"a","v":1})" << "\n";
  }
  CHECK_THROWS_AS(Storage{path}, StorageError);
  CHECK_THROWS_AS(Storage{path + "/under-a-file"}, StorageError);
}

TEST_CASE("storage compaction keeps the latest values") {
  auto path = temp_path("compact");
  {
    Storage s(path);
    for (int i = 0; i < 500; ++i) s.put("k" + std::to_string(i % 3), std::int64_t(i));
  }
  Storage s(path);
  CHECK(s.get("k0") == Value(std::int64_t(498)));
  CHECK(s.get("k1") == Value(std::int64_t(499)));
  CHECK(s.get("k2") == Value(std::int64_t(497)));
}

// ---------------------------------------------------------------- frames

TEST_CASE("frame encoding examples") {
  CHECK(encode_frame(Frame::request("1", "ping", {})) ==
        "{\"id\":\"1\",\"type\":\"request\",\"operation\":\"ping\",\"resource\":\"\",\"payload\":{}}\n");
  std::string f = encode_frame(Frame::failure("7", "div", "DivisionByZero"));
  CHECK(f == "{\"id\":\"7\",\"type\":\"fault\",\"operation\":\"div\",\"resource\":\"\",\"payload\":{},"
             "\"fault\":\"DivisionByZero\"}\n");
  std::string r = encode_frame(Frame::response("2", "get", st({{"x", std::int64_t(3)}, {"s", std::string("a\nb")}}), "A"));
  CHECK(r == "{\"id\":\"2\",\"type\":\"response\",\"operation\":\"get\",\"resource\":\"A\","
             "\"payload\":{\"s\":\"a\\nb\",\"x\":3}}\n");
  CHECK_THROWS_AS(encode_frame(Frame::request("1", "p", st({{"x", std::numeric_limits<double>::infinity()}}))),
                  EncodeError);
  CHECK_THROWS_AS(encode_frame(Frame::request("1", "p", st({{"x", std::string("\xff")}}))), EncodeError);
}

TEST_CASE("frame decoding") {
  Frame f = decode_frame(R"({"id":"1","type":"request","operation":"ping","resource":"","payload":{"n":2}})");
  CHECK(f == Frame::request("1", "ping", st({{"n", std::int64_t(2)}})));
  CHECK(decode_frame(encode_frame(f)) == f);
  for (const char* bad : {
           R"({"id":"1","type":"request","resource":"","payload":{}})",
           R"({"id":"1","type":"reply","operation":"p","resource":"","payload":{}})",
           R"({"id":"1","type":"request","operation":"p","resource":"","payload":{},"extra":1})",
           R"({"id":1,"type":"request","operation":"p","resource":"","payload":{}})",
           R"({"id":"1","type":"request","operation":"p","resource":"","payload":[]})",
           R"({"id":"1","type":"fault","operation":"p","resource":"","payload":{}})",
           R"({"id":"1","type":"request","operation":"p","resource":"","payload":{},"fault":"F"})",
           "not json", "{\"id\":\"1\"}\n{}", "[]"})
    CHECK_THROWS_AS(decode_frame(bad), DecodeError);
}

TEST_CASE("frame round trip over random frames") {
  std::mt19937_64 rng(42);
  for (int i = 0; i < 10'000; ++i) {
    Frame f = random_frame(rng);
    std::string line = encode_frame(f);
    REQUIRE(line.back() == '\n');
    REQUIRE(line.find('\n') == line.size() - 1);
    REQUIRE(decode_frame(line) == f);
  }
}

// ---------------------------------------------------------------- transport

TEST_CASE("location parsing") {
  CHECK(Location::parse("socket://127.0.0.1:8080") == Location::socket("127.0.0.1", 8080));
  CHECK(Location::parse("local://A") == Location::local("A"));
  CHECK(Location::parse("socket://h:1").to_string() == "socket://h:1");
  for (const char* bad : {"http://x", "socket://nohost", "socket://h:99999", "local://", "socket://h:x"})
    CHECK_THROWS_AS(Location::parse(bad), ParseError);
}

TEST_CASE("memory pair keeps order and counts bytes") {
  auto [a, b] = make_memory_pair();
  a->write_line("one\n");
  a->write_line("two\n");
  CHECK(b->read_line() == std::optional<std::string>("one"));
  CHECK(b->read_line() == std::optional<std::string>("two"));
  CHECK(a->bytes_sent() == 8);
  CHECK(b->bytes_received() == 8);
  b->write_line("back\n");
  CHECK(a->read_line() == std::optional<std::string>("back"));
  a->write_line("partial");
  a->close();
  CHECK_THROWS_AS(b->read_line(), IoError);
  CHECK_THROWS_AS(b->write_line("x\n"), IoError);
}

TEST_CASE("local registry") {
  auto reg = std::make_shared<LocalRegistry>();
  Network net(reg);
  CHECK_THROWS_AS(net.connect(Location::local("nobody")), IoError);
  auto l = net.listen(Location::local("svc"));
  CHECK(reg->bound("svc"));
  CHECK_THROWS_AS(net.listen(Location::local("svc")), NameClash);
  auto c = net.connect(Location::local("svc"));
  auto s = l->accept();
  c->write_line("hi\n");
  CHECK(s->read_line() == std::optional<std::string>("hi"));
  l.reset();
  CHECK_FALSE(reg->bound("svc"));
}

TEST_CASE("socket transport") {
  Network net;
  auto l = net.listen(Location::socket("127.0.0.1", 0));
  REQUIRE(l->location().port != 0);
  auto c = net.connect(l->location());
  auto s = l->accept();
  c->write_line("over tcp\n");
  CHECK(s->read_line() == std::optional<std::string>("over tcp"));
  s->close();
  CHECK_FALSE(c->read_line().has_value());
  CHECK_THROWS_AS(net.listen(l->location()), StartupError);
}

// ---------------------------------------------------------------- interfaces

TEST_CASE("interfaces") {
  auto i = iface(R"({"sum":{"kind":"RequestResponse","request":{"a":"int","b":"int"},"response":{"r":"int"}},
                     "log":{"kind":"OneWay","request":{"msg":"any"}}})");
  CHECK(i.find("sum")->kind == OperationKind::RequestResponse);
  CHECK(i.find("sum")->request.conforms(st({{"a", std::int64_t(1)}, {"b", std::int64_t(2)}, {"c", true}})));
  CHECK_FALSE(i.find("sum")->request.conforms(st({{"a", std::int64_t(1)}})));
  CHECK_FALSE(i.find("sum")->request.conforms(st({{"a", std::int64_t(1)}, {"b", 2.0}})));
  CHECK(i.find("log")->request.conforms({}));
  CHECK(Interface::from_json(i.to_json()) == i);
  CHECK_THROWS_AS(i.subset({"nope"}), ValidationError);
  CHECK(i.subset({"log"}).operations.size() == 1);
  CHECK_THROWS_AS(iface(R"({"x":{"kind":"sometimes"}})"), ParseError);
  CHECK_THROWS_AS(iface(R"({"x":{"kind":"OneWay","request":{"a":"float"}}})"), ParseError);

  auto other = iface(R"({"log":{"kind":"OneWay","request":{"msg":"any"}},"ping":{"kind":"OneWay"}})");
  CHECK(merge_interfaces({i, other}).operations.size() == 3);
  auto clash = iface(R"({"log":{"kind":"OneWay","request":{"msg":"string"}}})");
  CHECK_THROWS_AS(merge_interfaces({i, clash}), InterfaceClash);
}

// ---------------------------------------------------------------- ports

namespace {

const char* kEcho = R"({"echo":{"kind":"SolicitResponse","request":{"n":"int"},"response":{"n":"int"}},
                        "tell":{"kind":"Notification","request":{"n":"int"}}})";

/// Records every line on every connection; checks that each endpoint only
/// answers ids it has read as requests, once each.
struct IdAudit {
  std::mutex mu;
  std::map<std::string, std::set<std::string>> requests_read, answered;
  std::vector<std::string> violations;

  void observe(const std::string& conn, bool outbound, std::string_view line) {
    Frame f;
    try {
      f = decode_frame(line);
    } catch (const DecodeError&) {
      return;
    }
    std::lock_guard lock(mu);
    if (!outbound && f.type == Frame::Type::Request) requests_read[conn].insert(f.id);
    if (outbound && f.type != Frame::Type::Request) {
      if (!f.id.empty() && !requests_read[conn].count(f.id)) violations.push_back(conn + " answered unknown " + f.id);
      if (!answered[conn].insert(f.id).second) violations.push_back(conn + " answered twice " + f.id);
    }
  }
};

}  // namespace

TEST_CASE("echo round trip and out-of-order answers") {
  auto audit = std::make_shared<IdAudit>();
  set_frame_tracer([audit](const std::string& c, bool out, std::string_view l) { audit->observe(c, out, l); });

  Network net;
  std::mutex held_mu;
  std::vector<std::pair<Frame, std::shared_ptr<ServerChannel>>> held;
  std::condition_variable held_cv;
  InputPort in("in", Location::local("echo"), net, [&](const Frame& f, const std::shared_ptr<ServerChannel>& ch) {
    if (f.operation == "tell") return;
    std::lock_guard lock(held_mu);
    held.emplace_back(f, ch);
    held_cv.notify_all();
  });
  in.start();

  OutputPort out("B", Location::local("echo"), iface(kEcho), "", net);
  auto t1 = out.solicit("echo", st({{"n", std::int64_t(1)}}), {});
  auto t2 = out.solicit("echo", st({{"n", std::int64_t(2)}}), {});
  {
    std::unique_lock lock(held_mu);
    REQUIRE(held_cv.wait_for(lock, 5s, [&] { return held.size() == 2; }));
  }
  CHECK(held[0].first.id != held[1].first.id);
  // Answer the second first.
  for (int i : {1, 0}) held[i].second->send_response(held[i].first.id, held[i].first.payload);
  held[0].second->send_response(held[0].first.id, {});  // second answer is dropped
  for (int i = 0; i < 500 && !(t1->ready() && t2->ready()); ++i) std::this_thread::sleep_for(5ms);
  CHECK(t1->take() == st({{"n", std::int64_t(1)}}));
  CHECK(t2->take() == st({{"n", std::int64_t(2)}}));

  out.notify("tell", st({{"n", std::int64_t(3)}}));
  CHECK_THROWS_AS(out.notify("tell", st({{"n", std::string("x")}})), Fault);
  try {
    out.notify("tell", {});
  } catch (const Fault& f) {
    CHECK(f.name() == faults::kTypeFault);
  }
  try {
    out.notify("echo", st({{"n", std::int64_t(1)}}));
  } catch (const Fault& f) {
    CHECK(f.name() == faults::kUnknownOperation);
  }
  in.stop();
  set_frame_tracer({});
  CHECK(audit->violations.empty());
}

TEST_CASE("remote faults and malformed lines") {
  Network net;
  InputPort in("in", Location::local("faulty"), net, [](const Frame& f, const std::shared_ptr<ServerChannel>&) {
    throw Fault(f.payload.lookup("name") ? std::get<std::string>(*f.payload.lookup("name")) : "F");
  });
  in.start();
  FrameClient client(net, Location::local("faulty"));
  Frame r = client.call(Frame::request("", "x", st({{"name", std::string("DivisionByZero")}})));
  CHECK(r.type == Frame::Type::Fault);
  CHECK(r.fault == "DivisionByZero");

  auto raw = net.connect(Location::local("faulty"));
  raw->write_line("{not json\n");
  Frame bad = decode_frame(*raw->read_line());
  CHECK(bad.type == Frame::Type::Fault);
  CHECK(bad.fault == faults::kProtocolFault);
  raw->write_line(R"({"id":"9","type":"response","operation":"x","resource":"","payload":{}})" "\n");
  Frame nonreq = decode_frame(*raw->read_line());
  CHECK(nonreq.id == "9");
  CHECK(nonreq.fault == faults::kProtocolFault);
  // Connection is still usable.
  raw->write_line(encode_frame(Frame::request("10", "x", {})));
  Frame ok = decode_frame(*raw->read_line());
  CHECK(ok.id == "10");
  CHECK(ok.fault == "F");
  in.stop();
}

TEST_CASE("unreachable target and type errors before I/O") {
  Network net;
  OutputPort out("B", Location::local("nobody"), iface(kEcho), "", net);
  auto t = out.solicit("echo", st({{"n", std::int64_t(1)}}), {});
  REQUIRE(t->ready());
  try {
    t->take();
    FAIL("expected IOFault");
  } catch (const Fault& f) {
    CHECK(f.name() == faults::kIoFault);
  }
  try {
    out.notify("tell", st({{"n", std::int64_t(1)}}));
    FAIL("expected IOFault");
  } catch (const Fault& f) {
    CHECK(f.name() == faults::kIoFault);
  }
  auto before = transport_stats().local_bytes.load();
  CHECK_THROWS_AS(out.solicit("echo", st({{"n", 1.5}}), {}), Fault);
  CHECK(transport_stats().local_bytes.load() == before);
}

TEST_CASE("connection loss fails outstanding solicits") {
  Network net;
  std::promise<std::shared_ptr<ServerChannel>> got;
  auto fut = got.get_future();
  std::atomic<bool> once{false};
  auto in = std::make_unique<InputPort>("in", Location::local("drop"), net,
                                        [&](const Frame&, const std::shared_ptr<ServerChannel>& ch) {
                                          if (!once.exchange(true)) got.set_value(ch);
                                        });
  in->start();
  OutputPort out("B", Location::local("drop"), iface(kEcho), "", net);
  auto t = out.solicit("echo", st({{"n", std::int64_t(1)}}), {});
  REQUIRE(fut.wait_for(5s) == std::future_status::ready);
  in->stop();
  for (int i = 0; i < 500 && !t->ready(); ++i) std::this_thread::sleep_for(5ms);
  REQUIRE(t->ready());
  CHECK_THROWS_AS(t->take(), Fault);
}
