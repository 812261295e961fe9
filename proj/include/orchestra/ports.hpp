#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "orchestra/frame.hpp"
#include "orchestra/interface.hpp"
#include "orchestra/interpreter.hpp"
#include "orchestra/message.hpp"
#include "orchestra/transport.hpp"

namespace orchestra {

inline constexpr const char* kFrameProtocol = "frame/1";

/// Client end of frame/1 towards one location. Keeps one connection open
/// (reconnecting on demand) and matches answers to requests by id, so any
/// number of requests may be outstanding at once.
class FrameClient {
 public:
  /// Receives the response or fault frame for one request. When the
  /// connection drops first, it receives a synthetic IOFault frame.
  using Callback = std::function<void(const Frame&)>;

  FrameClient(Network net, Location target);
  ~FrameClient();
  FrameClient(const FrameClient&) = delete;
  FrameClient& operator=(const FrameClient&) = delete;

  /// Fills in a fresh id and writes the frame. `on_reply` may be empty for
  /// fire-and-forget requests. Throws IoError; the callback is then not run.
  std::string send(Frame f, Callback on_reply);

  /// Blocking round trip. A timeout yields an IOFault frame.
  Frame call(Frame f, std::chrono::milliseconds timeout = std::chrono::seconds(10));

  void close();
  const Location& target() const noexcept { return target_; }

 private:
  struct Pending {
    std::shared_ptr<Connection> conn;
    std::string op;
    std::string resource;
    Callback cb;
  };
  void read_loop(std::shared_ptr<Connection> conn);

  Network net_;
  Location target_;
  std::mutex mu_;
  std::shared_ptr<Connection> conn_;
  std::map<std::string, Pending> pending_;
  std::uint64_t next_id_ = 1;
  std::vector<std::thread> readers_;
  bool closed_ = false;
};

/// Output port of a service: typed notify/solicit over a FrameClient.
class OutputPort {
 public:
  OutputPort(std::string name, Location target, Interface ops, std::string resource, Network net);

  /// Throws Fault (TypeFault before any I/O, IOFault on transport failure).
  void notify(const std::string& op, const State& payload);
  /// Throws Fault(TypeFault) for a bad request; transport failures and
  /// remote faults arrive through the ticket.
  std::shared_ptr<SolicitTicket> solicit(const std::string& op, const State& payload, std::function<void()> wake);

  const std::string& name() const noexcept { return name_; }
  const Location& target() const noexcept { return client_.target(); }
  const Interface& operations() const noexcept { return ops_; }
  void close() { client_.close(); }

 private:
  const OperationDecl& check(const std::string& op, OperationKind kind, const State& payload) const;

  std::string name_;
  Interface ops_;
  std::string resource_;
  FrameClient client_;
};

/// Server end of one accepted connection. Answers carry the operation and
/// resource of the request they answer; each request id is answered once.
class ServerChannel : public ReplyChannel {
 public:
  explicit ServerChannel(std::shared_ptr<Connection> conn) : conn_(std::move(conn)) {}

  const std::string& channel_id() const override { return conn_->id(); }
  void track(const Frame& request);
  /// Drops a tracked request that will never be answered (one-way).
  void forget(const std::string& request_id);
  void send_response(const std::string& request_id, const State& payload) override;
  void send_fault(const std::string& request_id, const std::string& fault) override;
  /// Writes any frame; transport errors are swallowed (the peer is gone).
  void send(const Frame& f);

 private:
  std::shared_ptr<Connection> conn_;
  std::mutex mu_;
  std::map<std::string, std::pair<std::string, std::string>> open_;  // id -> (op, resource)
};

using FrameHandler = std::function<void(const Frame&, const std::shared_ptr<ServerChannel>&)>;

/// Listener plus one reader per connection. Every well-formed request frame
/// goes to the handler; malformed lines and non-request frames are answered
/// with a ProtocolFault frame and the connection stays open.
class InputPort {
 public:
  InputPort(std::string name, Location where, Network net, FrameHandler handler);
  ~InputPort();

  /// Throws StartupError or NameClash.
  void start();
  void stop();

  const std::string& name() const noexcept { return name_; }
  /// The bound location once started.
  Location location() const;

 private:
  void accept_loop();
  void read_loop(std::shared_ptr<Connection> conn);

  std::string name_;
  Location where_;
  Network net_;
  FrameHandler handler_;
  std::unique_ptr<Listener> listener_;
  mutable std::mutex mu_;
  std::vector<std::shared_ptr<Connection>> conns_;
  std::vector<std::thread> threads_;
  std::thread acceptor_;
  std::atomic<bool> stopping_{false};
};

}  // namespace orchestra
