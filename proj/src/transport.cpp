#include "orchestra/transport.hpp"

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>

#include "orchestra/errors.hpp"

namespace orchestra {

// ---------------------------------------------------------------- Location

Location Location::socket(std::string host, std::uint16_t port) {
  Location l;
  l.kind = Kind::Socket;
  l.host = std::move(host);
  l.port = port;
  return l;
}

Location Location::local(std::string name) {
  Location l;
  l.kind = Kind::Local;
  l.name = std::move(name);
  return l;
}

Location Location::parse(std::string_view text) {
  constexpr std::string_view kSocket = "socket://", kLocal = "local://";
  if (text.substr(0, kLocal.size()) == kLocal) {
    auto name = text.substr(kLocal.size());
    if (name.empty() || name.find('/') != std::string_view::npos)
      throw ParseError("location: bad local name in '" + std::string(text) + "'");
    return local(std::string(name));
  }
  if (text.substr(0, kSocket.size()) == kSocket) {
    auto rest = text.substr(kSocket.size());
    auto colon = rest.rfind(':');
    if (colon == std::string_view::npos || colon == 0)
      throw ParseError("location: expected socket://host:port, got '" + std::string(text) + "'");
    auto port_text = rest.substr(colon + 1);
    unsigned port = 0;
    auto [end, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
    if (ec != std::errc() || end != port_text.data() + port_text.size() || port > 65535)
      throw ParseError("location: bad port in '" + std::string(text) + "'");
    return socket(std::string(rest.substr(0, colon)), static_cast<std::uint16_t>(port));
  }
  throw ParseError("location: unknown scheme in '" + std::string(text) + "'");
}

std::string Location::to_string() const {
  if (kind == Kind::Local) return "local://" + name;
  return "socket://" + host + ":" + std::to_string(port);
}

// ---------------------------------------------------------------- counters and tracing

TransportStats& transport_stats() {
  static TransportStats stats;
  return stats;
}

namespace {

std::mutex tracer_mu;
std::shared_ptr<FrameTracer> tracer;

std::shared_ptr<FrameTracer> current_tracer() {
  std::lock_guard lock(tracer_mu);
  return tracer;
}

std::atomic<std::uint64_t> next_connection{1};

}  // namespace

void set_frame_tracer(FrameTracer t) {
  std::lock_guard lock(tracer_mu);
  tracer = t ? std::make_shared<FrameTracer>(std::move(t)) : nullptr;
}

Connection::Connection() : id_("conn-" + std::to_string(next_connection++)) {}

void Connection::count_sent(std::string_view line) {
  sent_ += line.size();
  if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
  if (auto t = current_tracer()) (*t)(id_, true, line);
}

void Connection::count_received(std::string_view line) {
  received_ += line.size() + 1;
  if (auto t = current_tracer()) (*t)(id_, false, line);
}

// ---------------------------------------------------------------- memory pipes

namespace {

struct Pipe {
  std::mutex mu;
  std::condition_variable cv;
  std::string buf;
  bool closed = false;

  void shut() {
    {
      std::lock_guard lock(mu);
      closed = true;
    }
    cv.notify_all();
  }
};

class MemoryConnection : public Connection {
 public:
  MemoryConnection(std::shared_ptr<Pipe> in, std::shared_ptr<Pipe> out) : in_(std::move(in)), out_(std::move(out)) {}
  ~MemoryConnection() override { close(); }

  void write_line(std::string_view line) override {
    {
      std::lock_guard lock(out_->mu);
      if (out_->closed) throw IoError("connection closed");
      out_->buf.append(line);
    }
    out_->cv.notify_all();
    transport_stats().local_bytes += line.size();
    count_sent(line);
  }

  std::optional<std::string> read_line() override {
    std::unique_lock lock(in_->mu);
    in_->cv.wait(lock, [&] { return in_->closed || in_->buf.find('\n') != std::string::npos; });
    auto nl = in_->buf.find('\n');
    if (nl == std::string::npos) {
      if (in_->buf.empty()) return std::nullopt;
      in_->buf.clear();
      throw IoError("connection closed mid-line");
    }
    std::string line = in_->buf.substr(0, nl);
    in_->buf.erase(0, nl + 1);
    lock.unlock();
    count_received(line);
    return line;
  }

  void close() override {
    in_->shut();
    out_->shut();
  }

 private:
  std::shared_ptr<Pipe> in_, out_;
};

}  // namespace

std::pair<std::shared_ptr<Connection>, std::shared_ptr<Connection>> make_memory_pair() {
  auto a = std::make_shared<Pipe>(), b = std::make_shared<Pipe>();
  return {std::make_shared<MemoryConnection>(b, a), std::make_shared<MemoryConnection>(a, b)};
}

// ---------------------------------------------------------------- local registry

struct LocalRegistry::Slot {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::shared_ptr<Connection>> pending;
  bool closed = false;
};

class LocalListener : public Listener {
 public:
  LocalListener(std::weak_ptr<LocalRegistry> registry, std::string name, std::shared_ptr<LocalRegistry::Slot> slot)
      : registry_(registry), name_(std::move(name)), slot_(std::move(slot)) {}
  ~LocalListener() override { close(); }

  std::shared_ptr<Connection> accept() override {
    std::unique_lock lock(slot_->mu);
    slot_->cv.wait(lock, [&] { return slot_->closed || !slot_->pending.empty(); });
    if (slot_->closed) return nullptr;
    auto c = std::move(slot_->pending.front());
    slot_->pending.pop_front();
    return c;
  }

  void close() override {
    {
      std::lock_guard lock(slot_->mu);
      if (slot_->closed) return;
      slot_->closed = true;
      for (auto& c : slot_->pending) c->close();
      slot_->pending.clear();
    }
    slot_->cv.notify_all();
    if (auto r = registry_.lock()) r->unbind(name_, slot_.get());
  }

  Location location() const override { return Location::local(name_); }

 private:
  std::weak_ptr<LocalRegistry> registry_;
  std::string name_;
  std::shared_ptr<LocalRegistry::Slot> slot_;
};

std::unique_ptr<Listener> LocalRegistry::bind(const std::string& name) {
  std::lock_guard lock(mu_);
  if (slots_.count(name)) throw NameClash("local://" + name + " is already bound");
  auto slot = std::make_shared<Slot>();
  slots_[name] = slot;
  return std::make_unique<LocalListener>(weak_from_this(), name, slot);
}

void LocalRegistry::unbind(const std::string& name, const Slot* slot) {
  std::lock_guard lock(mu_);
  if (auto it = slots_.find(name); it != slots_.end() && it->second.get() == slot) slots_.erase(it);
}

bool LocalRegistry::bound(const std::string& name) const {
  std::lock_guard lock(mu_);
  return slots_.count(name) > 0;
}

std::shared_ptr<Connection> LocalRegistry::connect(const std::string& name) {
  std::shared_ptr<Slot> slot;
  {
    std::lock_guard lock(mu_);
    auto it = slots_.find(name);
    if (it == slots_.end()) throw IoError("nothing listens on local://" + name);
    slot = it->second;
  }
  auto [client, server] = make_memory_pair();
  {
    std::lock_guard lock(slot->mu);
    if (slot->closed) throw IoError("nothing listens on local://" + name);
    slot->pending.push_back(server);
  }
  slot->cv.notify_all();
  return client;
}

// ---------------------------------------------------------------- sockets

namespace {

class SocketConnection : public Connection {
 public:
  explicit SocketConnection(int fd) : fd_(fd) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  ~SocketConnection() override {
    close();
    ::close(fd_);
  }

  void write_line(std::string_view line) override {
    std::lock_guard lock(write_mu_);
    std::size_t off = 0;
    while (off < line.size()) {
      ssize_t n = ::send(fd_, line.data() + off, line.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw IoError(std::string("send: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
    transport_stats().socket_bytes += line.size();
    count_sent(line);
  }

  std::optional<std::string> read_line() override {
    for (;;) {
      if (auto nl = buf_.find('\n'); nl != std::string::npos) {
        std::string line = buf_.substr(0, nl);
        buf_.erase(0, nl + 1);
        count_received(line);
        return line;
      }
      char chunk[4096];
      ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n < 0) {
        if (errno == EINTR) continue;
        if (closed_) return std::nullopt;
        throw IoError(std::string("recv: ") + std::strerror(errno));
      }
      if (n == 0) {
        if (buf_.empty()) return std::nullopt;
        buf_.clear();
        throw IoError("connection closed mid-line");
      }
      buf_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  void close() override {
    if (!closed_.exchange(true)) ::shutdown(fd_, SHUT_RDWR);
  }

 private:
  int fd_;
  std::mutex write_mu_;
  std::string buf_;
  std::atomic<bool> closed_{false};
};

class SocketListener : public Listener {
 public:
  SocketListener(int fd, Location where) : fd_(fd), where_(std::move(where)) {}
  ~SocketListener() override {
    close();
    ::close(fd_);
  }

  std::shared_ptr<Connection> accept() override {
    for (;;) {
      int c = ::accept(fd_, nullptr, nullptr);
      if (c >= 0) {
        if (closed_) {
          ::close(c);
          return nullptr;
        }
        return std::make_shared<SocketConnection>(c);
      }
      if (errno == EINTR || errno == ECONNABORTED) continue;
      return nullptr;
    }
  }

  void close() override {
    if (!closed_.exchange(true)) ::shutdown(fd_, SHUT_RDWR);
  }

  Location location() const override { return where_; }

 private:
  int fd_;
  Location where_;
  std::atomic<bool> closed_{false};
};

addrinfo* resolve(const Location& where, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  std::string port = std::to_string(where.port);
  const char* host = where.host.empty() ? nullptr : where.host.c_str();
  if (int rc = ::getaddrinfo(host, port.c_str(), &hints, &res); rc != 0)
    throw IoError("resolve " + where.to_string() + ": " + ::gai_strerror(rc));
  return res;
}

}  // namespace

std::shared_ptr<Connection> Network::connect(const Location& where) const {
  if (where.kind == Location::Kind::Local) return registry_->connect(where.name);
  addrinfo* res = resolve(where, false);
  int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0) {
    ::freeaddrinfo(res);
    throw IoError(std::string("socket: ") + std::strerror(errno));
  }
  int rc;
  do {
    rc = ::connect(fd, res->ai_addr, res->ai_addrlen);
  } while (rc != 0 && errno == EINTR);
  int err = errno;
  ::freeaddrinfo(res);
  if (rc != 0) {
    ::close(fd);
    throw IoError("connect " + where.to_string() + ": " + std::strerror(err));
  }
  return std::make_shared<SocketConnection>(fd);
}

std::unique_ptr<Listener> Network::listen(const Location& where) const {
  if (where.kind == Location::Kind::Local) return registry_->bind(where.name);
  addrinfo* res;
  try {
    res = resolve(where, true);
  } catch (const IoError& e) {
    throw StartupError(e.what());
  }
  int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0) {
    ::freeaddrinfo(res);
    throw StartupError(std::string("socket: ") + std::strerror(errno));
  }
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(fd, res->ai_addr, res->ai_addrlen) != 0 || ::listen(fd, 64) != 0) {
    int err = errno;
    ::freeaddrinfo(res);
    ::close(fd);
    throw StartupError("bind " + where.to_string() + ": " + std::strerror(err));
  }
  ::freeaddrinfo(res);
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
  return std::make_unique<SocketListener>(fd, Location::socket(where.host, ntohs(bound.sin_port)));
}

}  // namespace orchestra
