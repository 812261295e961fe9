#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

namespace orchestra {

/// `socket://host:port` or `local://name`.
struct Location {
  enum class Kind { Socket, Local };
  Kind kind = Kind::Local;
  std::string host;
  std::uint16_t port = 0;
  std::string name;

  /// Throws ParseError.
  static Location parse(std::string_view text);
  static Location socket(std::string host, std::uint16_t port);
  static Location local(std::string name);
  std::string to_string() const;

  friend bool operator==(const Location&, const Location&) = default;
};

/// A duplex line channel. Writes are safe from several threads; reads come
/// from a single reader.
class Connection {
 public:
  virtual ~Connection() = default;

  /// `line` normally ends with LF. Throws IoError.
  virtual void write_line(std::string_view line) = 0;
  /// Next line without its LF; nullopt at a clean end of stream. Throws
  /// IoError when the stream ends mid-line or fails.
  virtual std::optional<std::string> read_line() = 0;
  /// Idempotent; wakes a blocked reader on either end.
  virtual void close() = 0;

  const std::string& id() const noexcept { return id_; }
  std::uint64_t bytes_sent() const noexcept { return sent_; }
  std::uint64_t bytes_received() const noexcept { return received_; }

 protected:
  Connection();
  void count_sent(std::string_view line);
  void count_received(std::string_view line);

 private:
  std::string id_;
  std::atomic<std::uint64_t> sent_{0}, received_{0};
};

class Listener {
 public:
  virtual ~Listener() = default;
  /// Blocks for the next connection; nullptr once closed.
  virtual std::shared_ptr<Connection> accept() = 0;
  virtual void close() = 0;
  /// The bound location (socket port filled in when 0 was requested).
  virtual Location location() const = 0;
};

/// Process-wide byte counters, split by transport kind.
struct TransportStats {
  std::atomic<std::uint64_t> socket_bytes{0};
  std::atomic<std::uint64_t> local_bytes{0};
};
TransportStats& transport_stats();

/// Optional observer of every line crossing any connection. `outbound` is
/// true for lines written by the connection `conn`, false for lines it read.
using FrameTracer = std::function<void(const std::string& conn, bool outbound, std::string_view line)>;
void set_frame_tracer(FrameTracer tracer);

/// In-memory duplex pair; the first end is the client side by convention.
std::pair<std::shared_ptr<Connection>, std::shared_ptr<Connection>> make_memory_pair();

/// Names for local:// locations within one container. Always held by
/// shared_ptr.
class LocalRegistry : public std::enable_shared_from_this<LocalRegistry> {
 public:
  /// Throws NameClash when `name` is already bound.
  std::unique_ptr<Listener> bind(const std::string& name);
  /// Throws IoError when nothing listens on `name`.
  std::shared_ptr<Connection> connect(const std::string& name);
  bool bound(const std::string& name) const;

 private:
  friend class LocalListener;
  struct Slot;
  void unbind(const std::string& name, const Slot* slot);

  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Slot>> slots_;
};

/// Socket or local endpoints; local ones resolve through `registry`.
class Network {
 public:
  explicit Network(std::shared_ptr<LocalRegistry> registry = std::make_shared<LocalRegistry>())
      : registry_(std::move(registry)) {}

  /// Throws IoError.
  std::shared_ptr<Connection> connect(const Location& where) const;
  /// Throws StartupError (socket bind failure) or NameClash.
  std::unique_ptr<Listener> listen(const Location& where) const;

  const std::shared_ptr<LocalRegistry>& registry() const noexcept { return registry_; }

 private:
  std::shared_ptr<LocalRegistry> registry_;
};

}  // namespace orchestra
