#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "orchestra/engine.hpp"
#include "orchestra/event_log.hpp"
#include "orchestra/ports.hpp"
#include "orchestra/service.hpp"
#include "orchestra/transport.hpp"

namespace orchestra {

struct ContainerOptions {
  std::string name = "container";
  /// Local locations resolve through this network's registry; containers
  /// sharing a registry can reach each other's local names.
  Network network{std::make_shared<LocalRegistry>()};
  std::uint64_t seed = 0;
  std::shared_ptr<EventLog> log = std::make_shared<EventLog>();
  std::chrono::milliseconds watchdog_grace{500};
  bool trace_steps = false;
  /// Also host the runtime service (embed/unembed/setRedirect) at
  /// `local://<runtime_name>`.
  bool runtime_service = true;
  std::string runtime_name = "runtime";
};

struct RedirectEntry {
  Location target;
  /// Non-empty: only frames arriving on this channel may use the entry.
  std::string owner;
};

/// Hosts services and the master endpoint.
///
/// Config document:
/// ```
/// {"services": [ServiceDef, ...],
///  "embed": [name, ...],
///  "redirects": {resource: location} | [{"resource":..,"target":..,"owner":..}],
///  "aggregate": {"publish": [op, ...], "map": {op: service}},
///  "master": {"location": "socket://..", "service": name}}
/// ```
///
/// The master port forwards frames whose resource is non-empty through the
/// redirect table (first path segment selects the entry, the rest travels on
/// as the new resource). Frames without resource go through the aggregation
/// map when one is configured, else to the master's own service.
class Container {
 public:
  Container() : Container(ContainerOptions{}) {}
  explicit Container(ContainerOptions opts);
  ~Container();
  Container(const Container&) = delete;
  Container& operator=(const Container&) = delete;

  /// Validates the whole document, then starts everything. Throws
  /// ParseError, ValidationError, InterfaceClash, StartupError, NameClash.
  void load(const nlohmann::json& config);
  /// The validation half of `load`; returns the warnings. Starts nothing.
  static std::vector<std::string> check(const nlohmann::json& config);

  /// Adds and starts one service. Embedded services must use only local
  /// input locations (ValidationError). Throws NameClash when the name or a
  /// location is taken.
  void add_service(const ServiceDef& def, bool embedded = false);
  /// Embeds a service document under the name `as` (`${as}` in its port
  /// locations is replaced by `as`).
  void embed(std::string_view mobile_service, const std::string& as);
  /// Stops the engine (termination handlers run) and unbinds its ports.
  /// Throws UnknownService.
  void unembed(const std::string& name);

  /// Starts the master port at `where`. `service` names the service that
  /// answers frames without resource when there is no aggregation.
  void start_master(const Location& where, const std::string& service = {});
  /// Overwrites any previous entry for `resource`.
  void set_redirect(const std::string& resource, const Location& target, const std::string& owner = {});
  void clear_redirect(const std::string& resource);
  std::optional<RedirectEntry> redirect(const std::string& resource) const;
  /// Throws ValidationError / InterfaceClash.
  void set_aggregation(std::vector<std::string> publish, std::map<std::string, std::string> map);
  const Interface& published_interface() const { return published_; }

  /// Hook applied to frames relayed by the master. Identity by default.
  void set_relay_transform(std::function<Frame(Frame)> fn);

  bool has_service(const std::string& name) const;
  std::vector<std::string> service_names() const;
  Engine& engine(const std::string& name);
  const ServiceDef& definition(const std::string& name) const;
  /// Bound location of an input port (first port when `port` is empty).
  Location location(const std::string& service, const std::string& port = {}) const;
  std::optional<Location> master_location() const;

  std::vector<std::string> warnings() const;
  const std::shared_ptr<EventLog>& log() const noexcept { return opts_.log; }
  const Network& network() const noexcept { return opts_.network; }

  /// Waits until every session of every service has finished.
  bool wait_idle(std::chrono::milliseconds timeout);
  /// True when some port listens (input ports or the master).
  bool has_listeners() const;
  /// Stops the master, all services, and the runtime service.
  void stop();

 private:
  struct Hosted;
  void start_runtime();
  void handle_service_frame(Hosted& h, const PortDecl& port, const Frame& f, const std::shared_ptr<ServerChannel>& ch);
  void handle_master_frame(const Frame& f, const std::shared_ptr<ServerChannel>& ch);
  void handle_runtime_frame(const Frame& f, const std::shared_ptr<ServerChannel>& ch);
  void relay(const Location& target, Frame f, const std::shared_ptr<ServerChannel>& ch);
  std::shared_ptr<Hosted> find(const std::string& name) const;
  void warn(const std::string& w);
  std::uint64_t seed_for(const std::string& service) const;

  ContainerOptions opts_;

  mutable std::shared_mutex mu_;  // services_, redirects_, aggregation
  std::map<std::string, std::shared_ptr<Hosted>> services_;
  std::map<std::string, RedirectEntry> redirects_;
  std::map<std::string, std::string> aggregate_map_;
  Interface published_;
  std::string master_service_;
  std::function<Frame(Frame)> transform_;

  std::mutex clients_mu_;
  std::map<std::string, std::shared_ptr<FrameClient>> clients_;

  std::unique_ptr<InputPort> master_;
  std::unique_ptr<InputPort> runtime_;
  mutable std::mutex warn_mu_;
  std::vector<std::string> warnings_;
  bool stopped_ = false;
};

}  // namespace orchestra
