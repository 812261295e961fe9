#include "orchestra/container.hpp"

#include <algorithm>
#include <set>

#include "orchestra/errors.hpp"

namespace orchestra {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

struct Container::Hosted {
  ServiceDef def;
  bool embedded = false;
  std::unique_ptr<Engine> engine;
  std::vector<std::unique_ptr<InputPort>> ports;
  /// Accepts every input operation; used when the master hands frames to
  /// its own service directly.
  PortDecl all_inputs;
};

namespace {

const char* fault_name_for(const std::exception& e) {
  if (dynamic_cast<const NameClash*>(&e)) return "NameClash";
  if (dynamic_cast<const UnknownService*>(&e)) return "UnknownService";
  if (dynamic_cast<const InterfaceClash*>(&e)) return "InterfaceClash";
  if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const ParseError*>(&e)) return "ValidationError";
  if (dynamic_cast<const StartupError*>(&e)) return "StartupError";
  if (dynamic_cast<const StorageError*>(&e)) return faults::kStorageError;
  return faults::kIoFault;
}

std::string string_arg(const State& payload, const char* field) {
  auto v = payload.lookup(field);
  if (!v || !std::holds_alternative<std::string>(*v)) throw Fault(faults::kTypeFault, std::string("missing string field ") + field);
  return std::get<std::string>(*v);
}

}  // namespace

Container::Container(ContainerOptions opts) : opts_(std::move(opts)) {
  if (!opts_.log) opts_.log = std::make_shared<EventLog>();
  if (opts_.runtime_service) start_runtime();
}

Container::~Container() { stop(); }

void Container::warn(const std::string& w) {
  {
    std::lock_guard lock(warn_mu_);
    warnings_.push_back(w);
  }
  opts_.log->record(opts_.name, "warning", w);
}

std::vector<std::string> Container::warnings() const {
  std::lock_guard lock(warn_mu_);
  return warnings_;
}

std::uint64_t Container::seed_for(const std::string& service) const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : service) h = (h ^ c) * 1099511628211ULL;
  return opts_.seed ^ h;
}

std::shared_ptr<Container::Hosted> Container::find(const std::string& name) const {
  std::shared_lock lock(mu_);
  auto it = services_.find(name);
  return it == services_.end() ? nullptr : it->second;
}

bool Container::has_service(const std::string& name) const { return find(name) != nullptr; }

std::vector<std::string> Container::service_names() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  for (const auto& [n, h] : services_) out.push_back(n);
  return out;
}

Engine& Container::engine(const std::string& name) {
  auto h = find(name);
  if (!h) throw UnknownService("no service '" + name + "'");
  return *h->engine;
}

const ServiceDef& Container::definition(const std::string& name) const {
  auto h = find(name);
  if (!h) throw UnknownService("no service '" + name + "'");
  return h->def;
}

Location Container::location(const std::string& service, const std::string& port) const {
  auto h = find(service);
  if (!h) throw UnknownService("no service '" + service + "'");
  for (const auto& p : h->ports)
    if (port.empty() || p->name() == port) return p->location();
  throw UnknownService("service '" + service + "' has no input port '" + port + "'");
}

std::optional<Location> Container::master_location() const {
  if (!master_) return std::nullopt;
  return master_->location();
}

// ---------------------------------------------------------------- services

void Container::add_service(const ServiceDef& def, bool embedded) {
  if (stopped_) throw StartupError("container stopped");
  if (embedded)
    for (const auto& p : def.input_ports)
      if (p.location.kind != Location::Kind::Local)
        throw ValidationError("embedded service '" + def.name + "' has non-local input port '" + p.name + "'");

  auto h = std::make_shared<Hosted>();
  h->def = def;
  h->embedded = embedded;
  h->all_inputs.name = "master";
  for (const auto& [n, d] : def.interface.operations)
    if (is_input(d.kind)) h->all_inputs.operations.push_back(n);
  {
    std::unique_lock lock(mu_);
    if (services_.count(def.name)) throw NameClash("service '" + def.name + "' already exists");
    services_[def.name] = nullptr;  // reserve the name
  }
  auto release = [&] {
    std::unique_lock lock(mu_);
    services_.erase(def.name);
  };

  try {
    EngineConfig cfg;
    cfg.service = def.name;
    cfg.behaviour = def.behaviour;
    cfg.correlation = def.correlation;
    cfg.interface = def.interface;
    cfg.mode = def.engine.mode;
    cfg.storage_path = def.engine.storage;
    cfg.globals = def.engine.globals;
    cfg.seed = seed_for(def.name);
    cfg.watchdog_grace = opts_.watchdog_grace;
    cfg.trace_steps = opts_.trace_steps;
    cfg.log = opts_.log;
    for (const auto& p : def.output_ports)
      cfg.outputs[p.name] = std::make_shared<OutputPort>(p.name, p.location, def.interface.subset(p.operations),
                                                         p.resource, opts_.network);
    h->engine = std::make_unique<Engine>(std::move(cfg));
    h->engine->start(false);

    Hosted* raw = h.get();
    for (const auto& p : def.input_ports) {
      auto port = std::make_unique<InputPort>(
          p.name, p.location, opts_.network,
          [this, raw, p](const Frame& f, const std::shared_ptr<ServerChannel>& ch) { handle_service_frame(*raw, p, f, ch); });
      port->start();
      h->ports.push_back(std::move(port));
    }
    h->engine->fire();
  } catch (...) {
    for (auto& p : h->ports) p->stop();
    if (h->engine) h->engine->stop(std::chrono::milliseconds(200));
    release();
    throw;
  }
  {
    std::unique_lock lock(mu_);
    services_[def.name] = h;
  }
  std::string where;
  for (const auto& p : h->ports) where += (where.empty() ? "" : " ") + p->location().to_string();
  opts_.log->record(opts_.name, embedded ? "embed" : "service", def.name + (where.empty() ? "" : " " + where));
}

void Container::embed(std::string_view mobile_service, const std::string& as) {
  ServiceDef def = ServiceDef::from_json(instantiate_service(parse_json_strict(mobile_service), as));
  add_service(def, true);
}

void Container::unembed(const std::string& name) {
  std::shared_ptr<Hosted> h;
  {
    std::unique_lock lock(mu_);
    auto it = services_.find(name);
    if (it == services_.end() || !it->second) throw UnknownService("no service '" + name + "'");
    h = it->second;
    services_.erase(it);
  }
  for (auto& p : h->ports) p->stop();
  h->engine->stop(std::chrono::seconds(1));
  opts_.log->record(opts_.name, "unembed", name);
}

void Container::handle_service_frame(Hosted& h, const PortDecl& port, const Frame& f,
                                     const std::shared_ptr<ServerChannel>& ch) {
  bool listed = false;
  for (const auto& op : port.operations) listed = listed || op == f.operation;
  const OperationDecl* decl = h.def.interface.find(f.operation);
  if (!listed || !decl) throw Fault(faults::kUnknownOperation, f.operation);
  if (auto why = decl->request.mismatch(f.payload); !why.empty()) throw Fault(faults::kTypeFault, why);

  const bool rr = decl->kind == OperationKind::RequestResponse;
  Message m;
  m.operation = f.operation;
  m.payload = f.payload;
  m.resource = f.resource;
  m.channel_id = ch->channel_id();
  m.request_id = f.id;
  if (rr) m.reply_to = ch;
  RoutingOutcome r = h.engine->submit(std::move(m));
  if (r.kind == RoutingOutcome::Kind::Rejected)
    ch->send_fault(f.id, r.fault);
  else if (!rr)
    ch->forget(f.id);
}

// ---------------------------------------------------------------- master

void Container::start_master(const Location& where, const std::string& service) {
  if (master_) throw StartupError("master already started");
  {
    std::unique_lock lock(mu_);
    master_service_ = service;
  }
  auto port = std::make_unique<InputPort>("master", where, opts_.network,
                                          [this](const Frame& f, const std::shared_ptr<ServerChannel>& ch) {
                                            handle_master_frame(f, ch);
                                          });
  port->start();
  master_ = std::move(port);
  opts_.log->record(opts_.name, "master", master_->location().to_string());
}

void Container::set_redirect(const std::string& resource, const Location& target, const std::string& owner) {
  if (resource.empty() || resource.find('/') != std::string::npos)
    throw ValidationError("bad resource name '" + resource + "'");
  {
    std::unique_lock lock(mu_);
    redirects_[resource] = {target, owner};
  }
  opts_.log->record(opts_.name, "redirect", resource + " -> " + target.to_string());
}

void Container::clear_redirect(const std::string& resource) {
  std::unique_lock lock(mu_);
  redirects_.erase(resource);
}

std::optional<RedirectEntry> Container::redirect(const std::string& resource) const {
  std::shared_lock lock(mu_);
  auto it = redirects_.find(resource);
  if (it == redirects_.end()) return std::nullopt;
  return it->second;
}

void Container::set_aggregation(std::vector<std::string> publish, std::map<std::string, std::string> map) {
  std::vector<Interface> parts;
  std::set<std::string> members;
  for (const auto& [op, svc] : map) {
    auto h = find(svc);
    if (!h) throw ValidationError("aggregation maps '" + op + "' to unknown service '" + svc + "'");
    const OperationDecl* d = h->def.interface.find(op);
    if (!d || !is_input(d->kind)) throw ValidationError("service '" + svc + "' has no input operation '" + op + "'");
    if (!h->def.input_port_for(op)) throw ValidationError("service '" + svc + "' exposes no port for '" + op + "'");
    if (members.insert(svc).second) parts.push_back(h->def.input_interface());
  }
  Interface merged = merge_interfaces(parts);
  if (publish.empty())
    for (const auto& [op, svc] : map) publish.push_back(op);
  Interface published;
  for (const auto& op : publish) {
    if (!map.count(op)) throw ValidationError("aggregation map has no entry for published '" + op + "'");
    published.operations.emplace(op, *merged.find(op));
  }
  std::unique_lock lock(mu_);
  aggregate_map_ = std::move(map);
  published_ = std::move(published);
}

void Container::set_relay_transform(std::function<Frame(Frame)> fn) {
  std::unique_lock lock(mu_);
  transform_ = std::move(fn);
}

void Container::handle_master_frame(const Frame& f, const std::shared_ptr<ServerChannel>& ch) {
  std::optional<Location> target;
  std::shared_ptr<Hosted> own;
  Frame fwd = f;
  {
    std::shared_lock lock(mu_);
    if (!f.resource.empty()) {
      auto slash = f.resource.find('/');
      std::string head = f.resource.substr(0, slash);
      auto it = redirects_.find(head);
      if (it == redirects_.end() || (!it->second.owner.empty() && it->second.owner != ch->channel_id()))
        throw Fault(faults::kUnknownResource, head);
      target = it->second.target;
      fwd.resource = slash == std::string::npos ? std::string() : f.resource.substr(slash + 1);
    } else if (!aggregate_map_.empty()) {
      auto it = aggregate_map_.find(f.operation);
      if (it == aggregate_map_.end() || !published_.find(f.operation)) throw Fault(faults::kUnknownOperation, f.operation);
      auto h = services_.find(it->second);
      if (h == services_.end() || !h->second) throw Fault(faults::kIoFault, "member gone");
      const PortDecl* p = h->second->def.input_port_for(f.operation);
      for (const auto& port : h->second->ports)
        if (p && port->name() == p->name) target = port->location();
      if (!target) throw Fault(faults::kIoFault, "member has no port");
    } else if (!master_service_.empty()) {
      auto h = services_.find(master_service_);
      if (h != services_.end()) own = h->second;
    }
    if (target && transform_) fwd = transform_(std::move(fwd));
  }
  if (target) return relay(*target, std::move(fwd), ch);
  if (own) return handle_service_frame(*own, own->all_inputs, f, ch);
  throw Fault(faults::kUnknownResource, "no resource");
}

void Container::relay(const Location& target, Frame f, const std::shared_ptr<ServerChannel>& ch) {
  std::shared_ptr<FrameClient> client;
  {
    std::lock_guard lock(clients_mu_);
    auto& slot = clients_[target.to_string()];
    if (!slot) slot = std::make_shared<FrameClient>(opts_.network, target);
    client = slot;
  }
  const std::string id = f.id;
  opts_.log->record(opts_.name, "relay", f.operation + " -> " + target.to_string());
  try {
    client->send(std::move(f), [ch, id](const Frame& r) {
      if (r.type == Frame::Type::Fault)
        ch->send_fault(id, r.fault);
      else
        ch->send_response(id, r.payload);
    });
  } catch (const IoError&) {
    ch->send_fault(id, faults::kIoFault);
  }
}

// ---------------------------------------------------------------- runtime

void Container::start_runtime() {
  runtime_ = std::make_unique<InputPort>("runtime", Location::local(opts_.runtime_name), opts_.network,
                                         [this](const Frame& f, const std::shared_ptr<ServerChannel>& ch) {
                                           handle_runtime_frame(f, ch);
                                         });
  runtime_->start();
}

void Container::handle_runtime_frame(const Frame& f, const std::shared_ptr<ServerChannel>& ch) {
  State out;
  try {
    if (f.operation == "embed") {
      std::string as = string_arg(f.payload, "as");
      embed(string_arg(f.payload, "service"), as);
      out.set("name", as);
    } else if (f.operation == "unembed") {
      unembed(string_arg(f.payload, "name"));
    } else if (f.operation == "setRedirect") {
      std::string owner;
      if (auto v = f.payload.lookup("owner"); v && std::holds_alternative<std::string>(*v)) owner = std::get<std::string>(*v);
      set_redirect(string_arg(f.payload, "resource"), Location::parse(string_arg(f.payload, "target")), owner);
    } else {
      throw Fault(faults::kUnknownOperation, f.operation);
    }
  } catch (const Fault&) {
    throw;
  } catch (const std::exception& e) {
    opts_.log->record(opts_.name, "runtime-error", f.operation + ": " + e.what());
    throw Fault(fault_name_for(e), e.what());
  }
  ch->send_response(f.id, out);
}

// ---------------------------------------------------------------- config

namespace {

struct LoadPlan {
  std::vector<ServiceDef> defs;
  std::set<std::string> embedded;
  std::vector<std::tuple<std::string, Location, std::string>> redirects;
  std::optional<Location> master_at;
  std::string master_service;
  bool aggregate = false;
  std::vector<std::string> publish;
  std::map<std::string, std::string> amap;
  std::vector<std::string> warnings;
};

LoadPlan plan_config(const json& config, const std::function<bool(const std::string&)>& taken) {
  if (!config.is_object()) throw ParseError("container config must be an object");
  for (const auto& [k, v] : config.items())
    if (k != "services" && k != "embed" && k != "redirects" && k != "aggregate" && k != "master")
      throw ParseError("container config: unknown key '" + k + "'");

  LoadPlan plan;
  auto& defs = plan.defs;
  std::set<std::string> names;
  if (auto it = config.find("services"); it != config.end()) {
    if (!it->is_array()) throw ParseError("'services' must be an array");
    for (const auto& s : *it) {
      defs.push_back(ServiceDef::from_json(s));
      if (!names.insert(defs.back().name).second || taken(defs.back().name))
        throw ValidationError("duplicate service '" + defs.back().name + "'");
    }
  }

  auto& embedded = plan.embedded;
  if (auto it = config.find("embed"); it != config.end()) {
    if (!it->is_array()) throw ParseError("'embed' must be an array");
    for (const auto& n : *it) {
      if (!n.is_string()) throw ParseError("'embed' entries must be service names");
      if (!names.count(n.get<std::string>())) throw ValidationError("embed names unknown service " + n.dump());
      embedded.insert(n.get<std::string>());
    }
  }

  auto& redirects = plan.redirects;
  if (auto it = config.find("redirects"); it != config.end()) {
    std::set<std::string> seen;
    auto add = [&](const std::string& resource, const json& target, const json* owner) {
      if (!target.is_string()) throw ParseError("redirect target must be a location string");
      if (owner && !owner->is_string()) throw ParseError("redirect owner must be a string");
      if (resource.empty() || resource.find('/') != std::string::npos)
        throw ValidationError("bad resource name '" + resource + "'");
      if (!seen.insert(resource).second) throw ValidationError("duplicate redirect resource '" + resource + "'");
      redirects.emplace_back(resource, Location::parse(target.get<std::string>()), owner ? owner->get<std::string>() : "");
    };
    if (it->is_object()) {
      for (const auto& [r, t] : it->items()) add(r, t, nullptr);
    } else if (it->is_array()) {
      for (const auto& e : *it) {
        if (!e.is_object() || !e.contains("resource") || !e.contains("target") || !e["resource"].is_string())
          throw ParseError("redirect entries need 'resource' and 'target'");
        add(e["resource"].get<std::string>(), e["target"], e.contains("owner") ? &e["owner"] : nullptr);
      }
    } else {
      throw ParseError("'redirects' must be an object or an array");
    }
  }

  auto& master_at = plan.master_at;
  auto& master_service = plan.master_service;
  if (auto it = config.find("master"); it != config.end()) {
    if (it->is_string()) {
      master_at = Location::parse(it->get<std::string>());
    } else if (it->is_object() && it->contains("location") && (*it)["location"].is_string()) {
      master_at = Location::parse((*it)["location"].get<std::string>());
      if (auto s = it->find("service"); s != it->end()) {
        if (!s->is_string() || !names.count(s->get<std::string>()))
          throw ValidationError("master service must name a configured service");
        master_service = s->get<std::string>();
      }
    } else {
      throw ParseError("'master' must be a location or {\"location\":..,\"service\":..}");
    }
  }

  auto& publish = plan.publish;
  auto& amap = plan.amap;
  const json* aggregate = nullptr;
  if (auto it = config.find("aggregate"); it != config.end()) {
    aggregate = &*it;
    if (!it->is_object() || !it->contains("map") || !(*it)["map"].is_object())
      throw ParseError("'aggregate' needs a 'map' object");
    for (const auto& [op, svc] : (*it)["map"].items()) {
      if (!svc.is_string()) throw ParseError("aggregate map values must be service names");
      amap[op] = svc.get<std::string>();
    }
    if (auto p = it->find("publish"); p != it->end()) {
      if (!p->is_array()) throw ParseError("'publish' must be an array");
      for (const auto& op : *p) {
        if (!op.is_string()) throw ParseError("'publish' entries must be operation names");
        publish.push_back(op.get<std::string>());
      }
    }
    // Static check before anything starts.
    std::vector<Interface> parts;
    std::set<std::string> members;
    for (const auto& [op, svc] : amap) {
      auto d = std::find_if(defs.begin(), defs.end(), [&](const ServiceDef& x) { return x.name == svc; });
      if (d == defs.end()) throw ValidationError("aggregation maps '" + op + "' to unknown service '" + svc + "'");
      if (members.insert(svc).second) parts.push_back(d->input_interface());
    }
    merge_interfaces(parts);
    for (const auto& op : publish)
      if (!amap.count(op)) throw ValidationError("aggregation map has no entry for published '" + op + "'");
  }
  if ((!redirects.empty() || aggregate) && !master_at)
    throw ValidationError("redirects and aggregation need a master port");
  for (const auto& name : embedded)
    for (const auto& d : defs)
      if (d.name == name)
        for (const auto& p : d.input_ports)
          if (p.location.kind != Location::Kind::Local)
            throw ValidationError("embedded service '" + name + "' has non-local input port '" + p.name + "'");

  if (std::none_of(defs.begin(), defs.end(), [](const ServiceDef& d) { return d.engine.firing; }))
    plan.warnings.push_back("NoFiringSession");
  plan.aggregate = aggregate != nullptr;
  return plan;
}

}  // namespace

std::vector<std::string> Container::check(const json& config) {
  return plan_config(config, [](const std::string&) { return false; }).warnings;
}

void Container::load(const json& config) {
  LoadPlan plan = plan_config(config, [this](const std::string& n) { return has_service(n); });
  for (const auto& w : plan.warnings) warn(w);
  for (const auto& d : plan.defs) add_service(d, plan.embedded.count(d.name) > 0);
  if (plan.aggregate) set_aggregation(plan.publish, plan.amap);
  for (const auto& [r, t, o] : plan.redirects) set_redirect(r, t, o);
  if (plan.master_at) start_master(*plan.master_at, plan.master_service);
}

// ---------------------------------------------------------------- lifecycle

bool Container::wait_idle(std::chrono::milliseconds timeout) {
  auto deadline = Clock::now() + timeout;
  for (const auto& name : service_names()) {
    auto h = find(name);
    if (!h) continue;
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    if (left.count() < 0 || !h->engine->wait_all_finished(left)) return false;
  }
  return true;
}

bool Container::has_listeners() const {
  if (master_) return true;
  std::shared_lock lock(mu_);
  for (const auto& [n, h] : services_)
    if (h && !h->ports.empty()) return true;
  return false;
}

void Container::stop() {
  if (stopped_) return;
  stopped_ = true;
  if (master_) master_->stop();
  {
    std::lock_guard lock(clients_mu_);
    for (auto& [t, c] : clients_) c->close();
  }
  std::vector<std::shared_ptr<Hosted>> all;
  {
    std::unique_lock lock(mu_);
    for (auto& [n, h] : services_)
      if (h) all.push_back(h);
  }
  for (auto& h : all)
    for (auto& p : h->ports) p->stop();
  for (auto& h : all) h->engine->stop(std::chrono::seconds(1));
  if (runtime_) runtime_->stop();
  {
    std::lock_guard lock(clients_mu_);
    clients_.clear();
  }
}

}  // namespace orchestra
