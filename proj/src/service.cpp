#include "orchestra/service.hpp"

#include <vector>

#include "orchestra/errors.hpp"
#include "orchestra/ports.hpp"
#include "orchestra/state_json.hpp"

namespace orchestra {

using nlohmann::json;

namespace {

[[noreturn]] void parse_fail(const std::string& what) { throw ParseError("service: " + what); }
[[noreturn]] void invalid(const std::string& service, const std::string& what) {
  throw ValidationError("service '" + service + "': " + what);
}

void only_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& [k, v] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) parse_fail(where + ": unknown key '" + k + "'");
  }
}

const json& required(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) parse_fail(where + ": missing '" + key + "'");
  return *it;
}

std::string string_field(const json& j, const std::string& where) {
  if (!j.is_string()) parse_fail(where + " must be a string");
  return j.get<std::string>();
}

bool good_service_name(const std::string& name) {
  if (name.empty()) return false;
  for (char c : name)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
  return true;
}

PortDecl parse_port(const json& j, bool output) {
  if (!j.is_object()) parse_fail("port must be an object");
  if (output)
    only_keys(j, {"name", "location", "protocol", "interface", "resource"}, "output port");
  else
    only_keys(j, {"name", "location", "protocol", "interface"}, "input port");
  PortDecl p;
  p.name = string_field(required(j, "name", "port"), "port name");
  const std::string where = "port '" + p.name + "'";
  p.location = Location::parse(string_field(required(j, "location", where), where + " location"));
  if (auto it = j.find("protocol"); it != j.end()) p.protocol = string_field(*it, where + " protocol");
  const json& ops = required(j, "interface", where);
  if (!ops.is_array()) parse_fail(where + ": 'interface' must be a list of operation names");
  for (const auto& op : ops) p.operations.push_back(string_field(op, where + " operation"));
  if (auto it = j.find("resource"); it != j.end()) p.resource = string_field(*it, where + " resource");
  return p;
}

json port_json(const PortDecl& p, bool output) {
  json j;
  j["name"] = p.name;
  j["location"] = p.location.to_string();
  j["protocol"] = p.protocol;
  j["interface"] = p.operations;
  if (output && !p.resource.empty()) j["resource"] = p.resource;
  return j;
}

EngineSettings parse_engine(const json& j) {
  if (!j.is_object()) parse_fail("'engine' must be an object");
  only_keys(j, {"mode", "firing", "initiators", "storage", "globals"}, "engine");
  EngineSettings e;
  if (auto it = j.find("mode"); it != j.end()) {
    auto mode = string_field(*it, "engine mode");
    if (mode == "sequential")
      e.mode = ExecutionMode::Sequential;
    else if (mode != "concurrent")
      parse_fail("engine mode must be sequential or concurrent");
  }
  if (auto it = j.find("firing"); it != j.end()) {
    if (!it->is_boolean()) parse_fail("'firing' must be a boolean");
    e.firing = it->get<bool>();
  }
  if (auto it = j.find("initiators"); it != j.end()) {
    if (!it->is_array()) parse_fail("'initiators' must be an array");
    for (const auto& op : *it) e.initiators.insert(string_field(op, "initiator"));
  }
  if (auto it = j.find("storage"); it != j.end()) e.storage = string_field(*it, "storage");
  if (auto it = j.find("globals"); it != j.end()) {
    try {
      e.globals = state_from_json(*it);
    } catch (const DecodeError& err) {
      parse_fail(std::string("globals: ") + err.what());
    }
  }
  return e;
}

}  // namespace

ServiceDef ServiceDef::from_json(const json& doc) {
  if (!doc.is_object()) parse_fail("definition must be a JSON object");
  only_keys(doc, {"name", "interface", "behaviour", "correlation", "engine", "inputPorts", "outputPorts"},
            "definition");
  ServiceDef d;
  d.name = string_field(required(doc, "name", "definition"), "name");
  d.interface = Interface::from_json(required(doc, "interface", "definition"));
  if (auto it = doc.find("engine"); it != doc.end()) d.engine = parse_engine(*it);
  if (auto it = doc.find("correlation"); it != doc.end()) d.correlation = CorrelationConfig::from_json(*it);

  d.behaviour_doc = required(doc, "behaviour", "definition");
  json envelope{{"root", d.behaviour_doc}, {"firing", d.engine.firing}, {"initiators", d.engine.initiators}};
  try {
    d.behaviour = std::make_shared<const BehaviourDef>(parse_behaviour(envelope));
  } catch (const ValidationError& e) {
    invalid(d.name, e.what());
  }

  for (auto [key, output] : {std::pair{"inputPorts", false}, std::pair{"outputPorts", true}}) {
    auto it = doc.find(key);
    if (it == doc.end()) continue;
    if (!it->is_array()) parse_fail(std::string("'") + key + "' must be an array");
    for (const auto& p : *it) (output ? d.output_ports : d.input_ports).push_back(parse_port(p, output));
  }
  validate_service(d);
  return d;
}

json ServiceDef::to_json() const {
  json j;
  j["name"] = name;
  j["interface"] = interface.to_json();
  j["behaviour"] = behaviour_doc;
  j["correlation"] = correlation.to_json();
  json e;
  e["mode"] = engine.mode == ExecutionMode::Sequential ? "sequential" : "concurrent";
  e["firing"] = engine.firing;
  e["initiators"] = engine.initiators;
  if (!engine.storage.empty()) e["storage"] = engine.storage;
  if (!engine.globals.empty()) e["globals"] = state_to_json(engine.globals);
  j["engine"] = e;
  j["inputPorts"] = json::array();
  for (const auto& p : input_ports) j["inputPorts"].push_back(port_json(p, false));
  j["outputPorts"] = json::array();
  for (const auto& p : output_ports) j["outputPorts"].push_back(port_json(p, true));
  return j;
}

const PortDecl* ServiceDef::input_port(std::string_view n) const {
  for (const auto& p : input_ports)
    if (p.name == n) return &p;
  return nullptr;
}

const PortDecl* ServiceDef::output_port(std::string_view n) const {
  for (const auto& p : output_ports)
    if (p.name == n) return &p;
  return nullptr;
}

const PortDecl* ServiceDef::input_port_for(std::string_view op) const {
  for (const auto& p : input_ports)
    for (const auto& o : p.operations)
      if (o == op) return &p;
  return nullptr;
}

Interface ServiceDef::input_interface() const {
  Interface out;
  for (const auto& [n, d] : interface.operations)
    if (is_input(d.kind)) out.operations.emplace(n, d);
  return out;
}

void validate_service(const ServiceDef& d) {
  if (!good_service_name(d.name)) throw ValidationError("bad service name '" + d.name + "'");
  auto kind_of = [&](const std::string& op) -> const OperationDecl* { return d.interface.find(op); };
  auto require_input = [&](const std::string& op, const std::string& use) {
    const OperationDecl* decl = kind_of(op);
    if (!decl) invalid(d.name, use + " names undeclared operation '" + op + "'");
    if (!is_input(decl->kind)) invalid(d.name, use + " needs an input operation, '" + op + "' is " + to_string(decl->kind));
  };

  for (const auto& op : d.engine.initiators) require_input(op, "initiator");
  for (const auto& [op, fn] : d.correlation.functions()) require_input(op, "correlation");

  std::set<std::string> port_names;
  for (const auto* ports : {&d.input_ports, &d.output_ports}) {
    const bool output = ports == &d.output_ports;
    for (const auto& p : *ports) {
      if (!port_names.insert(p.name).second) invalid(d.name, "duplicate port name '" + p.name + "'");
      if (p.protocol != kFrameProtocol) invalid(d.name, "port '" + p.name + "': unknown protocol '" + p.protocol + "'");
      for (const auto& op : p.operations) {
        const OperationDecl* decl = kind_of(op);
        if (!decl) invalid(d.name, "port '" + p.name + "' lists undeclared operation '" + op + "'");
        if (is_input(decl->kind) == output)
          invalid(d.name, "port '" + p.name + "' cannot carry " + to_string(decl->kind) + " '" + op + "'");
      }
    }
  }

  OperationUse use = collect_operation_use(*d.behaviour->root);
  for (const auto& op : use.received) require_input(op, "receive");
  for (const auto& op : use.replied) {
    const OperationDecl* decl = kind_of(op);
    if (!decl || decl->kind != OperationKind::RequestResponse)
      invalid(d.name, "reply on '" + op + "', which is not a declared RequestResponse operation");
  }
  for (const auto& op : use.received) {
    if (kind_of(op)->kind == OperationKind::RequestResponse && !use.replied.count(op))
      invalid(d.name, "RequestResponse '" + op + "' is received but never replied");
  }
  auto check_output = [&](const std::pair<std::string, std::string>& po, OperationKind kind) {
    const PortDecl* port = d.output_port(po.first);
    if (!port) invalid(d.name, "no output port '" + po.first + "'");
    bool listed = false;
    for (const auto& op : port->operations) listed = listed || op == po.second;
    const OperationDecl* decl = kind_of(po.second);
    if (!listed || !decl || decl->kind != kind)
      invalid(d.name, "output port '" + po.first + "' has no " + to_string(kind) + " '" + po.second + "'");
  };
  for (const auto& po : use.notified) check_output(po, OperationKind::Notification);
  for (const auto& po : use.solicited) check_output(po, OperationKind::SolicitResponse);
}

std::string serialize_service(const ServiceDef& def) { return def.to_json().dump(); }

ServiceDef parse_service(std::string_view text) { return ServiceDef::from_json(parse_json_strict(text)); }

json instantiate_service(json doc, const std::string& as) {
  auto subst = [&](json& j) {
    if (!j.is_string()) return;
    std::string s = j.get<std::string>();
    for (std::size_t pos; (pos = s.find("${as}")) != std::string::npos;) s.replace(pos, 5, as);
    j = s;
  };
  if (!doc.is_object()) return doc;
  doc["name"] = as;
  for (const char* key : {"inputPorts", "outputPorts"}) {
    auto it = doc.find(key);
    if (it == doc.end() || !it->is_array()) continue;
    for (auto& p : *it)
      if (p.is_object() && p.contains("location")) subst(p["location"]);
  }
  return doc;
}

json parse_json_strict(std::string_view text) {
  std::vector<std::set<std::string>> keys;
  std::string duplicate;
  json::parser_callback_t cb = [&](int /*depth*/, json::parse_event_t ev, json& parsed) {
    switch (ev) {
      case json::parse_event_t::object_start: keys.emplace_back(); break;
      case json::parse_event_t::object_end: keys.pop_back(); break;
      case json::parse_event_t::key:
        if (!keys.back().insert(parsed.get<std::string>()).second && duplicate.empty())
          duplicate = parsed.get<std::string>();
        break;
      default: break;
    }
    return true;
  };
  json doc;
  try {
    doc = json::parse(text.begin(), text.end(), cb);
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
  if (!duplicate.empty()) throw ParseError("duplicate key '" + duplicate + "'");
  return doc;
}

}  // namespace orchestra
