#pragma once

#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "orchestra/behaviour.hpp"
#include "orchestra/correlation.hpp"
#include "orchestra/engine.hpp"
#include "orchestra/interface.hpp"
#include "orchestra/transport.hpp"

namespace orchestra {

struct PortDecl {
  std::string name;
  Location location;
  std::string protocol = "frame/1";
  std::vector<std::string> operations;
  std::string resource;  // output ports only
};

struct EngineSettings {
  ExecutionMode mode = ExecutionMode::Concurrent;
  bool firing = false;
  std::set<std::string> initiators;
  std::string storage;
  State globals;
};

/// A deployable service: interface, behaviour, correlation, engine settings
/// and ports.
///
/// ```
/// {"name": "calc",
///  "interface": {"sum": {"kind": "RequestResponse", "request": {...}, "response": {...}}},
///  "behaviour": <activity>,
///  "correlation": {op: {field: var}},
///  "engine": {"mode": "concurrent", "firing": false, "initiators": ["sum"],
///             "storage": "<path>", "globals": {...}},
///  "inputPorts": [{"name": .., "location": "local://calc", "protocol": "frame/1", "interface": [op, ..]}],
///  "outputPorts": [{.., "resource": "A"}]}
/// ```
///
/// Only `name`, `interface` and `behaviour` are required.
struct ServiceDef {
  std::string name;
  Interface interface;
  nlohmann::json behaviour_doc;
  std::shared_ptr<const BehaviourDef> behaviour;
  CorrelationConfig correlation;
  EngineSettings engine;
  std::vector<PortDecl> input_ports;
  std::vector<PortDecl> output_ports;

  /// Parses and validates. Throws ParseError or ValidationError.
  static ServiceDef from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

  const PortDecl* input_port(std::string_view name) const;
  const PortDecl* output_port(std::string_view name) const;
  /// The input port that accepts `op`, if any.
  const PortDecl* input_port_for(std::string_view op) const;
  /// Declared input operations (OneWay and RequestResponse).
  Interface input_interface() const;

  /// Definitional equality: same canonical document.
  friend bool operator==(const ServiceDef& a, const ServiceDef& b) { return a.to_json() == b.to_json(); }
};

/// Cross-checks a parsed definition. Throws ValidationError.
void validate_service(const ServiceDef& def);

/// A service as data: one JSON document, suitable for a frame payload field.
std::string serialize_service(const ServiceDef& def);
ServiceDef parse_service(std::string_view text);

/// Replaces `${as}` in the name and port locations of a service document.
nlohmann::json instantiate_service(nlohmann::json doc, const std::string& as);

/// nlohmann::json::parse that also rejects duplicate object keys. Throws
/// ParseError.
nlohmann::json parse_json_strict(std::string_view text);

}  // namespace orchestra
