#include "orchestra/interface.hpp"

#include "orchestra/errors.hpp"

namespace orchestra {

namespace {

const char* type_name(FieldType t) {
  switch (t) {
    case FieldType::String: return "string";
    case FieldType::Int: return "int";
    case FieldType::Double: return "double";
    case FieldType::Bool: return "bool";
    case FieldType::Any: return "any";
  }
  return "?";
}

FieldType parse_type(const nlohmann::json& j, const std::string& where) {
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    for (auto t : {FieldType::String, FieldType::Int, FieldType::Double, FieldType::Bool, FieldType::Any})
      if (s == type_name(t)) return t;
  }
  throw ParseError(where + ": field type must be one of string, int, double, bool, any");
}

bool matches(FieldType t, const Value& v) {
  switch (t) {
    case FieldType::String: return std::holds_alternative<std::string>(v);
    case FieldType::Int: return std::holds_alternative<std::int64_t>(v);
    case FieldType::Double: return std::holds_alternative<double>(v);
    case FieldType::Bool: return std::holds_alternative<bool>(v);
    case FieldType::Any: return true;
  }
  return false;
}

MessageType parse_message_type(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": expected an object of field types");
  MessageType t;
  for (const auto& [field, type] : j.items()) {
    if (!is_var_name(field)) throw ParseError(where + ": bad field name '" + field + "'");
    t.fields[field] = parse_type(type, where);
  }
  return t;
}

nlohmann::json message_type_json(const MessageType& t) {
  auto j = nlohmann::json::object();
  for (const auto& [f, type] : t.fields) j[f] = type_name(type);
  return j;
}

}  // namespace

std::string MessageType::mismatch(const State& payload) const {
  for (const auto& [field, type] : fields) {
    if (type == FieldType::Any) continue;
    const Value* v = payload.find(field);
    if (!v) return "missing " + std::string(type_name(type)) + " field '" + field + "'";
    if (!matches(type, *v))
      return "field '" + field + "' is " + variant_name(*v) + ", expected " + type_name(type);
  }
  return {};
}

bool MessageType::conforms(const State& payload) const { return mismatch(payload).empty(); }

const char* to_string(OperationKind k) noexcept {
  switch (k) {
    case OperationKind::OneWay: return "OneWay";
    case OperationKind::RequestResponse: return "RequestResponse";
    case OperationKind::Notification: return "Notification";
    case OperationKind::SolicitResponse: return "SolicitResponse";
  }
  return "?";
}

const OperationDecl* Interface::find(const std::string& op) const {
  auto it = operations.find(op);
  return it == operations.end() ? nullptr : &it->second;
}

Interface Interface::subset(const std::vector<std::string>& names) const {
  Interface out;
  for (const auto& n : names) {
    const OperationDecl* d = find(n);
    if (!d) throw ValidationError("operation '" + n + "' is not declared");
    out.operations[n] = *d;
  }
  return out;
}

Interface Interface::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("interface: expected an object");
  Interface out;
  for (const auto& [name, decl] : j.items()) {
    std::string where = "interface '" + name + "'";
    if (name.empty()) throw ParseError("interface: empty operation name");
    if (!decl.is_object()) throw ParseError(where + ": expected an object");
    for (const auto& [k, v] : decl.items())
      if (k != "kind" && k != "request" && k != "response") throw ParseError(where + ": unknown key '" + k + "'");
    OperationDecl d;
    d.name = name;
    auto kind = decl.find("kind");
    if (kind == decl.end() || !kind->is_string()) throw ParseError(where + ": missing kind");
    bool known = false;
    for (auto k : {OperationKind::OneWay, OperationKind::RequestResponse, OperationKind::Notification,
                   OperationKind::SolicitResponse}) {
      if (*kind == to_string(k)) {
        d.kind = k;
        known = true;
      }
    }
    if (!known) throw ParseError(where + ": unknown kind " + kind->dump());
    if (auto r = decl.find("request"); r != decl.end()) d.request = parse_message_type(*r, where);
    if (auto r = decl.find("response"); r != decl.end()) {
      if (!has_response(d.kind)) throw ParseError(where + ": " + to_string(d.kind) + " has no response");
      d.response = parse_message_type(*r, where);
    }
    out.operations[name] = std::move(d);
  }
  return out;
}

nlohmann::json Interface::to_json() const {
  auto j = nlohmann::json::object();
  for (const auto& [name, d] : operations) {
    auto& o = j[name];
    o["kind"] = to_string(d.kind);
    o["request"] = message_type_json(d.request);
    if (has_response(d.kind)) o["response"] = message_type_json(d.response);
  }
  return j;
}

Interface merge_interfaces(const std::vector<Interface>& parts) {
  Interface out;
  for (const auto& part : parts) {
    for (const auto& [name, decl] : part.operations) {
      auto [it, fresh] = out.operations.emplace(name, decl);
      if (!fresh && !(it->second == decl))
        throw InterfaceClash("operation '" + name + "' is declared differently by two members");
    }
  }
  return out;
}

}  // namespace orchestra
