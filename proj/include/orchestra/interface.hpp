#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "orchestra/state.hpp"

namespace orchestra {

enum class FieldType { String, Int, Double, Bool, Any };

/// Declared payload fields. A payload conforms when every declared field
/// other than `any` is present with its variant; extra fields are allowed.
struct MessageType {
  std::map<std::string, FieldType> fields;

  bool conforms(const State& payload) const;
  /// Why `payload` does not conform, or empty.
  std::string mismatch(const State& payload) const;

  friend bool operator==(const MessageType&, const MessageType&) = default;
};

enum class OperationKind { OneWay, RequestResponse, Notification, SolicitResponse };

const char* to_string(OperationKind k) noexcept;
inline bool is_input(OperationKind k) noexcept {
  return k == OperationKind::OneWay || k == OperationKind::RequestResponse;
}
inline bool has_response(OperationKind k) noexcept {
  return k == OperationKind::RequestResponse || k == OperationKind::SolicitResponse;
}

struct OperationDecl {
  std::string name;
  OperationKind kind = OperationKind::OneWay;
  MessageType request;
  MessageType response;  // empty unless has_response(kind)

  friend bool operator==(const OperationDecl&, const OperationDecl&) = default;
};

struct Interface {
  std::map<std::string, OperationDecl> operations;

  const OperationDecl* find(const std::string& op) const;
  /// Restriction to `names`; throws ValidationError for undeclared names.
  Interface subset(const std::vector<std::string>& names) const;

  /// `{op: {"kind": k, "request": {field: type}, "response": {...}}}`.
  /// Throws ParseError.
  static Interface from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  friend bool operator==(const Interface&, const Interface&) = default;
};

/// Union of operation maps; identical duplicates collapse. Throws
/// InterfaceClash when one name has two different declarations.
Interface merge_interfaces(const std::vector<Interface>& parts);

}  // namespace orchestra
