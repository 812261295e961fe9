#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "orchestra/expression.hpp"

namespace orchestra {

struct Activity;
using ActivityPtr = std::shared_ptr<const Activity>;

/// Ordered field -> expression list used by reply/notify/solicit payloads.
using PayloadExprs = std::vector<std::pair<std::string, Expression>>;

namespace act {

struct Nil {};
/// `target` is a local name, or `global.x` / `storage.x`.
struct Assign { std::string target; Expression value; };
/// Payload fields land in local state as `<into><field>`.
struct Receive { std::string op; std::string into; };
struct Reply { std::string op; PayloadExprs from; };
struct Notify { std::string port; std::string op; PayloadExprs payload; };
struct Solicit { std::string port; std::string op; PayloadExprs payload; std::string into; };
struct Sequence { std::vector<ActivityPtr> children; };
struct Parallel { std::vector<ActivityPtr> children; };
struct If { Expression cond; ActivityPtr then_branch; ActivityPtr else_branch; };
struct While { Expression cond; ActivityPtr body; };
struct Throw { std::string fault; };
struct Scope {
  std::string name;
  ActivityPtr body;
  std::map<std::string, ActivityPtr> fault_handlers;
  ActivityPtr on_terminate;   // may be null
  ActivityPtr on_compensate;  // may be null
};
struct Compensate { std::string target; };

}  // namespace act

struct Activity {
  std::variant<act::Nil, act::Assign, act::Receive, act::Reply, act::Notify, act::Solicit, act::Sequence,
               act::Parallel, act::If, act::While, act::Throw, act::Scope, act::Compensate>
      node;

  template <class T>
  const T* as() const noexcept { return std::get_if<T>(&node); }
  const char* kind() const noexcept;
};

ActivityPtr make_activity(decltype(Activity::node) node);

struct BehaviourDef {
  ActivityPtr root;
  std::set<std::string> initiators;
  bool firing = false;
};

/// Parses one activity node. Throws ParseError.
ActivityPtr parse_activity(const nlohmann::json& doc);

/// Accepts either an envelope `{"root": A, "firing": b, "initiators": [...]}`
/// or a bare activity, which is read as a firing behaviour with no
/// initiators. Throws ParseError or ValidationError.
BehaviourDef parse_behaviour(const nlohmann::json& doc);

/// Structural checks that need no interface:
///  - scope names unique along every root-to-leaf path;
///  - every reply dominated by a receive on the same operation;
///  - a second receive on a replied operation while one is definitely
///    pending is rejected;
///  - non-firing behaviours need at least one initiator.
/// Throws ValidationError.
void validate_behaviour(const BehaviourDef& def);

/// Operations named by receive/reply nodes, and (port, op) pairs named by
/// notify/solicit nodes, for interface cross-checks.
struct OperationUse {
  std::set<std::string> received;
  std::set<std::string> replied;
  std::set<std::pair<std::string, std::string>> notified;
  std::set<std::pair<std::string, std::string>> solicited;
};
OperationUse collect_operation_use(const Activity& root);

}  // namespace orchestra
