#include "orchestra/frame.hpp"

#include "orchestra/errors.hpp"
#include "orchestra/state_json.hpp"

namespace orchestra {

using nlohmann::ordered_json;

Frame Frame::request(std::string id, std::string op, State payload, std::string resource) {
  return {std::move(id), Type::Request, std::move(op), std::move(resource), std::move(payload), {}};
}

Frame Frame::response(std::string id, std::string op, State payload, std::string resource) {
  return {std::move(id), Type::Response, std::move(op), std::move(resource), std::move(payload), {}};
}

Frame Frame::failure(std::string id, std::string op, std::string fault, std::string resource) {
  return {std::move(id), Type::Fault, std::move(op), std::move(resource), {}, std::move(fault)};
}

const char* to_string(Frame::Type t) noexcept {
  switch (t) {
    case Frame::Type::Request: return "request";
    case Frame::Type::Response: return "response";
    case Frame::Type::Fault: return "fault";
  }
  return "?";
}

std::string encode_frame(const Frame& f) {
  ordered_json j;
  j["id"] = f.id;
  j["type"] = to_string(f.type);
  j["operation"] = f.operation;
  j["resource"] = f.resource;
  j["payload"] = state_to_json<ordered_json>(f.payload);
  if (f.type == Frame::Type::Fault) j["fault"] = f.fault;
  try {
    return j.dump() + "\n";
  } catch (const nlohmann::json::type_error& e) {
    throw EncodeError(std::string("frame: ") + e.what());
  }
}

namespace {

const std::string& string_field(const ordered_json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw DecodeError(std::string("frame: missing key '") + key + "'");
  if (!it->is_string()) throw DecodeError(std::string("frame: '") + key + "' must be a string");
  return it->get_ref<const std::string&>();
}

}  // namespace

Frame decode_frame(std::string_view line) {
  if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
  if (line.find('\n') != std::string_view::npos) throw DecodeError("frame: more than one line");
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("frame: malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw DecodeError("frame: not a JSON object");

  Frame f;
  f.id = string_field(j, "id");
  const std::string& type = string_field(j, "type");
  if (type == "request")
    f.type = Frame::Type::Request;
  else if (type == "response")
    f.type = Frame::Type::Response;
  else if (type == "fault")
    f.type = Frame::Type::Fault;
  else
    throw DecodeError("frame: unknown type '" + type + "'");
  f.operation = string_field(j, "operation");
  f.resource = string_field(j, "resource");
  auto payload = j.find("payload");
  if (payload == j.end()) throw DecodeError("frame: missing key 'payload'");
  f.payload = state_from_json(*payload);

  std::size_t expected = 5;
  if (f.type == Frame::Type::Fault) {
    f.fault = string_field(j, "fault");
    ++expected;
  }
  if (j.size() != expected) {
    for (const auto& [k, v] : j.items())
      if (k != "id" && k != "type" && k != "operation" && k != "resource" && k != "payload" &&
          !(k == "fault" && f.type == Frame::Type::Fault))
        throw DecodeError("frame: unknown key '" + k + "'");
  }
  return f;
}

}  // namespace orchestra
