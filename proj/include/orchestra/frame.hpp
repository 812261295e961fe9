#pragma once

#include <string>
#include <string_view>

#include "orchestra/state.hpp"

namespace orchestra {

/// One line of the frame/1 wire protocol.
struct Frame {
  enum class Type { Request, Response, Fault };

  std::string id;
  Type type = Type::Request;
  std::string operation;
  std::string resource;
  State payload;
  std::string fault;  // only meaningful for Type::Fault

  static Frame request(std::string id, std::string op, State payload, std::string resource = {});
  static Frame response(std::string id, std::string op, State payload, std::string resource = {});
  static Frame failure(std::string id, std::string op, std::string fault, std::string resource = {});

  friend bool operator==(const Frame&, const Frame&) = default;
};

const char* to_string(Frame::Type t) noexcept;

/// Compact JSON with keys id,type,operation,resource,payload[,fault] and a
/// single trailing LF. Throws EncodeError (non-finite double, invalid UTF-8).
std::string encode_frame(const Frame& f);

/// Accepts one line, with or without its trailing LF. Throws DecodeError.
Frame decode_frame(std::string_view line);

}  // namespace orchestra
