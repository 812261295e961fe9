#pragma once

#include <memory>
#include <string>

#include "orchestra/state.hpp"

namespace orchestra {

/// Where the answer to a request goes. Implemented by input ports over a
/// transport connection, and by test doubles.
class ReplyChannel {
 public:
  virtual ~ReplyChannel() = default;
  virtual const std::string& channel_id() const = 0;
  virtual void send_response(const std::string& request_id, const State& payload) = 0;
  virtual void send_fault(const std::string& request_id, const std::string& fault) = 0;
};

struct Message {
  std::string operation;
  State payload;
  std::string resource;
  std::string channel_id;
  std::string request_id;
  /// Null for messages that expect no answer.
  std::shared_ptr<ReplyChannel> reply_to;
};

}  // namespace orchestra
