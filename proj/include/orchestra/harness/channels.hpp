#pragma once

#include <chrono>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "orchestra/message.hpp"
#include "orchestra/transport.hpp"

namespace orchestra::harness {

/// ReplyChannel that keeps every answer it is given.
class RecordingChannel : public ReplyChannel {
 public:
  struct Answer {
    std::string request_id;
    bool fault = false;
    State payload;
    std::string fault_name;
  };

  explicit RecordingChannel(std::string id = "test-channel") : id_(std::move(id)) {}

  const std::string& channel_id() const override { return id_; }
  void send_response(const std::string& request_id, const State& payload) override {
    push({request_id, false, payload, {}});
  }
  void send_fault(const std::string& request_id, const std::string& fault) override {
    push({request_id, true, {}, fault});
  }

  std::vector<Answer> answers() const {
    std::lock_guard lock(mu_);
    return answers_;
  }
  bool wait_for(std::size_t n, std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    return cv_.wait_for(lock, timeout, [&] { return answers_.size() >= n; });
  }

 private:
  void push(Answer a) {
    {
      std::lock_guard lock(mu_);
      answers_.push_back(std::move(a));
    }
    cv_.notify_all();
  }

  std::string id_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::vector<Answer> answers_;
};

/// In-memory connection pair for tests: (client end, server end).
inline std::pair<std::shared_ptr<Connection>, std::shared_ptr<Connection>> memnet_pair() {
  return make_memory_pair();
}

}  // namespace orchestra::harness
