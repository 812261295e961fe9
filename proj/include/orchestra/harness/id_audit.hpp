#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "orchestra/errors.hpp"
#include "orchestra/frame.hpp"
#include "orchestra/transport.hpp"

namespace orchestra::harness {

/// Watches every line on every connection and checks, per connection end,
/// that each response/fault it writes answers a request id it has read, at
/// most once. Installed as the process frame tracer while alive.
class IdAudit {
 public:
  IdAudit() : log_(std::make_shared<Log>()) {
    set_frame_tracer([log = log_](const std::string& conn, bool outbound, std::string_view line) {
      log->observe(conn, outbound, line);
    });
  }
  ~IdAudit() { set_frame_tracer({}); }
  IdAudit(const IdAudit&) = delete;
  IdAudit& operator=(const IdAudit&) = delete;

  std::vector<std::string> violations() const {
    std::lock_guard lock(log_->mu_);
    return log_->violations_;
  }
  std::size_t connections() const {
    std::lock_guard lock(log_->mu_);
    return log_->seen_.size();
  }
  std::size_t answers() const {
    std::lock_guard lock(log_->mu_);
    std::size_t n = 0;
    for (const auto& [c, ids] : log_->answered_) n += ids.size();
    return n;
  }

 private:
  struct Log {
    void observe(const std::string& conn, bool outbound, std::string_view line) {
      Frame f;
      try {
        f = decode_frame(line);
      } catch (const DecodeError&) {
        return;
      }
      std::lock_guard lock(mu_);
      seen_.insert(conn);
      if (!outbound && f.type == Frame::Type::Request) requests_[conn].insert(f.id);
      // Faults for lines that could not be parsed carry no id; nothing to match.
      if (!outbound || f.type == Frame::Type::Request || f.id.empty()) return;
      if (!requests_[conn].count(f.id)) violations_.push_back(conn + ": answer to unknown id " + f.id);
      if (!answered_[conn].insert(f.id).second) violations_.push_back(conn + ": second answer to id " + f.id);
    }

    mutable std::mutex mu_;
    std::set<std::string> seen_;
    std::map<std::string, std::set<std::string>> requests_, answered_;
    std::vector<std::string> violations_;
  };
  std::shared_ptr<Log> log_;
};

}  // namespace orchestra::harness
