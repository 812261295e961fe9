#pragma once

#include <chrono>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace orchestra {

/// Line-delimited JSON records `{"ts":..,"session":..,"event":..,"detail":..}`.
/// `ts` is microseconds since the log was opened. Records are kept in memory
/// and, when a path is given, also appended to that file.
class EventLog {
 public:
  struct Record {
    std::int64_t ts;
    std::string session;
    std::string event;
    std::string detail;
  };

  EventLog() = default;
  /// Throws IoError when the file cannot be opened.
  explicit EventLog(const std::string& path);

  void record(std::string_view session, std::string_view event, std::string_view detail = {});
  std::vector<Record> records() const;
  /// Records whose event equals `event`, in order.
  std::vector<Record> find(std::string_view event) const;

  static std::string to_line(const Record& r);

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
  mutable std::mutex mu_;
  std::vector<Record> records_;
  std::ofstream out_;
};

}  // namespace orchestra
