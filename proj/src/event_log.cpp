#include "orchestra/event_log.hpp"

#include <json.hpp>

#include "orchestra/errors.hpp"

namespace orchestra {

EventLog::EventLog(const std::string& path) : out_(path, std::ios::trunc) {
  if (!out_) throw IoError("cannot open event log '" + path + "'");
}

std::string EventLog::to_line(const Record& r) {
  nlohmann::ordered_json j;
  j["ts"] = r.ts;
  j["session"] = r.session;
  j["event"] = r.event;
  j["detail"] = r.detail;
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

void EventLog::record(std::string_view session, std::string_view event, std::string_view detail) {
  auto ts = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start_).count();
  std::lock_guard lock(mu_);
  records_.push_back({ts, std::string(session), std::string(event), std::string(detail)});
  if (out_.is_open()) out_ << to_line(records_.back()) << '\n' << std::flush;
}

std::vector<EventLog::Record> EventLog::records() const {
  std::lock_guard lock(mu_);
  return records_;
}

std::vector<EventLog::Record> EventLog::find(std::string_view event) const {
  std::lock_guard lock(mu_);
  std::vector<Record> out;
  for (const auto& r : records_)
    if (r.event == event) out.push_back(r);
  return out;
}

}  // namespace orchestra
