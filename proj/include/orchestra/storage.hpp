#pragma once

#include <mutex>
#include <optional>
#include <string>

#include "orchestra/state.hpp"

namespace orchestra {

/// Persistent key-value store backed by one append-only JSON-lines file.
///
/// Every put/del is appended and fsync'd before it returns. Opening replays
/// the log (a torn final line from a crash is dropped) and compacts it by
/// writing the live bindings to a temporary file and renaming it over the log.
/// All I/O failures throw StorageError.
class Storage {
 public:
  explicit Storage(std::string path);
  ~Storage();
  Storage(const Storage&) = delete;
  Storage& operator=(const Storage&) = delete;

  std::optional<Value> get(std::string_view key) const;
  void put(const std::string& key, const Value& v);
  void del(const std::string& key);
  State snapshot() const;

  const std::string& path() const noexcept { return path_; }

 private:
  void append(const std::string& line);
  void compact();

  std::string path_;
  mutable std::mutex mu_;
  State data_;
  int fd_ = -1;
  std::size_t log_lines_ = 0;
};

}  // namespace orchestra
