#include "orchestra/storage.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "orchestra/errors.hpp"
#include "orchestra/state_json.hpp"

namespace orchestra {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& what, const std::string& path) {
  throw StorageError(what + " '" + path + "': " + std::strerror(errno));
}

void write_all(int fd, const std::string& data, const std::string& path) {
  std::size_t off = 0;
  while (off < data.size()) {
    ssize_t n = ::write(fd, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail("write", path);
    }
    off += static_cast<std::size_t>(n);
  }
}

void sync_dir(const std::filesystem::path& file) {
  auto dir = file.parent_path();
  if (dir.empty()) dir = ".";
  int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

std::string put_line(const std::string& key, const Value& v) {
  return json{{"op", "put"}, {"k", key}, {"v", value_to_json(v)}}.dump() + "\n";
}

}  // namespace

Storage::Storage(std::string path) : path_(std::move(path)) {
  std::error_code ec;
  auto parent = std::filesystem::path(path_).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent, ec);

  std::ifstream in(path_, std::ios::binary);
  if (in) {
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    while (pos < content.size()) {
      std::size_t end = content.find('\n', pos);
      bool torn = end == std::string::npos;
      std::string line = content.substr(pos, torn ? std::string::npos : end - pos);
      pos = torn ? content.size() : end + 1;
      if (line.empty()) continue;
      try {
        auto j = json::parse(line);
        const auto& op = j.at("op").get_ref<const std::string&>();
        const auto& key = j.at("k").get_ref<const std::string&>();
        if (op == "put")
          data_.set(key, value_from_json(j.at("v")));
        else if (op == "del")
          data_.erase(key);
        else
          throw StorageError("unknown record");
      } catch (const std::exception& e) {
        if (torn) break;  // crash during the last append
        throw StorageError("corrupt storage log '" + path_ + "': " + e.what());
      }
    }
  }
  compact();
}

Storage::~Storage() {
  if (fd_ >= 0) ::close(fd_);
}

void Storage::compact() {
  std::string tmp = path_ + ".tmp";
  int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) fail("open", tmp);
  std::string body;
  for (const auto& [k, v] : data_) body += put_line(k, v);
  write_all(fd, body, tmp);
  if (::fsync(fd) != 0) fail("fsync", tmp);
  ::close(fd);
  if (::rename(tmp.c_str(), path_.c_str()) != 0) fail("rename", tmp);
  sync_dir(path_);

  if (fd_ >= 0) ::close(fd_);
  fd_ = ::open(path_.c_str(), O_WRONLY | O_APPEND);
  if (fd_ < 0) fail("open", path_);
  log_lines_ = data_.size();
}

void Storage::append(const std::string& line) {
  write_all(fd_, line, path_);
  if (::fsync(fd_) != 0) fail("fsync", path_);
  if (++log_lines_ > 2 * data_.size() + 64) compact();
}

std::optional<Value> Storage::get(std::string_view key) const {
  std::lock_guard lock(mu_);
  return data_.lookup(key);
}

void Storage::put(const std::string& key, const Value& v) {
  std::lock_guard lock(mu_);
  std::string line = put_line(key, v);  // encode first: a bad value must not reach the file
  data_.set(key, v);
  append(line);
}

void Storage::del(const std::string& key) {
  std::lock_guard lock(mu_);
  data_.erase(key);
  append(json{{"op", "del"}, {"k", key}}.dump() + "\n");
}

State Storage::snapshot() const {
  std::lock_guard lock(mu_);
  return data_;
}

}  // namespace orchestra
