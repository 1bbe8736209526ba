#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

namespace dbm::fsutil {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path);
std::optional<std::string> try_read_file(const fs::path& path);

/// Write via temp file + fsync + rename so readers never observe a torn file.
void write_file_atomic(const fs::path& path, std::string_view content,
                       std::optional<fs::perms> perms = std::nullopt);

void append_line(const fs::path& path, std::string_view line);

nlohmann::json read_json(const fs::path& path);
void write_json_atomic(const fs::path& path, const nlohmann::json& doc,
                       std::optional<fs::perms> perms = std::nullopt);

/// Exclusive advisory lock (flock) held for the object's lifetime. Serializes
/// callers across threads and processes sharing the same lock file.
class FileLock {
 public:
  explicit FileLock(const fs::path& path);
  ~FileLock();
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

/// Fresh directory under the system temp dir; removed on destruction.
class TempDir {
 public:
  explicit TempDir(std::string_view prefix = "dbm");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

}  // namespace dbm::fsutil
