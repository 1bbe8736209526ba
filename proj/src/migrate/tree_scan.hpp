#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dbm::migrate::detail {

namespace fs = std::filesystem;

struct Entry {
  enum class Kind { Dir, File, Symlink };
  Kind kind;
  std::string rel;
  fs::perms perms;
  std::uint64_t size = 0;
};

/// Every dir, regular file and symlink below `root`, sorted by relative path.
/// Symlinks are not followed.
std::vector<Entry> scan(const fs::path& root);

}  // namespace dbm::migrate::detail
