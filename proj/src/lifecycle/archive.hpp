#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace dbm::lifecycle {

namespace fs = std::filesystem;

struct ArchiveEntry {
  enum class Kind { Dir, File, Symlink };
  std::string path;  // relative, '/'-separated, no trailing slash
  Kind kind = Kind::File;
  fs::perms perms = fs::perms::none;
  std::uint64_t size = 0;
  std::string link_target;
};

/// POSIX pax (ustar + 'x' extended headers for long names) writer. Entries
/// are emitted in lexicographic path order with zeroed mtime/uid/gid, so two
/// equal trees produce byte-identical archives. Top-level names in `exclude`
/// are skipped. The archive is written to a temp file and renamed into place.
/// Returns the archive size. Throws ArchiveFailed.
std::uint64_t write_archive(const fs::path& root, const fs::path& archive,
                            const std::set<std::string>& exclude = {});

/// Validates headers, checksums, paths and lengths while reading. Throws
/// ArchiveCorrupt.
std::vector<ArchiveEntry> list_archive(const fs::path& archive);

/// Extracts into `dest` (created if missing). Throws ArchiveCorrupt; `dest`
/// may then hold a partial tree, so callers extract into a staging dir.
void extract_archive(const fs::path& archive, const fs::path& dest);

}  // namespace dbm::lifecycle
