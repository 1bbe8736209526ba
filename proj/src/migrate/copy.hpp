#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace dbm::migrate {

namespace fs = std::filesystem;

/// SingleStream mirrors a plain rsync run; MultiStream runs up to `workers`
/// concurrent file copies, like several parallel `cp` processes.
struct CopyMode {
  enum class Kind { SingleStream, MultiStream };
  static constexpr int kDefaultWorkers = 3;

  Kind kind = Kind::MultiStream;
  int workers = kDefaultWorkers;

  static CopyMode single() { return {Kind::SingleStream, 1}; }
  static CopyMode multi(int workers = kDefaultWorkers) { return {Kind::MultiStream, workers}; }

  int effective_workers() const { return kind == Kind::SingleStream ? 1 : workers; }
  /// "single" or "multi:<k>"
  std::string to_string() const;
  static CopyMode parse(std::string_view text);
};

enum class Direction { CentralToLocal, LocalToCentral };

std::string_view to_string(Direction d);
Direction direction_from_string(std::string_view s);

struct CopyReport {
  Direction direction = Direction::CentralToLocal;
  std::uint64_t bytes = 0;
  std::uint64_t files = 0;
  double seconds = 0.0;
  CopyMode mode;
  double mb_per_sec = 0.0;  // bytes / seconds / 1e6

  nlohmann::json to_json() const;
};

/// Instrumentation for tests: in-flight file copies and their high-water mark.
struct CopyObserver {
  std::atomic<int> in_flight{0};
  std::atomic<int> high_water{0};
  std::atomic<std::uint64_t> files_started{0};
  std::vector<std::string> order;  // single-threaded modes only
};

struct CopyOptions {
  Direction direction = Direction::CentralToLocal;
  CopyObserver* observer = nullptr;
};

/// Replicates `src` into `dst` (content, relative paths, permission bits,
/// symlink targets). Parallelism is per file; there is no intra-file striping.
///
/// Throws SourceMissing, DestinationUnwritable, or PartialCopy (details list
/// the failed relative paths; dst is left as-is for inspection).
CopyReport copy_tree(const fs::path& src, const fs::path& dst, CopyMode mode,
                     const CopyOptions& options = {});

struct Mismatch {
  std::string path;
  std::string reason;
};

struct VerificationReport {
  bool equal = true;
  std::size_t mismatch_count = 0;
  std::vector<Mismatch> mismatches;  // first 100

  nlohmann::json to_json() const;
};

/// Compares relative paths, entry kinds, file contents, permission bits and
/// symlink targets.
VerificationReport verify_tree(const fs::path& src, const fs::path& dst);

}  // namespace dbm::migrate
