#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "migrate/copy.hpp"

namespace dbm::migrate {

struct BenchmarkOptions {
  fs::path scratch;
  std::vector<std::uint64_t> sizes_per_node;
  std::vector<CopyMode> modes;
  std::vector<Direction> directions;
  int trials = 1;
  std::uint64_t seed = 20150101;
  std::uint64_t file_size = 1 << 20;
};

struct BenchmarkRow {
  Direction direction;
  CopyMode mode;
  std::uint64_t bytes_per_node;
  std::uint64_t files;
  double seconds;     // median over trials
  double mb_per_sec;  // from the median trial
};

struct BenchmarkTable {
  std::vector<BenchmarkRow> rows;

  static constexpr std::string_view kCsvHeader =
      "direction,mode,workers,bytes_per_node,files,seconds,mb_per_sec";
  std::string to_csv() const;
};

/// Writes `bytes` of seeded pseudo-random data as files of `file_size` bytes
/// (the last one shorter when `bytes` is not a multiple).
void generate_corpus(const fs::path& dir, std::uint64_t bytes, std::uint64_t seed,
                     std::uint64_t file_size = 1 << 20);

/// Times every (size, mode, direction) combination `trials` times and keeps
/// the median. Throws InsufficientScratch when scratch holds < 2x the largest size.
BenchmarkTable run_benchmark(const BenchmarkOptions& options);

/// "64MiB", "1GiB", "500KB", "4096"
std::uint64_t parse_size(std::string_view text);
std::vector<std::uint64_t> parse_size_list(std::string_view csv);
std::vector<CopyMode> parse_mode_list(std::string_view csv);
/// "both", "central_to_local"/"c2l", "local_to_central"/"l2c", or a comma list.
std::vector<Direction> parse_direction_list(std::string_view csv);

}  // namespace dbm::migrate
