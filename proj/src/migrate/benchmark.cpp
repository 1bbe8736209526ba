#include "migrate/benchmark.hpp"

#include <sys/statvfs.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <sstream>

#include "common/error.hpp"

namespace dbm::migrate {
namespace {

std::vector<std::string_view> split_csv(std::string_view csv) {
  std::vector<std::string_view> out;
  while (!csv.empty()) {
    auto pos = csv.find(',');
    auto item = csv.substr(0, pos);
    while (!item.empty() && std::isspace(static_cast<unsigned char>(item.front()))) {
      item.remove_prefix(1);
    }
    while (!item.empty() && std::isspace(static_cast<unsigned char>(item.back()))) {
      item.remove_suffix(1);
    }
    if (!item.empty()) out.push_back(item);
    if (pos == std::string_view::npos) break;
    csv.remove_prefix(pos + 1);
  }
  return out;
}

std::uint64_t available_bytes(const fs::path& dir) {
  struct statvfs sv {};
  if (::statvfs(dir.c_str(), &sv) != 0) return 0;
  return static_cast<std::uint64_t>(sv.f_bavail) * sv.f_frsize;
}

}  // namespace

std::string BenchmarkTable::to_csv() const {
  std::ostringstream out;
  out << kCsvHeader << "\n";
  out.setf(std::ios::fixed);
  for (const auto& r : rows) {
    out << to_string(r.direction) << ","
        << (r.mode.kind == CopyMode::Kind::SingleStream ? "single" : "multi") << ","
        << r.mode.effective_workers() << "," << r.bytes_per_node << "," << r.files << ",";
    out.precision(6);
    out << r.seconds << ",";
    out.precision(3);
    out << r.mb_per_sec << "\n";
  }
  return out.str();
}

void generate_corpus(const fs::path& dir, std::uint64_t bytes, std::uint64_t seed,
                     std::uint64_t file_size) {
  fs::create_directories(dir);
  std::mt19937_64 rng(seed);
  std::vector<std::uint64_t> buf(file_size / 8 + 1);
  std::uint64_t remaining = bytes;
  int index = 0;
  do {
    std::uint64_t n = std::min(remaining, file_size);
    for (auto& w : buf) w = rng();
    char name[32];
    std::snprintf(name, sizeof name, "blk-%06d.dat", index++);
    std::ofstream out(dir / name, std::ios::binary);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(n));
    if (!out) throw Error(Errc::Io, "cannot write corpus file in " + dir.string());
    remaining -= n;
  } while (remaining > 0);
}

BenchmarkTable run_benchmark(const BenchmarkOptions& options) {
  if (options.trials < 1) throw Error(Errc::InvalidArgument, "trials must be >= 1");
  if (options.sizes_per_node.empty() || options.modes.empty() || options.directions.empty()) {
    throw Error(Errc::InvalidArgument, "benchmark needs at least one size, mode and direction");
  }
  fs::create_directories(options.scratch);
  auto max_size = *std::max_element(options.sizes_per_node.begin(), options.sizes_per_node.end());
  auto avail = available_bytes(options.scratch);
  if (avail < 2 * max_size) {
    throw Error(Errc::InsufficientScratch,
                "scratch has " + std::to_string(avail) + " bytes free, needs " +
                    std::to_string(2 * max_size),
                {{"available", avail}, {"required", 2 * max_size}});
  }

  BenchmarkTable table;
  auto central = options.scratch / "central";
  auto local = options.scratch / "local" / "node-1";
  for (auto size : options.sizes_per_node) {
    for (auto direction : options.directions) {
      bool c2l = direction == Direction::CentralToLocal;
      auto source = (c2l ? central : local) / "corpus";
      auto target = (c2l ? local : central) / "replica";
      fs::remove_all(options.scratch / "central");
      fs::remove_all(options.scratch / "local");
      fs::create_directories(source.parent_path());
      fs::create_directories(target.parent_path());
      generate_corpus(source, size, options.seed + size, options.file_size);

      for (const auto& mode : options.modes) {
        std::vector<CopyReport> runs;
        for (int t = 0; t < options.trials; ++t) {
          fs::remove_all(target);
          CopyOptions copy_opts;
          copy_opts.direction = direction;
          runs.push_back(copy_tree(source, target, mode, copy_opts));
        }
        std::sort(runs.begin(), runs.end(),
                  [](const CopyReport& a, const CopyReport& b) { return a.seconds < b.seconds; });
        const auto& median = runs[runs.size() / 2];
        table.rows.push_back(
            {direction, mode, size, median.files, median.seconds, median.mb_per_sec});
      }
      fs::remove_all(options.scratch / "central");
      fs::remove_all(options.scratch / "local");
    }
  }
  return table;
}

std::uint64_t parse_size(std::string_view text) {
  std::string s(text);
  size_t pos = 0;
  double value = 0;
  try {
    value = std::stod(s, &pos);
  } catch (...) {
    throw Error(Errc::InvalidArgument, "bad size: '" + s + "'");
  }
  auto unit = s.substr(pos);
  std::transform(unit.begin(), unit.end(), unit.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  double mult = 1;
  if (unit.empty() || unit == "b") mult = 1;
  else if (unit == "kib" || unit == "k") mult = 1024.0;
  else if (unit == "mib" || unit == "m") mult = 1024.0 * 1024;
  else if (unit == "gib" || unit == "g") mult = 1024.0 * 1024 * 1024;
  else if (unit == "kb") mult = 1e3;
  else if (unit == "mb") mult = 1e6;
  else if (unit == "gb") mult = 1e9;
  else throw Error(Errc::InvalidArgument, "bad size unit in '" + s + "'");
  if (value < 0) throw Error(Errc::InvalidArgument, "negative size: '" + s + "'");
  return static_cast<std::uint64_t>(value * mult);
}

std::vector<std::uint64_t> parse_size_list(std::string_view csv) {
  std::vector<std::uint64_t> out;
  for (auto item : split_csv(csv)) out.push_back(parse_size(item));
  return out;
}

std::vector<CopyMode> parse_mode_list(std::string_view csv) {
  std::vector<CopyMode> out;
  for (auto item : split_csv(csv)) out.push_back(CopyMode::parse(item));
  return out;
}

std::vector<Direction> parse_direction_list(std::string_view csv) {
  std::vector<Direction> out;
  for (auto item : split_csv(csv)) {
    if (item == "both") {
      out.push_back(Direction::CentralToLocal);
      out.push_back(Direction::LocalToCentral);
    } else {
      out.push_back(direction_from_string(item));
    }
  }
  return out;
}

}  // namespace dbm::migrate
