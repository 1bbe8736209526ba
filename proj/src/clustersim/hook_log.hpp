#pragma once

#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace dbm::clustersim {

namespace fs = std::filesystem;

/// Append-only side-effect log for one job: `<phase> <node> <step> <mark>`
/// where mark is start, end, or fail.
class HookLog {
 public:
  explicit HookLog(fs::path path);

  void write(std::string_view phase, std::string_view node, std::string_view step,
             std::string_view mark);
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  std::mutex mu_;
};

struct HookLogLine {
  std::string phase;
  std::string node;
  std::string step;
  std::string mark;
};

std::vector<HookLogLine> read_hook_log(const fs::path& path);

}  // namespace dbm::clustersim
