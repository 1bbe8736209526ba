#include "clustersim/hook_log.hpp"

#include <sstream>

#include "common/fsutil.hpp"

namespace dbm::clustersim {

HookLog::HookLog(fs::path path) : path_(std::move(path)) {}

void HookLog::write(std::string_view phase, std::string_view node, std::string_view step,
                    std::string_view mark) {
  std::string line;
  line.reserve(phase.size() + node.size() + step.size() + mark.size() + 3);
  line.append(phase).append(" ").append(node).append(" ").append(step).append(" ").append(mark);
  std::lock_guard lk(mu_);
  fsutil::append_line(path_, line);
}

std::vector<HookLogLine> read_hook_log(const fs::path& path) {
  std::vector<HookLogLine> out;
  auto text = fsutil::try_read_file(path);
  if (!text) return out;
  std::istringstream in(*text);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    HookLogLine l;
    if (ls >> l.phase >> l.node >> l.step >> l.mark) out.push_back(std::move(l));
  }
  return out;
}

}  // namespace dbm::clustersim
