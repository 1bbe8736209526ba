#include <fcntl.h>
#include <unistd.h>

#include <cstring>
#include <map>

#include "migrate/copy.hpp"
#include "migrate/tree_scan.hpp"

namespace dbm::migrate {
namespace {

constexpr std::size_t kMaxListed = 100;

/// Empty on equal contents, otherwise a reason.
std::string compare_contents(const fs::path& a, const fs::path& b) {
  int fa = ::open(a.c_str(), O_RDONLY | O_CLOEXEC);
  if (fa < 0) return "unreadable source";
  int fb = ::open(b.c_str(), O_RDONLY | O_CLOEXEC);
  if (fb < 0) {
    ::close(fa);
    return "unreadable destination";
  }
  std::vector<char> ba(1 << 16), bb(1 << 16);
  std::string reason;
  for (;;) {
    ssize_t na = ::read(fa, ba.data(), ba.size());
    ssize_t nb = 0;
    while (nb < na) {
      ssize_t r = ::read(fb, bb.data() + nb, static_cast<size_t>(na - nb));
      if (r <= 0) break;
      nb += r;
    }
    if (na < 0) {
      reason = "read error";
      break;
    }
    if (na == 0) {
      char extra;
      if (::read(fb, &extra, 1) > 0) reason = "content differs (destination longer)";
      break;
    }
    if (nb != na) {
      reason = "content differs (destination shorter)";
      break;
    }
    if (std::memcmp(ba.data(), bb.data(), static_cast<size_t>(na)) != 0) {
      reason = "content differs";
      break;
    }
  }
  ::close(fa);
  ::close(fb);
  return reason;
}

}  // namespace

nlohmann::json VerificationReport::to_json() const {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& m : mismatches) list.push_back({{"path", m.path}, {"reason", m.reason}});
  return {{"equal", equal}, {"mismatch_count", mismatch_count}, {"mismatches", list}};
}

VerificationReport verify_tree(const fs::path& src, const fs::path& dst) {
  VerificationReport report;
  auto add = [&](std::string path, std::string reason) {
    report.equal = false;
    ++report.mismatch_count;
    if (report.mismatches.size() < kMaxListed) {
      report.mismatches.push_back({std::move(path), std::move(reason)});
    }
  };

  std::map<std::string, detail::Entry> left, right;
  try {
    for (auto& e : detail::scan(src)) left.emplace(e.rel, e);
  } catch (const std::exception& e) {
    add(".", std::string("unreadable source tree: ") + e.what());
    return report;
  }
  try {
    for (auto& e : detail::scan(dst)) right.emplace(e.rel, e);
  } catch (const std::exception& e) {
    add(".", std::string("unreadable destination tree: ") + e.what());
    return report;
  }

  for (const auto& [rel, l] : left) {
    auto it = right.find(rel);
    if (it == right.end()) {
      add(rel, "missing in destination");
      continue;
    }
    const auto& r = it->second;
    if (l.kind != r.kind) {
      add(rel, "entry kind differs");
      continue;
    }
    if (l.kind != detail::Entry::Kind::Symlink && l.perms != r.perms) {
      add(rel, "permission bits differ");
      continue;
    }
    if (l.kind == detail::Entry::Kind::Symlink) {
      std::error_code e1, e2;
      if (fs::read_symlink(src / rel, e1) != fs::read_symlink(dst / rel, e2) || e1 || e2) {
        add(rel, "symlink target differs");
      }
    } else if (l.kind == detail::Entry::Kind::File) {
      if (l.size != r.size) {
        add(rel, "size differs");
      } else if (auto why = compare_contents(src / rel, dst / rel); !why.empty()) {
        add(rel, why);
      }
    }
  }
  for (const auto& [rel, r] : right) {
    if (!left.count(rel)) add(rel, "extra in destination");
  }
  return report;
}

}  // namespace dbm::migrate
