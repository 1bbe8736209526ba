#include "migrate/copy.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <mutex>
#include <thread>

#include "common/error.hpp"
#include "migrate/tree_scan.hpp"

namespace dbm::migrate {

namespace detail {

std::vector<Entry> scan(const fs::path& root) {
  std::vector<Entry> out;
  for (auto it = fs::recursive_directory_iterator(root); it != fs::recursive_directory_iterator();
       ++it) {
    const auto& de = *it;
    auto st = de.symlink_status();
    Entry e;
    e.rel = de.path().lexically_relative(root).generic_string();
    e.perms = st.permissions();
    if (fs::is_symlink(st)) {
      e.kind = Entry::Kind::Symlink;
    } else if (fs::is_directory(st)) {
      e.kind = Entry::Kind::Dir;
    } else if (fs::is_regular_file(st)) {
      e.kind = Entry::Kind::File;
      e.size = de.file_size();
    } else {
      continue;  // sockets, fifos and devices are not database data
    }
    out.push_back(std::move(e));
  }
  std::sort(out.begin(), out.end(), [](const Entry& a, const Entry& b) { return a.rel < b.rel; });
  return out;
}

}  // namespace detail

namespace {

using detail::Entry;

/// Returns an empty string on success, otherwise the failure reason.
std::string copy_file_contents(const fs::path& from, const fs::path& to, fs::perms perms) {
  int in = ::open(from.c_str(), O_RDONLY | O_CLOEXEC);
  if (in < 0) return std::string("open source: ") + std::strerror(errno);
  int out = ::open(to.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0600);
  if (out < 0) {
    std::string err = std::string("open destination: ") + std::strerror(errno);
    ::close(in);
    return err;
  }
  std::string err;
  bool use_rw = false;
  for (;;) {
    ssize_t n = ::copy_file_range(in, nullptr, out, nullptr, 1 << 24, 0);
    if (n == 0) break;
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EXDEV || errno == ENOSYS || errno == EINVAL || errno == EOPNOTSUPP) {
        use_rw = true;
      } else {
        err = std::string("copy: ") + std::strerror(errno);
      }
      break;
    }
  }
  if (use_rw && err.empty()) {
    std::vector<char> buf(1 << 20);
    ::lseek(in, 0, SEEK_SET);
    if (::ftruncate(out, 0) != 0) err = std::string("truncate: ") + std::strerror(errno);
    ::lseek(out, 0, SEEK_SET);
    for (;;) {
      ssize_t n = ::read(in, buf.data(), buf.size());
      if (n == 0) break;
      if (n < 0) {
        if (errno == EINTR) continue;
        err = std::string("read: ") + std::strerror(errno);
        break;
      }
      ssize_t off = 0;
      while (off < n) {
        ssize_t w = ::write(out, buf.data() + off, static_cast<size_t>(n - off));
        if (w < 0) {
          if (errno == EINTR) continue;
          err = std::string("write: ") + std::strerror(errno);
          break;
        }
        off += w;
      }
      if (!err.empty()) break;
    }
  }
  if (err.empty() && ::fchmod(out, static_cast<mode_t>(perms) & 07777) != 0) {
    err = std::string("chmod: ") + std::strerror(errno);
  }
  ::close(in);
  if (::close(out) != 0 && err.empty()) err = std::string("close: ") + std::strerror(errno);
  return err;
}

}  // namespace

std::string CopyMode::to_string() const {
  if (kind == Kind::SingleStream) return "single";
  return "multi:" + std::to_string(workers);
}

CopyMode CopyMode::parse(std::string_view text) {
  if (text == "single" || text == "rsync") return single();
  if (text == "multi" || text == "mcp") return multi();
  constexpr std::string_view prefix = "multi:";
  if (text.substr(0, prefix.size()) == prefix) {
    auto rest = std::string(text.substr(prefix.size()));
    int k = 0;
    try {
      k = std::stoi(rest);
    } catch (...) {
      k = 0;
    }
    if (k >= 1) return multi(k);
  }
  throw Error(Errc::InvalidArgument, "bad copy mode: '" + std::string(text) +
                                         "' (expected single, multi or multi:<k>)");
}

std::string_view to_string(Direction d) {
  return d == Direction::CentralToLocal ? "central_to_local" : "local_to_central";
}

Direction direction_from_string(std::string_view s) {
  if (s == "central_to_local" || s == "c2l") return Direction::CentralToLocal;
  if (s == "local_to_central" || s == "l2c") return Direction::LocalToCentral;
  throw Error(Errc::InvalidArgument, "bad direction: " + std::string(s));
}

nlohmann::json CopyReport::to_json() const {
  return {{"direction", std::string(to_string(direction))},
          {"bytes", bytes},
          {"files", files},
          {"seconds", seconds},
          {"mode", mode.to_string()},
          {"workers", mode.effective_workers()},
          {"mb_per_sec", mb_per_sec}};
}

CopyReport copy_tree(const fs::path& src, const fs::path& dst, CopyMode mode,
                     const CopyOptions& options) {
  std::error_code ec;
  if (!fs::is_directory(src, ec)) {
    throw Error(Errc::SourceMissing, "source is not a readable directory: " + src.string());
  }
  if (mode.kind == CopyMode::Kind::MultiStream && mode.workers < 1) {
    throw Error(Errc::InvalidArgument, "MultiStream needs at least one worker");
  }
  auto parent = dst.parent_path();
  if (!parent.empty() && !fs::is_directory(parent, ec)) {
    throw Error(Errc::DestinationUnwritable, "destination parent missing: " + parent.string());
  }
  if (fs::exists(fs::symlink_status(dst, ec)) && !fs::is_directory(fs::symlink_status(dst, ec))) {
    throw Error(Errc::DestinationUnwritable, "destination is not a directory: " + dst.string());
  }
  fs::create_directory(dst, ec);
  if (ec || ::access(dst.c_str(), W_OK) != 0) {
    throw Error(Errc::DestinationUnwritable, "cannot write destination: " + dst.string());
  }

  auto started = std::chrono::steady_clock::now();
  std::vector<Entry> entries;
  try {
    entries = detail::scan(src);
  } catch (const fs::filesystem_error& e) {
    throw Error(Errc::SourceMissing, std::string("cannot scan source: ") + e.what());
  }

  std::vector<std::string> failed;
  std::mutex failed_mu;
  auto fail = [&](const std::string& rel, const std::string& why) {
    std::lock_guard lk(failed_mu);
    failed.push_back(rel + ": " + why);
  };

  std::vector<const Entry*> files;
  for (const auto& e : entries) {
    auto target = dst / e.rel;
    if (e.kind == Entry::Kind::Dir) {
      std::error_code dec;
      fs::create_directory(target, dec);
      if (dec && !fs::is_directory(target)) fail(e.rel, dec.message());
      // Owner-writable until the final permission pass.
      fs::permissions(target, fs::perms::owner_all, fs::perm_options::add, dec);
    } else if (e.kind == Entry::Kind::Symlink) {
      std::error_code sec;
      auto link_target = fs::read_symlink(src / e.rel, sec);
      if (!sec) {
        fs::remove(target, sec);
        sec.clear();
        fs::create_symlink(link_target, target, sec);
      }
      if (sec) fail(e.rel, sec.message());
    } else {
      files.push_back(&e);
    }
  }

  std::atomic<std::uint64_t> bytes{0};
  std::atomic<std::uint64_t> copied{0};
  auto copy_one = [&](const Entry& e) {
    if (auto* obs = options.observer) {
      int now = ++obs->in_flight;
      int hw = obs->high_water.load();
      while (now > hw && !obs->high_water.compare_exchange_weak(hw, now)) {
      }
      ++obs->files_started;
    }
    auto err = copy_file_contents(src / e.rel, dst / e.rel, e.perms);
    if (options.observer) --options.observer->in_flight;
    if (err.empty()) {
      bytes += e.size;
      ++copied;
    } else {
      fail(e.rel, err);
    }
  };

  int workers = mode.effective_workers();
  if (workers <= 1) {
    for (const auto* e : files) {
      if (options.observer) options.observer->order.push_back(e->rel);
      copy_one(*e);
    }
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    int n = std::min<int>(workers, static_cast<int>(std::max<size_t>(files.size(), 1)));
    for (int w = 0; w < n; ++w) {
      pool.emplace_back([&] {
        for (size_t i = next++; i < files.size(); i = next++) copy_one(*files[i]);
      });
    }
    for (auto& t : pool) t.join();
  }

  // Directory permissions last, deepest first, so read-only dirs don't block writes.
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
    if (it->kind != Entry::Kind::Dir) continue;
    std::error_code pec;
    fs::permissions(dst / it->rel, it->perms, fs::perm_options::replace, pec);
  }
  std::error_code rec;
  fs::permissions(dst, fs::status(src, rec).permissions(), fs::perm_options::replace, rec);

  auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (!failed.empty()) {
    std::sort(failed.begin(), failed.end());
    throw Error(Errc::PartialCopy,
                std::to_string(failed.size()) + " entries failed to copy into " + dst.string(),
                {{"failed", failed}});
  }

  CopyReport report;
  report.direction = options.direction;
  report.bytes = bytes.load();
  report.files = copied.load();
  report.seconds = elapsed;
  report.mode = mode;
  report.mb_per_sec = elapsed > 0 ? static_cast<double>(report.bytes) / elapsed / 1e6 : 0.0;
  return report;
}

}  // namespace dbm::migrate
