#include "lifecycle/archive.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <optional>

#include "common/error.hpp"
#include "migrate/tree_scan.hpp"

namespace dbm::lifecycle {
namespace {

constexpr std::size_t kBlock = 512;
using Block = std::array<char, kBlock>;

[[noreturn]] void corrupt(const std::string& why) {
  throw Error(Errc::ArchiveCorrupt, "checkpoint archive is corrupt: " + why);
}

void put_octal(char* field, std::size_t width, std::uint64_t value) {
  // width includes the trailing NUL
  std::string digits(width - 1, '0');
  for (std::size_t i = width - 1; i-- > 0 && value;) {
    digits[i] = static_cast<char>('0' + (value & 7));
    value >>= 3;
  }
  std::memcpy(field, digits.data(), width - 1);
  field[width - 1] = '\0';
}

std::uint64_t get_octal(const char* field, std::size_t width) {
  std::uint64_t v = 0;
  std::size_t i = 0;
  while (i < width && field[i] == ' ') ++i;
  for (; i < width && field[i] >= '0' && field[i] <= '7'; ++i) v = (v << 3) | (field[i] - '0');
  for (; i < width; ++i) {
    if (field[i] != '\0' && field[i] != ' ') corrupt("bad numeric field");
  }
  return v;
}

unsigned checksum(const Block& b) {
  unsigned sum = 0;
  for (std::size_t i = 0; i < kBlock; ++i) {
    bool in_field = i >= 148 && i < 156;
    sum += in_field ? ' ' : static_cast<unsigned char>(b[i]);
  }
  return sum;
}

Block make_header(const std::string& name, char type, fs::perms perms, std::uint64_t size,
                  const std::string& link) {
  Block b{};
  std::memcpy(b.data(), name.data(), std::min<std::size_t>(name.size(), 100));
  put_octal(&b[100], 8, static_cast<std::uint64_t>(perms) & 07777);
  put_octal(&b[108], 8, 0);
  put_octal(&b[116], 8, 0);
  put_octal(&b[124], 12, size);
  put_octal(&b[136], 12, 0);
  b[156] = type;
  std::memcpy(&b[157], link.data(), std::min<std::size_t>(link.size(), 100));
  std::memcpy(&b[257], "ustar", 6);
  std::memcpy(&b[263], "00", 2);
  put_octal(&b[329], 8, 0);
  put_octal(&b[337], 8, 0);
  char sum[8];
  std::snprintf(sum, sizeof sum, "%06o", checksum(b));
  std::memcpy(&b[148], sum, 6);
  b[154] = '\0';
  b[155] = ' ';
  return b;
}

std::string pax_record(const std::string& key, const std::string& value) {
  std::string body = " " + key + "=" + value + "\n";
  std::size_t len = body.size() + 1;
  while (std::to_string(len).size() + body.size() != len) len = std::to_string(len).size() + body.size();
  return std::to_string(len) + body;
}

class Writer {
 public:
  explicit Writer(const fs::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw Error(Errc::ArchiveFailed, "cannot create archive " + path.string());
  }

  void entry(const std::string& name, char type, fs::perms perms, std::uint64_t size,
             const std::string& link) {
    std::string records;
    if (name.size() > 100) records += pax_record("path", name);
    if (link.size() > 100) records += pax_record("linkpath", link);
    if (!records.empty()) {
      auto short_name = "PaxHeaders/" + name.substr(name.size() > 80 ? name.size() - 80 : 0);
      write_block(make_header(short_name, 'x', fs::perms(0644), records.size(), ""));
      write_data(records.data(), records.size());
      pad(records.size());
    }
    write_block(make_header(name, type, perms, size, link));
  }

  void write_data(const char* data, std::size_t n) {
    out_.write(data, static_cast<std::streamsize>(n));
    if (!out_) throw Error(Errc::ArchiveFailed, "write failed");
  }

  void pad(std::uint64_t size) {
    static const Block zero{};
    auto rem = size % kBlock;
    if (rem) write_data(zero.data(), kBlock - rem);
  }

  void finish() {
    static const Block zero{};
    write_block(zero);
    write_block(zero);
    out_.flush();
    if (!out_) throw Error(Errc::ArchiveFailed, "flush failed");
  }

 private:
  void write_block(const Block& b) { write_data(b.data(), kBlock); }
  std::ofstream out_;
};

bool is_safe_path(const std::string& p) {
  if (p.empty() || p.front() == '/') return false;
  for (const auto& part : fs::path(p)) {
    if (part == "..") return false;
  }
  return true;
}

std::map<std::string, std::string> parse_pax(const std::string& data) {
  std::map<std::string, std::string> out;
  std::size_t pos = 0;
  while (pos < data.size()) {
    auto sp = data.find(' ', pos);
    if (sp == std::string::npos) corrupt("bad pax record");
    std::size_t len = 0;
    try {
      len = std::stoul(data.substr(pos, sp - pos));
    } catch (...) {
      corrupt("bad pax record length");
    }
    if (len == 0 || pos + len > data.size() || data[pos + len - 1] != '\n') corrupt("bad pax record");
    auto kv = data.substr(sp + 1, pos + len - sp - 2);
    auto eq = kv.find('=');
    if (eq == std::string::npos) corrupt("bad pax record");
    out[kv.substr(0, eq)] = kv.substr(eq + 1);
    pos += len;
  }
  return out;
}

/// Reads every entry; `on_file` receives file data in chunks.
void read_archive(const fs::path& path,
                  const std::function<void(const ArchiveEntry&)>& on_entry,
                  const std::function<void(const ArchiveEntry&, const char*, std::size_t)>& on_data) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::CheckpointNotFound, "cannot open archive " + path.string());
  auto read_block = [&](Block& b) {
    in.read(b.data(), kBlock);
    return static_cast<std::size_t>(in.gcount()) == kBlock;
  };
  std::map<std::string, std::string> pax;
  bool ended = false;
  Block b;
  while (read_block(b)) {
    if (std::all_of(b.begin(), b.end(), [](char c) { return c == 0; })) {
      Block second;
      if (!read_block(second) ||
          !std::all_of(second.begin(), second.end(), [](char c) { return c == 0; })) {
        corrupt("incomplete end-of-archive marker");
      }
      ended = true;
      break;
    }
    if (std::memcmp(&b[257], "ustar", 5) != 0) corrupt("missing ustar magic");
    if (get_octal(&b[148], 8) != checksum(b)) corrupt("header checksum mismatch");
    char type = b[156];
    std::uint64_t size = get_octal(&b[124], 12);
    std::string name(&b[0], strnlen(&b[0], 100));
    std::string prefix(&b[345], strnlen(&b[345], 155));
    if (!prefix.empty()) name = prefix + "/" + name;
    std::string link(&b[157], strnlen(&b[157], 100));

    if (type == 'x' || type == 'g') {
      std::string data(size, '\0');
      in.read(data.data(), static_cast<std::streamsize>(size));
      if (static_cast<std::uint64_t>(in.gcount()) != size) corrupt("truncated pax header");
      in.ignore(static_cast<std::streamsize>((kBlock - size % kBlock) % kBlock));
      if (type == 'x') pax = parse_pax(data);
      continue;
    }
    if (auto it = pax.find("path"); it != pax.end()) name = it->second;
    if (auto it = pax.find("linkpath"); it != pax.end()) link = it->second;
    pax.clear();
    while (!name.empty() && name.back() == '/') name.pop_back();
    if (!is_safe_path(name)) corrupt("unsafe path '" + name + "'");

    ArchiveEntry e;
    e.path = name;
    e.perms = static_cast<fs::perms>(get_octal(&b[100], 8) & 07777);
    if (type == '5') {
      e.kind = ArchiveEntry::Kind::Dir;
    } else if (type == '2') {
      e.kind = ArchiveEntry::Kind::Symlink;
      e.link_target = link;
    } else if (type == '0' || type == '\0') {
      e.kind = ArchiveEntry::Kind::File;
      e.size = size;
    } else {
      corrupt(std::string("unsupported entry type '") + type + "'");
    }
    on_entry(e);
    if (e.kind == ArchiveEntry::Kind::File) {
      std::vector<char> buf(1 << 16);
      std::uint64_t left = size;
      while (left > 0) {
        auto want = static_cast<std::size_t>(std::min<std::uint64_t>(left, buf.size()));
        in.read(buf.data(), static_cast<std::streamsize>(want));
        auto got = static_cast<std::size_t>(in.gcount());
        if (got != want) corrupt("truncated data for '" + name + "'");
        on_data(e, buf.data(), got);
        left -= got;
      }
      auto padding = (kBlock - size % kBlock) % kBlock;
      if (padding) {
        in.read(buf.data(), static_cast<std::streamsize>(padding));
        if (static_cast<std::size_t>(in.gcount()) != padding) corrupt("truncated padding");
      }
    }
  }
  if (!ended) corrupt("archive ends without end-of-archive marker");
}

}  // namespace

std::uint64_t write_archive(const fs::path& root, const fs::path& archive,
                            const std::set<std::string>& exclude) {
  std::vector<migrate::detail::Entry> entries;
  try {
    entries = migrate::detail::scan(root);
  } catch (const fs::filesystem_error& e) {
    throw Error(Errc::ArchiveFailed, std::string("cannot scan ") + root.string() + ": " + e.what());
  }
  auto tmp = archive;
  tmp += ".partial";
  try {
    Writer w(tmp);
    std::vector<char> buf(1 << 16);
    for (const auto& e : entries) {
      auto top = e.rel.substr(0, e.rel.find('/'));
      if (exclude.count(top)) continue;
      using K = migrate::detail::Entry::Kind;
      if (e.kind == K::Dir) {
        w.entry(e.rel + "/", '5', e.perms, 0, "");
      } else if (e.kind == K::Symlink) {
        w.entry(e.rel, '2', fs::perms(0777), 0, fs::read_symlink(root / e.rel).string());
      } else {
        std::ifstream in(root / e.rel, std::ios::binary);
        if (!in) throw Error(Errc::ArchiveFailed, "cannot read " + e.rel);
        w.entry(e.rel, '0', e.perms, e.size, "");
        std::uint64_t left = e.size;
        while (left > 0) {
          auto want = static_cast<std::size_t>(std::min<std::uint64_t>(left, buf.size()));
          in.read(buf.data(), static_cast<std::streamsize>(want));
          if (static_cast<std::size_t>(in.gcount()) != want) {
            throw Error(Errc::ArchiveFailed, e.rel + " changed while archiving");
          }
          w.write_data(buf.data(), want);
          left -= want;
        }
        w.pad(e.size);
      }
    }
    w.finish();
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }
  fs::permissions(tmp, fs::perms::owner_read | fs::perms::owner_write, fs::perm_options::replace);
  fs::rename(tmp, archive);
  return fs::file_size(archive);
}

std::vector<ArchiveEntry> list_archive(const fs::path& archive) {
  std::vector<ArchiveEntry> out;
  read_archive(
      archive, [&](const ArchiveEntry& e) { out.push_back(e); },
      [](const ArchiveEntry&, const char*, std::size_t) {});
  return out;
}

void extract_archive(const fs::path& archive, const fs::path& dest) {
  fs::create_directories(dest);
  std::ofstream out;
  std::vector<std::pair<fs::path, fs::perms>> dir_perms;
  std::optional<std::pair<fs::path, fs::perms>> open_file;
  auto close_file = [&] {
    if (!open_file) return;
    out.close();
    if (!out) corrupt("cannot write " + open_file->first.string());
    fs::permissions(open_file->first, open_file->second, fs::perm_options::replace);
    open_file.reset();
  };
  read_archive(
      archive,
      [&](const ArchiveEntry& e) {
        close_file();
        auto target = dest / e.path;
        fs::create_directories(target.parent_path());
        switch (e.kind) {
          case ArchiveEntry::Kind::Dir:
            fs::create_directories(target);
            dir_perms.emplace_back(target, e.perms);
            break;
          case ArchiveEntry::Kind::Symlink: {
            std::error_code ec;
            fs::remove(target, ec);
            fs::create_symlink(e.link_target, target);
            break;
          }
          case ArchiveEntry::Kind::File:
            out.open(target, std::ios::binary | std::ios::trunc);
            if (!out) corrupt("cannot create " + target.string());
            open_file.emplace(target, e.perms);
            break;
        }
      },
      [&](const ArchiveEntry&, const char* data, std::size_t n) {
        out.write(data, static_cast<std::streamsize>(n));
      });
  close_file();
  for (auto it = dir_perms.rbegin(); it != dir_perms.rend(); ++it) {
    fs::permissions(it->first, it->second, fs::perm_options::replace);
  }
}

}  // namespace dbm::lifecycle
