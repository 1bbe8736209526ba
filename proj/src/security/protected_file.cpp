#include "security/protected_file.hpp"

#include <grp.h>
#include <unistd.h>

#include "common/error.hpp"
#include "common/fsutil.hpp"

namespace dbm::security {

fs::path acl_path(const fs::path& file) {
  auto p = file;
  p += ".acl";
  return p;
}

void protect(const fs::path& path, const Ownership& own) {
  fs::permissions(path, own.mode, fs::perm_options::replace);
  if (own.group) {
    // Apply the real group too when the host happens to have it.
    if (const group* g = ::getgrnam(own.group->c_str())) {
      [[maybe_unused]] int rc = ::chown(path.c_str(), static_cast<uid_t>(-1), g->gr_gid);
    }
  }
  nlohmann::json acl{{"owner", own.owner},
                     {"group", own.group ? nlohmann::json(*own.group) : nlohmann::json(nullptr)},
                     {"mode", static_cast<int>(own.mode)}};
  fsutil::write_json_atomic(acl_path(path), acl, fs::perms::owner_read | fs::perms::owner_write |
                                                      fs::perms::group_read |
                                                      fs::perms::others_read);
}

void write_protected(const fs::path& path, std::string_view content, const Ownership& own) {
  fsutil::write_file_atomic(path, content, own.mode);
  protect(path, own);
}

std::optional<Ownership> ownership_of(const fs::path& path) {
  auto text = fsutil::try_read_file(acl_path(path));
  if (!text) return std::nullopt;
  auto j = nlohmann::json::parse(*text);
  Ownership o;
  o.owner = j.at("owner").get<std::string>();
  if (!j["group"].is_null()) o.group = j["group"].get<std::string>();
  o.mode = static_cast<fs::perms>(j.at("mode").get<int>());
  return o;
}

bool may_read(const Identity& who, const fs::path& path) {
  std::error_code ec;
  auto st = fs::status(path, ec);
  if (ec || !fs::exists(st)) return false;
  auto bits = st.permissions();
  auto own = ownership_of(path);
  if (!own) return (bits & fs::perms::others_read) != fs::perms::none;
  if (who.name == own->owner) return (bits & fs::perms::owner_read) != fs::perms::none;
  if (own->group && who.in_group(*own->group)) {
    return (bits & fs::perms::group_read) != fs::perms::none;
  }
  return (bits & fs::perms::others_read) != fs::perms::none;
}

std::string read_as(const Identity& who, const fs::path& path) {
  if (!may_read(who, path)) {
    throw Error(Errc::PermissionDenied, "permission denied: " + who.name + " cannot read " +
                                            path.filename().string());
  }
  return fsutil::read_file(path);
}

}  // namespace dbm::security
