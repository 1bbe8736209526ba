#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "security/identity.hpp"

namespace dbm::security {

/// Simulated ownership recorded in a `<file>.acl` sidecar. Mode bits are real
/// (chmod); owner and group names are simulated because the service cannot
/// chown without root. Reads go through may_read()/read_as().
struct Ownership {
  std::string owner;
  std::optional<std::string> group;
  fs::perms mode = fs::perms::owner_read | fs::perms::owner_write;
};

fs::path acl_path(const fs::path& file);

void write_protected(const fs::path& path, std::string_view content, const Ownership& own);
/// Applies ownership to an existing file or directory.
void protect(const fs::path& path, const Ownership& own);
std::optional<Ownership> ownership_of(const fs::path& path);

/// Effective read permission of `who` on `path` from the owner/group/other
/// class bits that apply. Files without a sidecar use the "other" bits.
bool may_read(const Identity& who, const fs::path& path);
/// Throws PermissionDenied.
std::string read_as(const Identity& who, const fs::path& path);

}  // namespace dbm::security
