#pragma once

#include <chrono>
#include <filesystem>
#include <string>

#include "security/identity.hpp"

namespace dbm::gateway {

namespace fs = std::filesystem;

/// Signed bearer tokens minted from the identity table:
/// "<base64url payload>.<hex HMAC-SHA256>". The key persists in `key_file`
/// (0600) so tokens survive a service restart.
class SessionIssuer {
 public:
  SessionIssuer(const fs::path& key_file, const security::IdentityTable& identities,
                std::chrono::seconds lifetime = std::chrono::hours(12));

  /// Throws Unauthenticated for unknown users.
  std::string login(const std::string& user) const;
  /// Resolves a token to the current identity. Throws Unauthenticated.
  security::Identity authenticate(const std::string& token) const;

 private:
  std::string sign(const std::string& payload) const;

  std::string key_;
  const security::IdentityTable& identities_;
  std::chrono::seconds lifetime_;
};

}  // namespace dbm::gateway
