#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "security/identity.hpp"

namespace dbm::security {

inline constexpr std::size_t kSecretLength = 48;
inline constexpr const char* kSuperuserName = "root";
inline constexpr const char* kAccessUserName = "dbuser";

struct SharedSecret {
  std::string database;
  std::string value;
  fs::path stored_at;
};

struct SuperuserCredential {
  std::string database;
  std::string username = kSuperuserName;
  std::string value;
  fs::path stored_at;
};

struct AccessKey {
  std::string database;
  std::string username = kAccessUserName;
  std::string value;
  std::uint64_t generation = 0;
  fs::path stored_at;
};

struct RevocationPlan {
  std::string database;
  std::string user;
  std::string revoked_by;
  std::string revoked_at;
  /// Key generation in force when the user was removed from the group.
  std::uint64_t generation_at_revocation = 0;
  /// Step 2 (restart) has happened once the generation moved past it.
  bool complete = false;

  nlohmann::json to_json() const;
};

fs::path secrets_dir(const fs::path& central_path);
fs::path shared_secret_path(const fs::path& central_path);
fs::path superuser_path(const fs::path& central_path);

/// Shared secrets live inside the database's central folder; access keys live
/// under `<keys_root>/<db>/accesskey`, readable by the security group.
class CredentialStore {
 public:
  CredentialStore(fs::path keys_root, IdentityTable& identities);

  /// Throws AlreadyProvisioned.
  void provision_secrets(const std::string& db, const fs::path& central_path);

  /// Reads as the service identity.
  SharedSecret shared_secret(const std::string& db, const fs::path& central_path) const;
  SuperuserCredential superuser(const std::string& db, const fs::path& central_path) const;

  /// Installs the new value in the engine first, then publishes the file.
  using PasswordSetter = std::function<void(const std::string& new_value)>;
  AccessKey rotate_access_key(const std::string& db, const std::string& security_group,
                              const PasswordSetter& set_engine_password);

  /// Throws PermissionDenied or NoKeyYet.
  std::string locate_access_key(const std::string& db, const std::string& security_group,
                                const std::string& caller) const;

  std::uint64_t generation(const std::string& db) const;
  fs::path key_path(const std::string& db) const;

  /// Step 1 of revocation: drop the user from the group. Step 2 (restart) is
  /// left to the caller; the returned plan says whether it has happened.
  RevocationPlan revoke_user(const std::string& db, const std::string& security_group,
                             const std::string& user, const std::string& admin);
  std::vector<RevocationPlan> revocations(const std::string& db) const;

  /// Removes the keys area for a database (used when tests tear down).
  void forget(const std::string& db);

 private:
  fs::path db_dir(const std::string& db) const { return keys_root_ / db; }

  fs::path keys_root_;
  IdentityTable& identities_;
  mutable std::mutex mu_;
};

}  // namespace dbm::security
