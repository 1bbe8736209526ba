#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace dbm::security {

namespace fs = std::filesystem;

struct Identity {
  std::string name;
  std::set<std::string> groups;
  bool admin = false;
  /// The dedicated account that runs prologs and epilogs and owns secrets.
  bool service = false;

  bool in_group(const std::string& group) const { return groups.count(group) > 0; }
  nlohmann::json to_json() const;
};

/// Simulated users and groups: {"users": {name: {"groups": [...], "admin": bool}}}.
/// The service identity is implicit and never appears in the file.
class IdentityTable {
 public:
  explicit IdentityTable(fs::path file, std::string service_user = "dbservice");

  std::optional<Identity> find(const std::string& user) const;
  /// Throws Unauthenticated for unknown users.
  Identity require(const std::string& user) const;
  bool is_admin(const std::string& user) const;
  Identity service_identity() const;
  const std::string& service_user() const { return service_user_; }

  void upsert_user(const Identity& identity);
  /// Throws UserNotInGroup.
  void remove_from_group(const std::string& user, const std::string& group);
  std::vector<Identity> users() const;

 private:
  void load();
  void persist_locked() const;

  fs::path file_;
  std::string service_user_;
  mutable std::mutex mu_;
  std::vector<Identity> users_;
};

}  // namespace dbm::security
