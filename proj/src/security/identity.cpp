#include "security/identity.hpp"

#include "common/error.hpp"
#include "common/fsutil.hpp"

namespace dbm::security {

nlohmann::json Identity::to_json() const {
  return {{"user", name},
          {"groups", std::vector<std::string>(groups.begin(), groups.end())},
          {"admin", admin}};
}

IdentityTable::IdentityTable(fs::path file, std::string service_user)
    : file_(std::move(file)), service_user_(std::move(service_user)) {
  load();
}

void IdentityTable::load() {
  users_.clear();
  auto text = fsutil::try_read_file(file_);
  if (!text) return;
  auto doc = nlohmann::json::parse(*text);
  auto users = doc.value("users", nlohmann::json::object());
  for (auto& [name, entry] : users.items()) {
    Identity id;
    id.name = name;
    for (const auto& g : entry.value("groups", nlohmann::json::array())) {
      id.groups.insert(g.get<std::string>());
    }
    id.admin = entry.value("admin", false);
    users_.push_back(std::move(id));
  }
}

void IdentityTable::persist_locked() const {
  nlohmann::json users = nlohmann::json::object();
  for (const auto& u : users_) {
    users[u.name] = {{"groups", std::vector<std::string>(u.groups.begin(), u.groups.end())},
                     {"admin", u.admin}};
  }
  fsutil::write_json_atomic(file_, {{"users", users}});
}

std::optional<Identity> IdentityTable::find(const std::string& user) const {
  if (user == service_user_) return service_identity();
  std::lock_guard lk(mu_);
  for (const auto& u : users_) {
    if (u.name == user) return u;
  }
  return std::nullopt;
}

Identity IdentityTable::require(const std::string& user) const {
  auto id = find(user);
  if (!id) throw Error(Errc::Unauthenticated, "unknown user: '" + user + "'");
  return *id;
}

bool IdentityTable::is_admin(const std::string& user) const {
  auto id = find(user);
  return id && id->admin;
}

Identity IdentityTable::service_identity() const {
  Identity id;
  id.name = service_user_;
  id.service = true;
  return id;
}

void IdentityTable::upsert_user(const Identity& identity) {
  std::lock_guard lk(mu_);
  for (auto& u : users_) {
    if (u.name == identity.name) {
      u = identity;
      persist_locked();
      return;
    }
  }
  users_.push_back(identity);
  persist_locked();
}

void IdentityTable::remove_from_group(const std::string& user, const std::string& group) {
  std::lock_guard lk(mu_);
  for (auto& u : users_) {
    if (u.name == user) {
      if (!u.groups.erase(group)) break;
      persist_locked();
      return;
    }
  }
  throw Error(Errc::UserNotInGroup, "user " + user + " is not in group " + group);
}

std::vector<Identity> IdentityTable::users() const {
  std::lock_guard lk(mu_);
  return users_;
}

}  // namespace dbm::security
