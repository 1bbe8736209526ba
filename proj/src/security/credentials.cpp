#include "security/credentials.hpp"

#include "common/error.hpp"
#include "common/fsutil.hpp"
#include "common/random.hpp"
#include "common/timeutil.hpp"
#include "security/protected_file.hpp"

namespace dbm::security {
namespace {

constexpr auto kOwnerRw = fs::perms::owner_read | fs::perms::owner_write;
constexpr auto kKeyMode = kOwnerRw | fs::perms::group_read;

std::string trim_newline(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

}  // namespace

nlohmann::json RevocationPlan::to_json() const {
  return {{"database", database},
          {"user", user},
          {"revoked_by", revoked_by},
          {"revoked_at", revoked_at},
          {"generation_at_revocation", generation_at_revocation},
          {"steps",
           nlohmann::json::array(
               {{{"step", 1}, {"action", "remove user from security group"}, {"done", true}},
                {{"step", 2}, {"action", "restart database"}, {"done", complete}}})},
          {"state", complete ? "COMPLETE" : "INCOMPLETE"}};
}

fs::path secrets_dir(const fs::path& central_path) { return central_path / "secrets"; }
fs::path shared_secret_path(const fs::path& central_path) {
  return secrets_dir(central_path) / "shared_secret";
}
fs::path superuser_path(const fs::path& central_path) {
  return secrets_dir(central_path) / "superuser";
}

CredentialStore::CredentialStore(fs::path keys_root, IdentityTable& identities)
    : keys_root_(std::move(keys_root)), identities_(identities) {
  fs::create_directories(keys_root_);
}

void CredentialStore::provision_secrets(const std::string& db, const fs::path& central_path) {
  auto dir = secrets_dir(central_path);
  if (fs::exists(shared_secret_path(central_path)) || fs::exists(superuser_path(central_path))) {
    throw Error(Errc::AlreadyProvisioned, "secrets already provisioned for " + db);
  }
  fs::create_directories(dir);
  Ownership own{identities_.service_user(), std::nullopt, fs::perms::owner_all};
  protect(dir, own);
  own.mode = kOwnerRw;
  write_protected(shared_secret_path(central_path), random_alnum(kSecretLength) + "\n", own);
  write_protected(superuser_path(central_path), random_alnum(kSecretLength) + "\n", own);
}

SharedSecret CredentialStore::shared_secret(const std::string& db,
                                            const fs::path& central_path) const {
  auto path = shared_secret_path(central_path);
  return {db, trim_newline(read_as(identities_.service_identity(), path)), path};
}

SuperuserCredential CredentialStore::superuser(const std::string& db,
                                               const fs::path& central_path) const {
  auto path = superuser_path(central_path);
  SuperuserCredential c;
  c.database = db;
  c.value = trim_newline(read_as(identities_.service_identity(), path));
  c.stored_at = path;
  return c;
}

fs::path CredentialStore::key_path(const std::string& db) const {
  return db_dir(db) / "accesskey";
}

std::uint64_t CredentialStore::generation(const std::string& db) const {
  auto text = fsutil::try_read_file(db_dir(db) / "generation");
  if (!text) return 0;
  return std::stoull(*text);
}

AccessKey CredentialStore::rotate_access_key(const std::string& db,
                                             const std::string& security_group,
                                             const PasswordSetter& set_engine_password) {
  std::lock_guard lk(mu_);
  auto dir = db_dir(db);
  fs::create_directories(dir);
  protect(dir, {identities_.service_user(), security_group,
                fs::perms::owner_all | fs::perms::group_read | fs::perms::group_exec});

  AccessKey key;
  key.database = db;
  key.value = random_alnum(kSecretLength);
  key.generation = generation(db) + 1;
  key.stored_at = key_path(db);

  // The old key stays valid until the engine has accepted the new one.
  set_engine_password(key.value);
  write_protected(key.stored_at, key.value + "\n",
                  {identities_.service_user(), security_group, kKeyMode});
  fsutil::write_file_atomic(dir / "generation", std::to_string(key.generation) + "\n");
  return key;
}

std::string CredentialStore::locate_access_key(const std::string& db,
                                               const std::string& security_group,
                                               const std::string& caller) const {
  auto who = identities_.require(caller);
  if (!who.service && !who.in_group(security_group)) {
    throw Error(Errc::PermissionDenied,
                caller + " is not a member of " + security_group + " and cannot read the key");
  }
  auto path = key_path(db);
  if (!fs::exists(path)) {
    throw Error(Errc::NoKeyYet, "database " + db + " has not been started yet; no access key");
  }
  return trim_newline(read_as(who, path));
}

RevocationPlan CredentialStore::revoke_user(const std::string& db,
                                            const std::string& security_group,
                                            const std::string& user, const std::string& admin) {
  auto caller = identities_.require(admin);
  if (!caller.admin) throw Error(Errc::PermissionDenied, admin + " is not an administrator");
  identities_.remove_from_group(user, security_group);

  std::lock_guard lk(mu_);
  RevocationPlan plan;
  plan.database = db;
  plan.user = user;
  plan.revoked_by = admin;
  plan.revoked_at = timeutil::to_rfc3339(timeutil::Clock::now());
  plan.generation_at_revocation = generation(db);

  auto dir = db_dir(db);
  fs::create_directories(dir);
  auto path = dir / "revocations.json";
  nlohmann::json doc = nlohmann::json::array();
  if (auto text = fsutil::try_read_file(path)) doc = nlohmann::json::parse(*text);
  doc.push_back({{"user", plan.user},
                 {"revoked_by", plan.revoked_by},
                 {"revoked_at", plan.revoked_at},
                 {"generation_at_revocation", plan.generation_at_revocation}});
  fsutil::write_json_atomic(path, doc);
  return plan;
}

std::vector<RevocationPlan> CredentialStore::revocations(const std::string& db) const {
  std::vector<RevocationPlan> out;
  auto text = fsutil::try_read_file(db_dir(db) / "revocations.json");
  if (!text) return out;
  auto current = generation(db);
  for (const auto& r : nlohmann::json::parse(*text)) {
    RevocationPlan p;
    p.database = db;
    p.user = r.at("user").get<std::string>();
    p.revoked_by = r.at("revoked_by").get<std::string>();
    p.revoked_at = r.at("revoked_at").get<std::string>();
    p.generation_at_revocation = r.at("generation_at_revocation").get<std::uint64_t>();
    p.complete = current > p.generation_at_revocation;
    out.push_back(std::move(p));
  }
  return out;
}

void CredentialStore::forget(const std::string& db) {
  std::lock_guard lk(mu_);
  std::error_code ec;
  fs::remove_all(db_dir(db), ec);
}

}  // namespace dbm::security
