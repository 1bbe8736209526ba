#include "gateway/config.hpp"

#include <unistd.h>

#include <cstdlib>

#include "common/error.hpp"
#include "common/fsutil.hpp"

#ifndef DBM_ENGINED_BUILD_PATH
#define DBM_ENGINED_BUILD_PATH ""
#endif

namespace dbm::gateway {
namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

fs::path path_or(const nlohmann::json& j, const char* key, const fs::path& base,
                 const fs::path& fallback) {
  if (j.contains(key) && j[key].is_string()) return resolve(base, j[key].get<std::string>());
  return fallback;
}

}  // namespace

fs::path default_engine_daemon() {
  if (const char* env = std::getenv("DBM_ENGINED"); env && *env) return env;
  std::error_code ec;
  auto self = fs::read_symlink("/proc/self/exe", ec);
  if (!ec) {
    auto sibling = self.parent_path() / "dbm_engined";
    if (fs::exists(sibling)) return sibling;
  }
  return DBM_ENGINED_BUILD_PATH;
}

ServiceConfig ServiceConfig::from_json(const nlohmann::json& j, const fs::path& base_dir) {
  ServiceConfig c;
  if (!j.contains("state_root")) throw Error(Errc::InvalidArgument, "config needs state_root");
  c.state_root = resolve(base_dir, j["state_root"].get<std::string>());
  auto& l = c.lifecycle;
  l.registry_root = path_or(j, "registry_root", base_dir, c.state_root / "registry");
  l.central_root = path_or(j, "central_root", base_dir, c.state_root / "central");
  l.keys_root = path_or(j, "keys_root", base_dir, c.state_root / "keys");
  l.identity_file = path_or(j, "identity_file", base_dir, c.state_root / "identities.json");
  c.session_key_file = path_or(j, "session_key_file", base_dir, c.state_root / "session.key");

  auto cluster = j.value("cluster", nlohmann::json::object());
  l.cluster = clustersim::ClusterConfig::from_json(cluster);
  l.cluster.cluster_root = path_or(cluster, "cluster_root", base_dir, c.state_root / "cluster");

  auto dns = j.value("dns", nlohmann::json::object());
  l.dns = dyndns::ZoneConfig::from_json(dns);
  l.dns.store_dir = path_or(dns, "store_dir", base_dir, c.state_root / "dns");

  auto gw = j.value("gateway", nlohmann::json::object());
  c.http_bind = gw.value("bind", c.http_bind);
  c.http_port = gw.value("port", c.http_port);

  l.copy_workers = j.value("copy_workers", l.copy_workers);
  l.engine_base_port = j.value("engine_base_port", l.engine_base_port);
  l.service_user = j.value("service_user", l.service_user);
  l.stop_grace = std::chrono::milliseconds(j.value("stop_grace_ms", 5000));
  l.engine_daemon = path_or(j, "engine_daemon", base_dir, default_engine_daemon());
  if (auto fi = j.value("fault_injection", nlohmann::json::object()); fi.contains("pause_after_step")) {
    l.pause_after_step = fi["pause_after_step"].get<std::string>();
  }
  return c;
}

ServiceConfig ServiceConfig::load(const fs::path& file) {
  auto text = fsutil::try_read_file(file);
  if (!text) throw Error(Errc::InvalidArgument, "cannot read config " + file.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(*text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidArgument, "malformed config " + file.string() + ": " + e.what());
  }
  return from_json(j, fs::absolute(file).parent_path());
}

}  // namespace dbm::gateway
