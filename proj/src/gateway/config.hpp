#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "lifecycle/orchestrator.hpp"

namespace dbm::gateway {

namespace fs = std::filesystem;

/// Service configuration file (path from DBM_CONFIG). Everything not given
/// explicitly lives under `state_root`:
///   registry/ central/ keys/ cluster/ dns/ identities.json session.key
struct ServiceConfig {
  fs::path state_root;
  lifecycle::LifecycleOptions lifecycle;
  std::string http_bind = "127.0.0.1";
  int http_port = 8080;
  fs::path session_key_file;

  /// Relative paths resolve against `base_dir`.
  static ServiceConfig from_json(const nlohmann::json& j, const fs::path& base_dir);
  static ServiceConfig load(const fs::path& file);
};

/// DBM_ENGINED, else `dbm_engined` next to the running executable, else the
/// build-time location.
fs::path default_engine_daemon();

}  // namespace dbm::gateway
