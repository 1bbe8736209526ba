#pragma once

#include <filesystem>
#include <string>

#include "dyndns/resolver.hpp"

namespace dbm::engines {

namespace fs = std::filesystem;

/// Command line of one toy daemon process (dbm_engined).
///
/// Roles: "zookeeper" (coordination slot), "coordinator" and "catalog" (user
/// authority; coordinator first authenticates to zookeeper), "worker" (holds
/// one key/value partition and checks client credentials with the authority).
struct DaemonOptions {
  std::string role;
  std::string database;
  std::string bind = "127.0.0.1";
  int port = 0;
  fs::path data_dir;
  fs::path secret_file;
  /// Authority roles only: initial superuser password.
  fs::path superuser_file;
  fs::path users_file;
  dyndns::Endpoint dns;
  /// Name resolved through DNS to reach the authority (or, for the
  /// coordinator, zookeeper).
  std::string peer_fqdn;
  int peer_port = 0;
};

/// Runs until SIGTERM/SIGINT. Prints "READY" once serving, or
/// "FAIL <Code> <message>" and returns nonzero.
int run_daemon(const DaemonOptions& options);

}  // namespace dbm::engines
