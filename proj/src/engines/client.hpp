#pragma once

#include <cstddef>
#include <mutex>
#include <string>
#include <vector>

#include "engines/engine_run.hpp"
#include "engines/protocol.hpp"

namespace dbm::engines {

struct ClientConfig {
  std::string database;
  EngineKind kind = EngineKind::ToyKv;
  int num_nodes = 1;
  dyndns::Endpoint dns;
  std::string zone = "db.supercloud.test.";
  int base_port = 7100;
};

/// Talks to a running database by DNS name only. Keys route to partition
/// workers by key_hash() modulo the node count.
class EngineClient {
 public:
  explicit EngineClient(ClientConfig config);

  /// Authenticates against every partition worker. Throws AuthFailed,
  /// EngineUnreachable.
  void authenticate(const std::string& user, const std::string& secret);
  /// Sets a user's password on the authority with the superuser account.
  /// Throws SuperuserAuthFailed, EngineUnreachable.
  void set_password(const std::string& user, const std::string& new_secret,
                    const std::string& superuser_secret);

  /// Throws NotAuthenticated, InvalidArgument.
  void put(const std::string& key, const std::string& value);
  /// Throws KeyNotFound, NotAuthenticated.
  std::string get(const std::string& key);
  /// Keys held per partition (authenticated).
  std::vector<std::size_t> partition_counts();
  /// True when every daemon answers PING.
  bool ping();

 private:
  LineSocket open(const EngineEndpoint& ep) const;
  Reply call(int partition, const std::string& line);

  ClientConfig config_;
  std::vector<EngineEndpoint> workers_;
  std::vector<LineSocket> sockets_;
  std::mutex mu_;
};

}  // namespace dbm::engines
