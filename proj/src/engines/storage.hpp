#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>

#include <json.hpp>

#include "engines/engine_kind.hpp"

namespace dbm::engines {

namespace fs = std::filesystem;

/// Lays down the initial image in an empty central folder. toy-kv gets the
/// filesystem-image manifest, empty tablet partitions and a zookeeper dir;
/// toy-tabular gets a catalog with a schema version header and worker
/// manifests. Throws NotEmpty.
void init_storage(EngineKind kind, const fs::path& central_path, int num_nodes);

/// conf/engine.json. Secrets are referenced by relative path, never by value.
void write_engine_config(EngineKind kind, const fs::path& central_path, const std::string& db,
                         int num_nodes, const std::string& zone);

/// Directory (relative) where the authority daemon keeps users.json.
std::string users_dir(EngineKind kind);

/// One partition of the key/value map, persisted as an append-only JSON-lines
/// log (`data.log`) replayed on open. Last write wins.
class PartitionStore {
 public:
  explicit PartitionStore(fs::path dir);
  ~PartitionStore();
  PartitionStore(const PartitionStore&) = delete;
  PartitionStore& operator=(const PartitionStore&) = delete;

  void put(const std::string& key, const std::string& value);
  std::optional<std::string> get(const std::string& key) const;
  std::size_t size() const;

  /// Reads a partition directory without opening it for writing.
  static std::map<std::string, std::string> load(const fs::path& dir);

 private:
  fs::path dir_;
  int fd_ = -1;
  mutable std::mutex mu_;
  std::map<std::string, std::string> data_;
};

/// users.json: {"users": {name: "<salt>$<sha256>"}}.
class UserStore {
 public:
  explicit UserStore(fs::path file);
  void set_password(const std::string& user, const std::string& password);
  bool verify(const std::string& user, const std::string& password) const;

 private:
  fs::path file_;
  mutable std::mutex mu_;
  nlohmann::json users_;
};

}  // namespace dbm::engines
