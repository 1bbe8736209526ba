#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "common/timeutil.hpp"
#include "engines/engine_kind.hpp"
#include "registry/status.hpp"

namespace dbm::registry {

namespace fs = std::filesystem;

struct DatabaseDescriptor {
  std::string name;
  engines::EngineKind engine = engines::EngineKind::ToyKv;
  std::string engine_version;
  int num_nodes = 1;
  std::string security_group;
  fs::path central_path;
  timeutil::TimePoint created_at{};

  /// "<engine> <version>" as rendered in the Type column.
  std::string type_string() const;

  nlohmann::json to_json() const;
  static DatabaseDescriptor from_json(const nlohmann::json& j);
};

struct DatabaseSummary {
  std::string name;
  std::string type;
  StatusValue status;
  std::vector<Action> actions;

  nlohmann::json to_json() const;
};

struct TransitionReceipt {
  std::string name;
  StatusValue from;
  StatusValue to;
  timeutil::TimePoint since;
  std::optional<std::string> job_id;
};

/// Optional fields recorded with a transition into Starting/Checkpointing.
struct TransitionContext {
  std::optional<std::string> job_id;
  std::optional<std::string> started_by;
};

struct HistoryEntry {
  StatusValue from;
  StatusValue to;
  timeutil::TimePoint at;
  std::optional<std::string> job_id;
};

/// `[a-z][a-z0-9_-]{0,62}`
bool is_valid_name(std::string_view name);

/// Catalog of databases. The index lives at `<root>/index.json`; each
/// database's status lives in `<central_path>/status.json`; the transition
/// history is appended to `<root>/history/<name>.jsonl`.
///
/// transition() is the single serialization point: a per-database
/// compare-and-set under an in-process mutex and a cross-process flock.
class Registry {
 public:
  explicit Registry(fs::path root);

  /// Returns the database id (the name is the key). Writes status Stopped.
  std::string register_database(const DatabaseDescriptor& descriptor);

  TransitionReceipt transition(const std::string& name, StatusValue from, StatusValue to,
                               const TransitionContext& ctx = {});

  DatabaseStatus get_status(const std::string& name) const;
  DatabaseDescriptor get_descriptor(const std::string& name) const;
  bool contains(const std::string& name) const;

  /// Visible databases (security_group in caller_groups), sorted by name.
  std::vector<DatabaseSummary> list_databases(const std::set<std::string>& caller_groups) const;
  std::vector<DatabaseDescriptor> all() const;

  std::vector<HistoryEntry> history(const std::string& name) const;

  /// Runs `fn` while holding the database's transition lock, after checking
  /// the status equals `required`. Used for offline surgery (restore).
  void with_status_locked(const std::string& name, StatusValue required,
                          const std::function<void()>& fn);

  const fs::path& root() const { return root_; }

 private:
  std::mutex& db_mutex(const std::string& name);
  fs::path status_path(const DatabaseDescriptor& d) const;
  fs::path lock_path(const DatabaseDescriptor& d) const;
  std::map<std::string, DatabaseDescriptor> load_index() const;

  fs::path root_;
  mutable std::mutex index_mu_;
  std::mutex locks_mu_;
  std::map<std::string, std::unique_ptr<std::mutex>> db_locks_;
};

}  // namespace dbm::registry
