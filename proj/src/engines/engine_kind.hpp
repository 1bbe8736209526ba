#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace dbm::engines {

/// toy-kv mimics Accumulo on Zookeeper/HDFS; toy-tabular mimics SciDB on its
/// PostgreSQL catalog.
enum class EngineKind { ToyKv, ToyTabular };

std::string_view to_string(EngineKind kind);
/// Accepts "toy-kv"/"toy-tabular" and the aliases "accumulo"/"scidb".
EngineKind engine_from_string(std::string_view s);
std::string_view default_version(EngineKind kind);

enum class NodeScope { MasterOnly, AllNodes };

/// How a service slot is realized: a no-op marker or a supervised daemon.
enum class ServiceImpl { Noop, Daemon };

struct ServiceSpec {
  std::string name;
  NodeScope node_scope;
  int start_order;
  std::vector<std::string> depends_on;
  ServiceImpl impl;
  /// Daemon role passed to dbm_engined (empty for no-op slots).
  std::string role;
  /// Port offset from the engine base port.
  int port_offset = 0;
  /// Data directory (relative to the database folder) the daemon owns. For
  /// AllNodes services "{i}" expands to the node index.
  std::string data_dir;
};

/// Ordered by start_order (a topological order of depends_on).
const std::vector<ServiceSpec>& service_specs(EngineKind kind);

/// Subtrees of the central folder that hold engine data. Restore replaces these.
std::vector<std::string> data_subtrees(EngineKind kind);

/// Relative paths node `index` copies from central to local storage on start.
std::vector<std::string> node_inbound_paths(EngineKind kind, int index);
/// Relative paths node `index` copies back to central storage on stop.
std::vector<std::string> node_outbound_paths(EngineKind kind, int index);

/// Partition directory holding the key/value shard served by node `index`.
std::string partition_dir(EngineKind kind, int index);

}  // namespace dbm::engines
