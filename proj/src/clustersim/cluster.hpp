#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace dbm::clustersim {

namespace fs = std::filesystem;

struct ClusterConfig {
  int nodes = 8;
  fs::path cluster_root;
  std::string ip_base = "127.64.0.0";

  static ClusterConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct SimNode {
  int node_id = 0;  // 1-based
  std::string hostname;
  std::string ip;
  fs::path local_root;
  std::optional<std::string> job_id;  // nullopt == Free
};

/// Dotted-quad arithmetic: base + offset.
std::string ipv4_offset(const std::string& base, std::uint32_t offset);

/// The simulated nodes and their allocation table. Allocations persist to
/// `<cluster_root>/nodes.json` so a restarted orchestrator sees orphans.
class Cluster {
 public:
  explicit Cluster(ClusterConfig config);

  const ClusterConfig& config() const { return config_; }
  int total() const { return config_.nodes; }
  int free_nodes() const;
  std::vector<SimNode> nodes() const;

  /// Claims the `count` lowest-numbered free nodes for `job_id`, or returns
  /// nullopt (no partial claim) when fewer are free.
  std::optional<std::vector<SimNode>> try_allocate(int count, const std::string& job_id);
  /// Frees every node held by `job_id`; returns how many were freed.
  int release(const std::string& job_id);
  std::vector<std::string> allocated_job_ids() const;

 private:
  void persist_locked() const;

  ClusterConfig config_;
  mutable std::mutex mu_;
  std::vector<SimNode> nodes_;
};

}  // namespace dbm::clustersim
