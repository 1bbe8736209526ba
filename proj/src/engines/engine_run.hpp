#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dyndns/resolver.hpp"
#include "engines/engine_kind.hpp"
#include "engines/supervisor.hpp"

namespace dbm::engines {

namespace fs = std::filesystem;

struct EngineRunConfig {
  std::string database;
  EngineKind kind = EngineKind::ToyKv;
  int num_nodes = 1;
  fs::path daemon_executable;
  dyndns::Endpoint dns;
  std::string zone = "db.supercloud.test.";
  int base_port = 7100;
  std::chrono::milliseconds stop_grace = std::chrono::seconds(5);
  std::chrono::milliseconds dependency_timeout = std::chrono::seconds(60);
  /// Upper bound of a random delay before each service start (tests use it to
  /// shake out ordering bugs).
  std::chrono::milliseconds start_jitter{0};
};

/// Where and how a service instance is reached.
struct EngineEndpoint {
  std::string fqdn;
  int port = 0;
  std::string role;
};

/// Reports substeps to the caller's job log.
using StepRunner = std::function<void(std::string_view name, const std::function<void()>& fn)>;

/// Service start/stop for one job across all of its nodes. Each node's
/// prolog calls start_node() on its own thread; a service instance starts only
/// once every instance of its dependencies (on any node) is running. Stop runs
/// the mirror image: an instance stops only after every dependent instance
/// has stopped.
class EngineRun {
 public:
  explicit EngineRun(EngineRunConfig config);

  /// Throws DependencyStartFailed or AuthMismatch; later services on this
  /// node are then skipped.
  void start_node(int index, const std::string& ip, const fs::path& local_db_dir,
                  const StepRunner& step);
  /// PINGs every daemon on the node through its DNS name. Throws EngineUnreachable.
  void check_health(int index);
  /// Marks a node whose prolog will never reach start_node().
  void abandon_node(int index);
  /// Barrier used before the access key is rotated. Throws DependencyStartFailed.
  void wait_all_started();

  /// Returns anomalies (daemon already dead, StopTimeout kills). Idempotent.
  std::vector<std::string> stop_node(int index, const StepRunner& step);
  bool node_had_services(int index) const;

  /// Start/stop events in the order they happened: "<event> <service> <index>".
  std::vector<std::string> events() const;

  EngineEndpoint authority_endpoint() const;
  std::vector<EngineEndpoint> worker_endpoints() const;
  const EngineRunConfig& config() const { return config_; }

 private:
  enum class State { Pending, Running, Failed, Skipped, Stopped };
  struct Instance {
    const ServiceSpec* spec = nullptr;
    int index = 0;
    State state = State::Pending;
    std::optional<DaemonProcess> process;
  };

  std::vector<std::pair<const ServiceSpec*, int>> instances_for(int index) const;
  Instance& at(const std::string& service, int index);
  void start_instance(Instance& inst, const std::string& ip, const fs::path& local_db_dir);
  std::string master_fqdn() const;
  std::string node_fqdn(int index) const;

  EngineRunConfig config_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::pair<std::string, int>, Instance> instances_;
  std::vector<bool> had_services_;
  std::vector<std::string> events_;
};

/// Port of a service for a database; the same on every node.
int service_port(int base_port, const ServiceSpec& spec);

/// "<db>.<zone>." (the master node) and "<db>-<i>.<zone>." (node i).
std::string master_fqdn(const std::string& db, const std::string& zone);
std::string node_fqdn(const std::string& db, int index, const std::string& zone);
EngineEndpoint authority_endpoint(EngineKind kind, const std::string& db, const std::string& zone,
                                  int base_port);
std::vector<EngineEndpoint> worker_endpoints(EngineKind kind, const std::string& db,
                                             const std::string& zone, int num_nodes, int base_port);

}  // namespace dbm::engines
