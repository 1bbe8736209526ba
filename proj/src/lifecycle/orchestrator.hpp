#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "clustersim/cluster.hpp"
#include "clustersim/scheduler.hpp"
#include "dyndns/server.hpp"
#include "dyndns/store.hpp"
#include "engines/client.hpp"
#include "lifecycle/plans.hpp"
#include "registry/registry.hpp"
#include "security/credentials.hpp"
#include "security/identity.hpp"

namespace dbm::lifecycle {

struct LifecycleOptions {
  fs::path registry_root;
  fs::path central_root;
  fs::path keys_root;
  fs::path identity_file;
  clustersim::ClusterConfig cluster;
  dyndns::ZoneConfig dns;
  int copy_workers = migrate::CopyMode::kDefaultWorkers;
  fs::path engine_daemon;
  int engine_base_port = 7100;
  std::string service_user = "dbservice";
  std::chrono::milliseconds stop_grace = std::chrono::seconds(5);
  std::chrono::milliseconds start_jitter{0};
  std::optional<std::string> pause_after_step;
  std::function<void(const std::string& db, int index, const fs::path& local_db_dir)> after_copy;
};

struct JobHandle {
  std::string database;
  std::string job_id;
  registry::StatusValue status = registry::StatusValue::Stopped;

  nlohmann::json to_json() const;
};

struct CheckpointInfo {
  std::string id;
  fs::path archive_path;
  std::string created_by;
  std::string created_at;
  std::uint64_t size_bytes = 0;
  /// False while the archive is still being written or if writing failed.
  bool complete = false;

  nlohmann::json to_json() const;
};

struct ForceStopReport {
  std::string database;
  std::optional<std::string> job_id;
  bool cancelled_live_job = false;
  int daemons_killed = 0;
  int dns_records_removed = 0;
  int nodes_released = 0;
  std::vector<std::string> salvaged;  // local dirs moved aside
  registry::StatusValue previous = registry::StatusValue::Stopped;

  nlohmann::json to_json() const;
};

/// The lifecycle service: creation, start, stop, checkpoint and restore on top
/// of the registry, scheduler, copy engine, DNS, credentials and engines. Also
/// owns the DNS server so engine daemons can resolve database names.
class Orchestrator {
 public:
  explicit Orchestrator(LifecycleOptions options);
  /// Stops every running database (epilogs run) before returning.
  ~Orchestrator();

  registry::DatabaseDescriptor db_create(engines::EngineKind engine, int num_nodes,
                                         const std::string& name, const std::string& group,
                                         const std::string& caller,
                                         const std::optional<std::string>& engine_version = {});
  JobHandle db_start(const std::string& name, const std::string& caller);
  JobHandle db_stop(const std::string& name, const std::string& caller);
  /// Returns the checkpoint id at once; the archive is written by a job.
  CheckpointInfo db_checkpoint(const std::string& name, const std::string& caller);
  void db_restore(const std::string& name, const std::string& checkpoint_id,
                  const std::string& caller);
  /// Admin recovery for orphaned state (e.g. after a crash of this service).
  ForceStopReport db_force_stop(const std::string& name, const std::string& caller);
  void cancel_job(const std::string& job_id, const std::string& caller);

  /// Polls until the status is Stopped or Started.
  registry::DatabaseStatus wait_settled(
      const std::string& name, std::chrono::milliseconds timeout = std::chrono::seconds(120)) const;

  std::vector<registry::DatabaseSummary> list(const std::string& caller) const;
  nlohmann::json view_info(const std::string& name, const std::string& caller) const;
  std::vector<CheckpointInfo> list_checkpoints(const std::string& name,
                                               const std::string& caller) const;
  std::string locate_access_key(const std::string& name, const std::string& caller) const;
  security::RevocationPlan revoke_user(const std::string& name, const std::string& user,
                                       const std::string& admin);
  std::vector<security::RevocationPlan> revocations(const std::string& name,
                                                    const std::string& caller) const;
  nlohmann::json cluster_info() const;

  /// Client settings for talking to a started database by DNS name.
  engines::ClientConfig client_config(const std::string& name) const;
  dyndns::Endpoint dns_endpoint() const;
  std::uint16_t dns_http_port() const { return dns_server_->http_port(); }
  /// Anomalies from the most recent job of a database.
  std::vector<std::string> last_notes(const std::string& name) const;
  std::optional<std::string> last_error(const std::string& name) const;

  registry::Registry& registry() { return registry_; }
  clustersim::Cluster& cluster() { return cluster_; }
  clustersim::Scheduler& scheduler() { return *scheduler_; }
  dyndns::RecordStore& dns() { return dns_store_; }
  security::IdentityTable& identities() { return identities_; }
  security::CredentialStore& credentials() { return credentials_; }
  const LifecycleOptions& options() const { return options_; }

 private:
  security::Identity require_member(const registry::DatabaseDescriptor& d,
                                    const std::string& caller) const;
  security::Identity require_admin(const std::string& caller) const;
  std::shared_ptr<PlanContext> make_context(const registry::DatabaseDescriptor& d,
                                            std::shared_ptr<engines::EngineRun> run);
  void finish_job(const std::string& name, const clustersim::JobInfo& info,
                  const std::shared_ptr<PlanContext>& ctx);
  fs::path checkpoints_dir(const registry::DatabaseDescriptor& d) const;
  void write_checkpoint(const registry::DatabaseDescriptor& d, const CheckpointInfo& info);

  LifecycleOptions options_;
  security::IdentityTable identities_;
  registry::Registry registry_;
  clustersim::Cluster cluster_;
  dyndns::RecordStore dns_store_;
  std::unique_ptr<dyndns::DnsServer> dns_server_;
  security::CredentialStore credentials_;
  std::unique_ptr<clustersim::Scheduler> scheduler_;

  std::mutex create_mu_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<PlanContext>> contexts_;  // by database
  std::map<std::string, std::string> last_error_;
};

}  // namespace dbm::lifecycle
