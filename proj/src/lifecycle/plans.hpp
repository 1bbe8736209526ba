#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "clustersim/scheduler.hpp"
#include "dyndns/store.hpp"
#include "engines/client.hpp"
#include "engines/engine_run.hpp"
#include "migrate/copy.hpp"
#include "registry/registry.hpp"
#include "security/credentials.hpp"

namespace dbm::lifecycle {

namespace fs = std::filesystem;

/// Prolog steps in order; RotateAccessKey runs on the master node only.
inline constexpr const char* kStartSteps[] = {"RegisterDns", "CopyCentralToLocal",
                                              "StartServices", "RotateAccessKey", "MarkStarted"};
inline constexpr const char* kStopSteps[] = {"StopServices", "CopyLocalToCentral",
                                             "DeregisterDns", "MarkStopped"};

/// Everything a start or stop plan touches for one job.
struct PlanContext {
  registry::DatabaseDescriptor db;
  std::shared_ptr<engines::EngineRun> run;
  dyndns::RecordStore* dns = nullptr;
  security::CredentialStore* credentials = nullptr;
  engines::ClientConfig client;
  migrate::CopyMode copy_mode = migrate::CopyMode::multi();
  /// Crash-test hook: the master's prolog blocks forever after this step.
  std::optional<std::string> pause_after_step;
  /// Test hook run on each node right after its inbound copy.
  std::function<void(int index, const fs::path& local_db_dir)> after_copy;

  /// Anomalies noticed while stopping (dead daemons, forced kills).
  void note(const std::string& message);
  std::vector<std::string> notes() const;

 private:
  mutable std::mutex mu_;
  std::vector<std::string> notes_;
};

fs::path local_db_dir(const clustersim::SimNode& node, const std::string& db);
/// Record names: "<db>-<i>" for node i, plus "<db>" for the master.
std::vector<std::string> dns_names(const std::string& db, int index);

clustersim::NodeHook make_start_plan(std::shared_ptr<PlanContext> ctx);
clustersim::NodeHook make_stop_plan(std::shared_ptr<PlanContext> ctx);

}  // namespace dbm::lifecycle
