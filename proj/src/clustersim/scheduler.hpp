#pragma once

#include <chrono>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "clustersim/cluster.hpp"
#include "clustersim/hook_log.hpp"

namespace dbm::clustersim {

enum class JobPhase { PrologRunning, Sleeping, EpilogRunning, Done };

std::string_view to_string(JobPhase p);

/// Per-node view handed to prolog and epilog hooks.
class NodeContext {
 public:
  NodeContext(std::string job_id, int index, SimNode node, std::string_view phase, HookLog& log)
      : job_id_(std::move(job_id)), index_(index), node_(std::move(node)), phase_(phase),
        log_(log) {}

  const std::string& job_id() const { return job_id_; }
  /// Position within the job's allocation; 0 is the master node.
  int index() const { return index_; }
  bool is_master() const { return index_ == 0; }
  const SimNode& node() const { return node_; }

  /// Runs `fn` bracketed by start/end (or fail) lines in the job log.
  void step(std::string_view name, const std::function<void()>& fn);

 private:
  std::string job_id_;
  int index_;
  SimNode node_;
  std::string_view phase_;
  HookLog& log_;
};

using NodeHook = std::function<void(NodeContext&)>;

struct JobInfo {
  std::string job_id;
  std::string owner;
  std::vector<SimNode> nodes;
  JobPhase phase = JobPhase::PrologRunning;
  bool cancel_requested = false;
  bool stop_signaled = false;
  bool prolog_ok = false;
  bool payload_ok = false;
  bool epilog_ok = false;
  /// 0 clean; 1 prolog failure; 2 payload failure; 3 epilog failure; 130 cancelled.
  int exit_code = 0;
  std::vector<JobPhase> phase_history;
  std::vector<std::string> errors;
};

enum class PayloadKind { SleepUntilSignaled, Task };

struct Payload {
  PayloadKind kind = PayloadKind::SleepUntilSignaled;
  /// For Task payloads; runs once on the job thread. Cancellation is masked.
  std::function<void(const JobInfo&)> task;
};

struct JobCallbacks {
  /// All prologs succeeded and no cancellation: the job is about to sleep.
  std::function<void(const JobInfo&)> on_running;
  /// Epilog is about to run on every node.
  std::function<void(const JobInfo&)> on_epilog_begin;
  /// Epilogs finished and nodes were released.
  std::function<void(const JobInfo&)> on_done;
};

struct JobSpec {
  std::string queue = "db";
  int num_nodes = 1;
  bool now = true;
  std::string owner;
  NodeHook prolog;
  NodeHook epilog;
  Payload payload;
  JobCallbacks callbacks;
  /// Pre-reserved id (see Scheduler::reserve_job_id); assigned when empty.
  std::optional<std::string> job_id;
};

/// Grid-Engine-like scheduler for the "db" queue. Submission is immediate
/// ("now"): it either claims nodes and launches prologs or fails at once.
///
/// Phases run Prolog -> Sleeping -> Epilog -> Done. Cancellation is checked
/// only between phases, so a running prolog or epilog is never cut short. A
/// job whose prolog failed or was cancelled goes straight to the epilog.
class Scheduler {
 public:
  using AdminCheck = std::function<bool(const std::string& user)>;

  Scheduler(Cluster& cluster, AdminCheck is_admin);
  ~Scheduler();
  Scheduler(const Scheduler&) = delete;
  Scheduler& operator=(const Scheduler&) = delete;

  std::string reserve_job_id();

  /// Throws InvalidQueue, InvalidNodeCount, InsufficientResources(free, requested).
  JobInfo submit(JobSpec spec);
  /// Wakes the placeholder of a Sleeping job. Throws NotFound, WrongPhase.
  void signal_stop(const std::string& job_id);
  /// Owner or admin only. Throws PermissionDenied, NotFound.
  void cancel(const std::string& job_id, const std::string& requester);

  int free_nodes() const { return cluster_.free_nodes(); }
  std::optional<JobInfo> find(const std::string& job_id) const;
  /// Throws NotFound; returns the last snapshot if the timeout expires.
  JobInfo wait_done(const std::string& job_id,
                    std::chrono::milliseconds timeout = std::chrono::seconds(120)) const;
  bool wait_phase(const std::string& job_id, JobPhase phase,
                  std::chrono::milliseconds timeout = std::chrono::seconds(60)) const;

  /// Cancels every live job and waits for all of them to reach Done.
  void shutdown();

  fs::path job_log_path(const std::string& job_id) const;
  Cluster& cluster() { return cluster_; }

 private:
  struct Job;
  void run_job(std::shared_ptr<Job> job);
  bool run_node_hooks(Job& job, const NodeHook& hook, std::string_view phase);
  void set_phase(Job& job, JobPhase phase);
  std::shared_ptr<Job> get(const std::string& job_id) const;

  Cluster& cluster_;
  AdminCheck is_admin_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  std::vector<std::thread> threads_;
};

}  // namespace dbm::clustersim
