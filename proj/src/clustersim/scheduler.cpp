#include "clustersim/scheduler.hpp"

#include <cstdio>

#include "common/error.hpp"
#include "common/fsutil.hpp"

namespace dbm::clustersim {

std::string_view to_string(JobPhase p) {
  switch (p) {
    case JobPhase::PrologRunning: return "PrologRunning";
    case JobPhase::Sleeping: return "Sleeping";
    case JobPhase::EpilogRunning: return "EpilogRunning";
    case JobPhase::Done: return "Done";
  }
  return "Done";
}

void NodeContext::step(std::string_view name, const std::function<void()>& fn) {
  log_.write(phase_, node_.hostname, name, "start");
  try {
    fn();
  } catch (...) {
    log_.write(phase_, node_.hostname, name, "fail");
    throw;
  }
  log_.write(phase_, node_.hostname, name, "end");
}

struct Scheduler::Job {
  Job(JobSpec s, JobInfo i, fs::path log_path)
      : spec(std::move(s)), info(std::move(i)), log(std::move(log_path)) {}

  JobSpec spec;
  JobInfo info;
  HookLog log;
  mutable std::mutex mu;
  mutable std::condition_variable cv;
};

Scheduler::Scheduler(Cluster& cluster, AdminCheck is_admin)
    : cluster_(cluster), is_admin_(std::move(is_admin)) {}

Scheduler::~Scheduler() { shutdown(); }

fs::path Scheduler::job_log_path(const std::string& job_id) const {
  return cluster_.config().cluster_root / "jobs" / (job_id + ".log");
}

std::string Scheduler::reserve_job_id() {
  auto dir = cluster_.config().cluster_root / "jobs";
  fsutil::FileLock lock(dir / "seq.lock");
  long next = 1;
  if (auto text = fsutil::try_read_file(dir / "seq")) next = std::stol(*text) + 1;
  fsutil::write_file_atomic(dir / "seq", std::to_string(next));
  char buf[32];
  std::snprintf(buf, sizeof buf, "job-%06ld", next);
  return buf;
}

JobInfo Scheduler::submit(JobSpec spec) {
  if (spec.queue != "db") {
    throw Error(Errc::InvalidQueue, "jobs must be submitted to the db queue, not '" +
                                        spec.queue + "'");
  }
  if (spec.num_nodes < 1) {
    throw Error(Errc::InvalidNodeCount,
                "num_nodes must be >= 1, got " + std::to_string(spec.num_nodes));
  }
  if (!spec.now) {
    throw Error(Errc::InvalidArgument, "database jobs are always submitted with now=true");
  }
  std::string job_id = spec.job_id ? *spec.job_id : reserve_job_id();
  auto nodes = cluster_.try_allocate(spec.num_nodes, job_id);
  if (!nodes) {
    int free = cluster_.free_nodes();
    throw Error(Errc::InsufficientResources,
                "insufficient resources: " + std::to_string(free) + " free, " +
                    std::to_string(spec.num_nodes) + " requested",
                {{"free", free}, {"requested", spec.num_nodes}});
  }
  JobInfo info;
  info.job_id = job_id;
  info.owner = spec.owner;
  info.nodes = std::move(*nodes);
  info.phase = JobPhase::PrologRunning;
  info.phase_history.push_back(JobPhase::PrologRunning);

  auto job = std::make_shared<Job>(std::move(spec), info, job_log_path(job_id));
  {
    std::lock_guard lk(mu_);
    jobs_[job_id] = job;
    threads_.emplace_back([this, job] { run_job(job); });
  }
  return info;
}

void Scheduler::set_phase(Job& job, JobPhase phase) {
  job.info.phase = phase;
  job.info.phase_history.push_back(phase);
  job.cv.notify_all();
}

bool Scheduler::run_node_hooks(Job& job, const NodeHook& hook, std::string_view phase) {
  if (!hook) return true;
  std::vector<std::string> errors(job.info.nodes.size());
  std::vector<std::thread> workers;
  for (size_t i = 0; i < job.info.nodes.size(); ++i) {
    workers.emplace_back([&, i] {
      NodeContext ctx(job.info.job_id, static_cast<int>(i), job.info.nodes[i], phase, job.log);
      try {
        hook(ctx);
      } catch (const std::exception& e) {
        errors[i] = job.info.nodes[i].hostname + ": " + e.what();
        if (errors[i].size() == job.info.nodes[i].hostname.size() + 2) errors[i] += "failed";
      } catch (...) {
        errors[i] = job.info.nodes[i].hostname + ": unknown failure";
      }
    });
  }
  for (auto& w : workers) w.join();
  bool ok = true;
  std::lock_guard lk(job.mu);
  for (auto& e : errors) {
    if (!e.empty()) {
      job.info.errors.push_back(std::string(phase) + " " + e);
      ok = false;
    }
  }
  return ok;
}

void Scheduler::run_job(std::shared_ptr<Job> job) {
  auto snapshot = [&] {
    std::lock_guard lk(job->mu);
    return job->info;
  };
  auto note_error = [&](const std::string& msg) {
    std::lock_guard lk(job->mu);
    job->info.errors.push_back(msg);
  };

  bool prolog_ok = run_node_hooks(*job, job->spec.prolog, "prolog");
  bool cancelled;
  {
    std::lock_guard lk(job->mu);
    job->info.prolog_ok = prolog_ok;
    cancelled = job->info.cancel_requested;
  }

  bool payload_ok = false;
  if (prolog_ok && !cancelled) {
    bool running_ok = true;
    if (job->spec.callbacks.on_running) {
      try {
        job->spec.callbacks.on_running(snapshot());
      } catch (const std::exception& e) {
        note_error(std::string("on_running: ") + e.what());
        running_ok = false;
      }
    }
    bool sleeping = false;
    if (running_ok) {
      std::lock_guard lk(job->mu);
      if (!job->info.cancel_requested) {
        set_phase(*job, JobPhase::Sleeping);
        sleeping = true;
      }
    }
    if (sleeping) {
      if (job->spec.payload.kind == PayloadKind::SleepUntilSignaled) {
        std::unique_lock lk(job->mu);
        job->cv.wait(lk, [&] { return job->info.stop_signaled || job->info.cancel_requested; });
        payload_ok = true;
      } else {
        try {
          if (job->spec.payload.task) job->spec.payload.task(snapshot());
          payload_ok = true;
        } catch (const std::exception& e) {
          note_error(std::string("payload: ") + e.what());
        }
      }
    }
    std::lock_guard lk(job->mu);
    job->info.payload_ok = payload_ok;
  }

  {
    std::lock_guard lk(job->mu);
    if (job->info.phase != JobPhase::EpilogRunning) set_phase(*job, JobPhase::EpilogRunning);
  }
  if (job->spec.callbacks.on_epilog_begin) {
    try {
      job->spec.callbacks.on_epilog_begin(snapshot());
    } catch (const std::exception& e) {
      note_error(std::string("on_epilog_begin: ") + e.what());
    }
  }
  bool epilog_ok = run_node_hooks(*job, job->spec.epilog, "epilog");
  {
    std::lock_guard lk(job->mu);
    job->info.epilog_ok = epilog_ok;
    if (!prolog_ok) {
      job->info.exit_code = 1;
    } else if (!job->info.cancel_requested && !payload_ok) {
      job->info.exit_code = 2;
    } else if (!epilog_ok) {
      job->info.exit_code = 3;
    } else if (job->info.cancel_requested && !job->info.stop_signaled) {
      job->info.exit_code = 130;
    }
  }
  cluster_.release(job->info.job_id);
  if (job->spec.callbacks.on_done) {
    try {
      job->spec.callbacks.on_done(snapshot());
    } catch (const std::exception& e) {
      note_error(std::string("on_done: ") + e.what());
    }
  }
  std::lock_guard lk(job->mu);
  set_phase(*job, JobPhase::Done);
}

std::shared_ptr<Scheduler::Job> Scheduler::get(const std::string& job_id) const {
  std::lock_guard lk(mu_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw Error(Errc::NotFound, "no such job: " + job_id);
  return it->second;
}

void Scheduler::signal_stop(const std::string& job_id) {
  auto job = get(job_id);
  std::lock_guard lk(job->mu);
  if (job->info.phase != JobPhase::Sleeping ||
      job->spec.payload.kind != PayloadKind::SleepUntilSignaled) {
    throw Error(Errc::WrongPhase, "job " + job_id + " is " +
                                      std::string(to_string(job->info.phase)) +
                                      ", not a sleeping placeholder",
                {{"phase", std::string(to_string(job->info.phase))}});
  }
  job->info.stop_signaled = true;
  set_phase(*job, JobPhase::EpilogRunning);
}

void Scheduler::cancel(const std::string& job_id, const std::string& requester) {
  auto job = get(job_id);
  std::lock_guard lk(job->mu);
  if (requester != job->info.owner && !(is_admin_ && is_admin_(requester))) {
    throw Error(Errc::PermissionDenied,
                "only the job owner or an administrator may cancel " + job_id);
  }
  job->info.cancel_requested = true;
  if (job->info.phase == JobPhase::Sleeping &&
      job->spec.payload.kind == PayloadKind::SleepUntilSignaled) {
    set_phase(*job, JobPhase::EpilogRunning);
  }
  job->cv.notify_all();
}

std::optional<JobInfo> Scheduler::find(const std::string& job_id) const {
  std::lock_guard lk(mu_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) return std::nullopt;
  std::lock_guard jl(it->second->mu);
  return it->second->info;
}

JobInfo Scheduler::wait_done(const std::string& job_id, std::chrono::milliseconds timeout) const {
  auto job = get(job_id);
  std::unique_lock lk(job->mu);
  job->cv.wait_for(lk, timeout, [&] { return job->info.phase == JobPhase::Done; });
  return job->info;
}

bool Scheduler::wait_phase(const std::string& job_id, JobPhase phase,
                           std::chrono::milliseconds timeout) const {
  auto job = get(job_id);
  std::unique_lock lk(job->mu);
  return job->cv.wait_for(lk, timeout, [&] {
    for (auto p : job->info.phase_history) {
      if (p == phase) return true;
    }
    return false;
  });
}

void Scheduler::shutdown() {
  std::vector<std::shared_ptr<Job>> live;
  {
    std::lock_guard lk(mu_);
    for (auto& [_, job] : jobs_) live.push_back(job);
  }
  for (auto& job : live) {
    std::lock_guard lk(job->mu);
    if (job->info.phase == JobPhase::Done) continue;
    job->info.cancel_requested = true;
    if (job->info.phase == JobPhase::Sleeping &&
        job->spec.payload.kind == PayloadKind::SleepUntilSignaled) {
      set_phase(*job, JobPhase::EpilogRunning);
    }
    job->cv.notify_all();
  }
  std::vector<std::thread> threads;
  {
    std::lock_guard lk(mu_);
    threads.swap(threads_);
  }
  for (auto& t : threads) {
    if (t.joinable()) t.join();
  }
}

}  // namespace dbm::clustersim
