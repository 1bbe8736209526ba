#include "lifecycle/orchestrator.hpp"

#include <algorithm>
#include <cctype>
#include <thread>

#include "common/error.hpp"
#include "common/fsutil.hpp"
#include "common/timeutil.hpp"
#include "engines/storage.hpp"
#include "engines/supervisor.hpp"
#include "lifecycle/archive.hpp"

namespace dbm::lifecycle {

using registry::StatusValue;
using namespace std::chrono_literals;

namespace {

const std::set<std::string> kArchiveExcludes{"checkpoints", "secrets", "secrets.acl",
                                             "status.json"};

bool valid_checkpoint_id(const std::string& id) {
  return id.rfind("checkpoint-", 0) == 0 && id.find('/') == std::string::npos &&
         id.find("..") == std::string::npos;
}

}  // namespace

nlohmann::json JobHandle::to_json() const {
  return {{"database", database},
          {"job_id", job_id},
          {"status", std::string(registry::to_string(status))}};
}

nlohmann::json CheckpointInfo::to_json() const {
  return {{"id", id},
          {"archive", archive_path.filename().string()},
          {"created_by", created_by},
          {"created_at", created_at},
          {"size_bytes", size_bytes},
          {"complete", complete}};
}

nlohmann::json ForceStopReport::to_json() const {
  return {{"database", database},
          {"job_id", job_id ? nlohmann::json(*job_id) : nlohmann::json(nullptr)},
          {"cancelled_live_job", cancelled_live_job},
          {"daemons_killed", daemons_killed},
          {"dns_records_removed", dns_records_removed},
          {"nodes_released", nodes_released},
          {"salvaged", salvaged},
          {"previous_status", std::string(registry::to_string(previous))}};
}

Orchestrator::Orchestrator(LifecycleOptions options)
    : options_(std::move(options)),
      identities_(options_.identity_file, options_.service_user),
      registry_(options_.registry_root),
      cluster_(options_.cluster),
      dns_store_(options_.dns),
      dns_server_(std::make_unique<dyndns::DnsServer>(dns_store_, options_.dns)),
      credentials_(options_.keys_root, identities_),
      scheduler_(std::make_unique<clustersim::Scheduler>(
          cluster_, [this](const std::string& user) { return identities_.is_admin(user); })) {
  fs::create_directories(options_.central_root);
}

Orchestrator::~Orchestrator() {
  scheduler_->shutdown();
  dns_server_->stop();
}

security::Identity Orchestrator::require_member(const registry::DatabaseDescriptor& d,
                                                const std::string& caller) const {
  auto id = identities_.require(caller);
  if (!id.in_group(d.security_group)) {
    throw Error(Errc::PermissionDenied,
                caller + " is not in security group " + d.security_group + " of " + d.name,
                {{"group", d.security_group}});
  }
  return id;
}

security::Identity Orchestrator::require_admin(const std::string& caller) const {
  auto id = identities_.require(caller);
  if (!id.admin) throw Error(Errc::PermissionDenied, caller + " is not an administrator");
  return id;
}

dyndns::Endpoint Orchestrator::dns_endpoint() const {
  dyndns::Endpoint ep;
  ep.host = options_.dns.bind == "0.0.0.0" ? "127.0.0.1" : options_.dns.bind;
  ep.port = dns_server_->udp_port();
  return ep;
}

engines::ClientConfig Orchestrator::client_config(const std::string& name) const {
  auto d = registry_.get_descriptor(name);
  engines::ClientConfig c;
  c.database = d.name;
  c.kind = d.engine;
  c.num_nodes = d.num_nodes;
  c.dns = dns_endpoint();
  c.zone = options_.dns.zone;
  c.base_port = options_.engine_base_port;
  return c;
}

registry::DatabaseDescriptor Orchestrator::db_create(engines::EngineKind engine, int num_nodes,
                                                     const std::string& name,
                                                     const std::string& group,
                                                     const std::string& caller,
                                                     const std::optional<std::string>& version) {
  require_admin(caller);
  if (!registry::is_valid_name(name)) {
    throw Error(Errc::InvalidName,
                "invalid database name '" + name + "' (lowercase letter, then [a-z0-9_-], max 63)");
  }
  if (num_nodes < 1 || num_nodes > cluster_.total()) {
    throw Error(Errc::InvalidNodeCount, "num_nodes must be between 1 and " +
                                            std::to_string(cluster_.total()) + ", got " +
                                            std::to_string(num_nodes));
  }
  if (group.empty()) throw Error(Errc::InvalidArgument, "security group must not be empty");

  std::lock_guard lk(create_mu_);
  fsutil::FileLock lock(options_.registry_root / "create.lock");
  if (registry_.contains(name)) {
    throw Error(Errc::DuplicateName, "database already exists: " + name);
  }
  registry::DatabaseDescriptor d;
  d.name = name;
  d.engine = engine;
  d.engine_version = version.value_or(std::string(engines::default_version(engine)));
  d.num_nodes = num_nodes;
  d.security_group = group;
  d.central_path = options_.central_root / name;
  d.created_at = timeutil::Clock::now();

  try {
    engines::init_storage(engine, d.central_path, num_nodes);
  } catch (const Error& e) {
    throw Error(Errc::EngineInitFailed, "cannot initialize storage: " + std::string(e.what()),
                {{"cause", std::string(errc_name(e.code()))}});
  }
  try {
    engines::write_engine_config(engine, d.central_path, name, num_nodes, options_.dns.zone);
    credentials_.provision_secrets(name, d.central_path);
    fs::create_directories(checkpoints_dir(d));
    registry_.register_database(d);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(d.central_path, ec);
    throw;
  }
  return d;
}

std::shared_ptr<PlanContext> Orchestrator::make_context(const registry::DatabaseDescriptor& d,
                                                        std::shared_ptr<engines::EngineRun> run) {
  auto ctx = std::make_shared<PlanContext>();
  ctx->db = d;
  ctx->run = std::move(run);
  ctx->dns = &dns_store_;
  ctx->credentials = &credentials_;
  ctx->client = client_config(d.name);
  ctx->copy_mode = options_.copy_workers <= 1 ? migrate::CopyMode::single()
                                              : migrate::CopyMode::multi(options_.copy_workers);
  ctx->pause_after_step = options_.pause_after_step;
  if (options_.after_copy) {
    auto hook = options_.after_copy;
    auto name = d.name;
    ctx->after_copy = [hook, name](int index, const fs::path& local) { hook(name, index, local); };
  }
  std::lock_guard lk(mu_);
  contexts_[d.name] = ctx;
  last_error_.erase(d.name);
  return ctx;
}

void Orchestrator::finish_job(const std::string& name, const clustersim::JobInfo& info,
                              const std::shared_ptr<PlanContext>& ctx) {
  (void)ctx;
  try {
    auto st = registry_.get_status(name);
    if (st.value == StatusValue::Starting) {
      registry_.transition(name, StatusValue::Starting, StatusValue::Stopping);
      st.value = StatusValue::Stopping;
    }
    if (st.value == StatusValue::Stopping || st.value == StatusValue::Checkpointing) {
      registry_.transition(name, st.value, StatusValue::Stopped);
    }
  } catch (const Error&) {
    // A concurrent force-stop already settled the status.
  }
  if (!info.errors.empty() || info.exit_code != 0) {
    std::string msg = info.job_id + " exit " + std::to_string(info.exit_code);
    for (const auto& e : info.errors) msg += "; " + e;
    std::lock_guard lk(mu_);
    last_error_[name] = msg;
  }
}

JobHandle Orchestrator::db_start(const std::string& name, const std::string& caller) {
  identities_.require(caller);
  auto d = registry_.get_descriptor(name);
  require_member(d, caller);

  auto job_id = scheduler_->reserve_job_id();
  registry_.transition(name, StatusValue::Stopped, StatusValue::Starting, {job_id, caller});

  engines::EngineRunConfig rc;
  rc.database = d.name;
  rc.kind = d.engine;
  rc.num_nodes = d.num_nodes;
  rc.daemon_executable = options_.engine_daemon;
  rc.dns = dns_endpoint();
  rc.zone = options_.dns.zone;
  rc.base_port = options_.engine_base_port;
  rc.stop_grace = options_.stop_grace;
  rc.start_jitter = options_.start_jitter;
  auto ctx = make_context(d, std::make_shared<engines::EngineRun>(rc));

  clustersim::JobSpec spec;
  spec.num_nodes = d.num_nodes;
  spec.owner = caller;
  spec.job_id = job_id;
  spec.prolog = make_start_plan(ctx);
  spec.epilog = make_stop_plan(ctx);
  spec.callbacks.on_running = [this, name](const clustersim::JobInfo& info) {
    registry_.transition(name, StatusValue::Starting, StatusValue::Started, {info.job_id, {}});
  };
  spec.callbacks.on_epilog_begin = [this, name](const clustersim::JobInfo&) {
    auto st = registry_.get_status(name);
    if (st.value != StatusValue::Starting && st.value != StatusValue::Started) return;
    try {
      registry_.transition(name, st.value, StatusValue::Stopping);
    } catch (const Error& e) {
      if (e.code() != Errc::WrongCurrentStatus) throw;  // db_stop got there first
    }
  };
  spec.callbacks.on_done = [this, name, ctx](const clustersim::JobInfo& info) {
    finish_job(name, info, ctx);
  };

  try {
    scheduler_->submit(std::move(spec));
  } catch (...) {
    registry_.transition(name, StatusValue::Starting, StatusValue::Stopping);
    registry_.transition(name, StatusValue::Stopping, StatusValue::Stopped);
    throw;
  }
  return {name, job_id, StatusValue::Starting};
}

JobHandle Orchestrator::db_stop(const std::string& name, const std::string& caller) {
  identities_.require(caller);
  auto d = registry_.get_descriptor(name);
  require_member(d, caller);
  auto st = registry_.get_status(name);
  if (st.value != StatusValue::Started) {
    throw Error(Errc::WrongCurrentStatus,
                "database " + name + " is " + std::string(registry::to_string(st.value)) +
                    ", expected started",
                {{"actual", std::string(registry::to_string(st.value))}, {"expected", "started"}});
  }
  auto job = st.job_id ? scheduler_->find(*st.job_id) : std::nullopt;
  if (!job || job->phase == clustersim::JobPhase::Done) {
    throw Error(Errc::Orphaned,
                "database " + name + " is marked started but its job " +
                    st.job_id.value_or("(none)") +
                    " is not running here; an administrator can recover it with db_stop --force",
                {{"job_id", st.job_id ? nlohmann::json(*st.job_id) : nlohmann::json(nullptr)}});
  }
  registry_.transition(name, StatusValue::Started, StatusValue::Stopping);

  // Started is recorded just before the placeholder begins sleeping.
  auto deadline = std::chrono::steady_clock::now() + 10s;
  while (std::chrono::steady_clock::now() < deadline) {
    auto cur = scheduler_->find(job->job_id);
    if (!cur || cur->phase != clustersim::JobPhase::PrologRunning) break;
    std::this_thread::sleep_for(2ms);
  }
  try {
    scheduler_->signal_stop(job->job_id);
  } catch (const Error& e) {
    if (e.code() != Errc::WrongPhase) throw;  // already heading to the epilog
  }
  return {name, job->job_id, StatusValue::Stopping};
}

fs::path Orchestrator::checkpoints_dir(const registry::DatabaseDescriptor& d) const {
  return d.central_path / "checkpoints";
}

void Orchestrator::write_checkpoint(const registry::DatabaseDescriptor& d,
                                    const CheckpointInfo& info) {
  auto size = write_archive(d.central_path, info.archive_path, kArchiveExcludes);
  auto meta = info;
  meta.size_bytes = size;
  meta.complete = true;
  auto j = meta.to_json();
  fsutil::write_json_atomic(checkpoints_dir(d) / (info.id + ".json"), j);
}

CheckpointInfo Orchestrator::db_checkpoint(const std::string& name, const std::string& caller) {
  identities_.require(caller);
  auto d = registry_.get_descriptor(name);
  require_member(d, caller);

  auto job_id = scheduler_->reserve_job_id();
  registry_.transition(name, StatusValue::Stopped, StatusValue::Checkpointing, {job_id, caller});

  CheckpointInfo info;
  auto now = timeutil::Clock::now();
  fs::create_directories(checkpoints_dir(d));
  for (;;) {
    info.id = "checkpoint-" + timeutil::to_compact(now);
    info.archive_path = checkpoints_dir(d) / (info.id + ".tar");
    if (!fs::exists(info.archive_path)) break;
    now += 1ms;
  }
  info.created_by = caller;
  info.created_at = timeutil::to_rfc3339(now);

  {
    std::lock_guard lk(mu_);
    contexts_.erase(name);
    last_error_.erase(name);
  }
  clustersim::JobSpec spec;
  spec.num_nodes = 1;
  spec.owner = caller;
  spec.job_id = job_id;
  spec.prolog = [](clustersim::NodeContext& node) { node.step("PrepareCheckpoint", [] {}); };
  spec.epilog = [info](clustersim::NodeContext& node) {
    node.step("CleanupCheckpoint", [&] {
      auto partial = info.archive_path;
      partial += ".partial";
      std::error_code ec;
      fs::remove(partial, ec);
    });
  };
  spec.payload.kind = clustersim::PayloadKind::Task;
  spec.payload.task = [this, d, info](const clustersim::JobInfo&) { write_checkpoint(d, info); };
  spec.callbacks.on_done = [this, name](const clustersim::JobInfo& job) {
    finish_job(name, job, nullptr);
  };
  try {
    scheduler_->submit(std::move(spec));
  } catch (...) {
    registry_.transition(name, StatusValue::Checkpointing, StatusValue::Stopped);
    throw;
  }
  return info;
}

std::vector<CheckpointInfo> Orchestrator::list_checkpoints(const std::string& name,
                                                           const std::string& caller) const {
  identities_.require(caller);
  auto d = registry_.get_descriptor(name);
  require_member(d, caller);
  std::vector<CheckpointInfo> out;
  std::error_code ec;
  for (const auto& de : fs::directory_iterator(checkpoints_dir(d), ec)) {
    if (de.path().extension() != ".tar") continue;
    CheckpointInfo info;
    info.id = de.path().stem().string();
    info.archive_path = de.path();
    if (auto meta = fsutil::try_read_file(checkpoints_dir(d) / (info.id + ".json"))) {
      auto j = nlohmann::json::parse(*meta);
      info.created_by = j.value("created_by", "");
      info.created_at = j.value("created_at", "");
      info.size_bytes = j.value("size_bytes", std::uint64_t{0});
      info.complete = j.value("complete", false);
    }
    out.push_back(std::move(info));
  }
  std::sort(out.begin(), out.end(),
            [](const CheckpointInfo& a, const CheckpointInfo& b) { return a.id < b.id; });
  return out;
}

void Orchestrator::db_restore(const std::string& name, const std::string& checkpoint_id,
                              const std::string& caller) {
  require_admin(caller);
  auto d = registry_.get_descriptor(name);
  registry_.with_status_locked(name, StatusValue::Stopped, [&] {
    auto archive = checkpoints_dir(d) / (checkpoint_id + ".tar");
    if (!valid_checkpoint_id(checkpoint_id) || !fs::exists(archive)) {
      throw Error(Errc::CheckpointNotFound,
                  "no checkpoint '" + checkpoint_id + "' for database " + name);
    }
    auto staging = d.central_path / ".restore-staging";
    auto old = d.central_path / ".restore-old";
    std::error_code ec;
    fs::remove_all(staging, ec);
    fs::remove_all(old, ec);
    try {
      extract_archive(archive, staging);
    } catch (...) {
      fs::remove_all(staging, ec);
      throw;
    }
    fs::create_directories(old);
    for (const auto& sub : engines::data_subtrees(d.engine)) {
      auto live = d.central_path / sub;
      if (fs::exists(live)) fs::rename(live, old / sub);
      if (fs::exists(staging / sub)) fs::rename(staging / sub, live);
    }
    fs::remove_all(old, ec);
    fs::remove_all(staging, ec);
  });
}

ForceStopReport Orchestrator::db_force_stop(const std::string& name, const std::string& caller) {
  require_admin(caller);
  auto d = registry_.get_descriptor(name);
  auto st = registry_.get_status(name);
  ForceStopReport report;
  report.database = name;
  report.previous = st.value;
  report.job_id = st.job_id;

  if (st.job_id) {
    auto job = scheduler_->find(*st.job_id);
    if (job && job->phase != clustersim::JobPhase::Done) {
      scheduler_->cancel(*st.job_id, caller);
      scheduler_->wait_done(*st.job_id);
      report.cancelled_live_job = true;
    }
  }

  // Leftovers of a job this process never knew about (or whose epilog failed).
  auto salvage_root = options_.cluster.cluster_root / "salvage" /
                      (st.job_id.value_or("unknown") + "-" +
                       timeutil::to_compact(timeutil::Clock::now()));
  for (const auto& node : cluster_.nodes()) {
    auto local = local_db_dir(node, name);
    std::error_code ec;
    if (!fs::exists(local, ec)) continue;
    for (const auto& de : fs::directory_iterator(local / "run", ec)) {
      if (de.path().extension() == ".pid" && engines::terminate_pid_file(de.path())) {
        ++report.daemons_killed;
      }
    }
    auto salvage = salvage_root / node.hostname;
    fs::create_directories(salvage, ec);
    fs::rename(local, salvage / name, ec);
    if (!ec) report.salvaged.push_back((salvage / name).string());
  }
  for (int i = 0; i < d.num_nodes; ++i) {
    for (const auto& rec : dns_names(name, i)) {
      if (dns_store_.remove(rec)) ++report.dns_records_removed;
    }
  }
  if (st.job_id && !report.cancelled_live_job) {
    report.nodes_released = cluster_.release(*st.job_id);
  }

  // Undo a half-finished copy-back swap.
  for (int i = 0; i < d.num_nodes; ++i) {
    for (const auto& rel : engines::node_outbound_paths(d.engine, i)) {
      auto live = d.central_path / rel;
      auto old = live;
      old += ".old";
      auto incoming = live;
      incoming += ".incoming";
      std::error_code ec;
      if (!fs::exists(live) && fs::exists(old)) fs::rename(old, live, ec);
      fs::remove_all(old, ec);
      fs::remove_all(incoming, ec);
    }
  }
  std::error_code ec;
  for (const auto& de : fs::directory_iterator(checkpoints_dir(d), ec)) {
    if (de.path().extension() == ".partial") fs::remove(de.path(), ec);
  }

  auto cur = registry_.get_status(name).value;
  if (cur == StatusValue::Starting || cur == StatusValue::Started) {
    registry_.transition(name, cur, StatusValue::Stopping);
    cur = StatusValue::Stopping;
  }
  if (cur == StatusValue::Stopping || cur == StatusValue::Checkpointing) {
    registry_.transition(name, cur, StatusValue::Stopped);
  }
  return report;
}

void Orchestrator::cancel_job(const std::string& job_id, const std::string& caller) {
  identities_.require(caller);
  scheduler_->cancel(job_id, caller);
}

registry::DatabaseStatus Orchestrator::wait_settled(const std::string& name,
                                                    std::chrono::milliseconds timeout) const {
  auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    auto st = registry_.get_status(name);
    if (!registry::is_transient(st.value) || std::chrono::steady_clock::now() >= deadline) {
      return st;
    }
    std::this_thread::sleep_for(10ms);
  }
}

std::vector<registry::DatabaseSummary> Orchestrator::list(const std::string& caller) const {
  auto id = identities_.require(caller);
  return registry_.list_databases(id.groups);
}

nlohmann::json Orchestrator::view_info(const std::string& name, const std::string& caller) const {
  identities_.require(caller);
  auto d = registry_.get_descriptor(name);
  require_member(d, caller);
  auto st = registry_.get_status(name);

  nlohmann::json history = nlohmann::json::array();
  for (const auto& h : registry_.history(name)) {
    history.push_back({{"from", std::string(registry::to_string(h.from))},
                       {"to", std::string(registry::to_string(h.to))},
                       {"at", timeutil::to_rfc3339(h.at)},
                       {"job_id", h.job_id ? nlohmann::json(*h.job_id) : nlohmann::json(nullptr)}});
  }
  nlohmann::json checkpoints = nlohmann::json::array();
  for (const auto& c : list_checkpoints(name, caller)) checkpoints.push_back(c.to_json());
  nlohmann::json dns = nlohmann::json::array();
  for (const auto& r : dns_store_.records()) {
    bool mine = r.name == name;
    if (!mine && r.name.rfind(name + "-", 0) == 0) {
      auto rest = r.name.substr(name.size() + 1);
      mine = !rest.empty() && std::all_of(rest.begin(), rest.end(), ::isdigit);
    }
    if (mine) dns.push_back(r.to_json());
  }
  nlohmann::json actions = nlohmann::json::array();
  for (auto a : registry::permitted_actions(st.value)) actions.push_back(registry::to_string(a));
  nlohmann::json job = nullptr;
  if (st.job_id) {
    if (auto info = scheduler_->find(*st.job_id)) {
      nlohmann::json nodes = nlohmann::json::array();
      for (const auto& n : info->nodes) nodes.push_back({{"hostname", n.hostname}, {"ip", n.ip}});
      job = {{"job_id", info->job_id},
             {"phase", std::string(clustersim::to_string(info->phase))},
             {"owner", info->owner},
             {"nodes", nodes}};
    }
  }
  nlohmann::json out{{"descriptor", d.to_json()},
                     {"type", d.type_string()},
                     {"status", st.to_json()},
                     {"actions", actions},
                     {"history", history},
                     {"checkpoints", checkpoints},
                     {"dns", dns},
                     {"job", job},
                     {"notes", last_notes(name)}};
  if (auto err = last_error(name)) out["last_error"] = *err;
  return out;
}

std::string Orchestrator::locate_access_key(const std::string& name,
                                            const std::string& caller) const {
  identities_.require(caller);
  auto d = registry_.get_descriptor(name);
  return credentials_.locate_access_key(name, d.security_group, caller);
}

security::RevocationPlan Orchestrator::revoke_user(const std::string& name,
                                                   const std::string& user,
                                                   const std::string& admin) {
  require_admin(admin);
  auto d = registry_.get_descriptor(name);
  return credentials_.revoke_user(name, d.security_group, user, admin);
}

std::vector<security::RevocationPlan> Orchestrator::revocations(const std::string& name,
                                                                const std::string& caller) const {
  auto id = identities_.require(caller);
  auto d = registry_.get_descriptor(name);
  if (!id.admin) require_member(d, caller);
  return credentials_.revocations(name);
}

nlohmann::json Orchestrator::cluster_info() const {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : cluster_.nodes()) {
    nodes.push_back({{"node_id", n.node_id},
                     {"hostname", n.hostname},
                     {"ip", n.ip},
                     {"job_id", n.job_id ? nlohmann::json(*n.job_id) : nlohmann::json(nullptr)}});
  }
  return {{"total", cluster_.total()}, {"free", cluster_.free_nodes()}, {"nodes", nodes}};
}

std::vector<std::string> Orchestrator::last_notes(const std::string& name) const {
  std::lock_guard lk(mu_);
  auto it = contexts_.find(name);
  return it == contexts_.end() || !it->second ? std::vector<std::string>{} : it->second->notes();
}

std::optional<std::string> Orchestrator::last_error(const std::string& name) const {
  std::lock_guard lk(mu_);
  auto it = last_error_.find(name);
  if (it == last_error_.end()) return std::nullopt;
  return it->second;
}

}  // namespace dbm::lifecycle
