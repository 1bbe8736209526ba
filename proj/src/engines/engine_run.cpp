#include "engines/engine_run.hpp"

#include <algorithm>
#include <random>
#include <thread>

#include "common/error.hpp"
#include "engines/protocol.hpp"
#include "engines/storage.hpp"

namespace dbm::engines {
namespace {

std::string strip_dot(std::string zone) {
  if (!zone.empty() && zone.back() == '.') zone.pop_back();
  return zone;
}

std::string expand(std::string pattern, int index) {
  auto pos = pattern.find("{i}");
  if (pos != std::string::npos) pattern.replace(pos, 3, std::to_string(index));
  return pattern;
}

const ServiceSpec* find_spec(EngineKind kind, const std::string& name) {
  for (const auto& s : service_specs(kind)) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

}  // namespace

int service_port(int base_port, const ServiceSpec& spec) { return base_port + spec.port_offset; }

std::string master_fqdn(const std::string& db, const std::string& zone) {
  return db + "." + strip_dot(zone) + ".";
}

std::string node_fqdn(const std::string& db, int index, const std::string& zone) {
  return db + "-" + std::to_string(index) + "." + strip_dot(zone) + ".";
}

EngineEndpoint authority_endpoint(EngineKind kind, const std::string& db, const std::string& zone,
                                  int base_port) {
  const auto* spec = find_spec(kind, kind == EngineKind::ToyKv ? "coordinator" : "catalog");
  return {master_fqdn(db, zone), service_port(base_port, *spec), spec->role};
}

std::vector<EngineEndpoint> worker_endpoints(EngineKind kind, const std::string& db,
                                             const std::string& zone, int num_nodes,
                                             int base_port) {
  const auto* spec = find_spec(kind, kind == EngineKind::ToyKv ? "tablet" : "worker");
  std::vector<EngineEndpoint> out;
  for (int i = 0; i < num_nodes; ++i) {
    out.push_back({node_fqdn(db, i, zone), service_port(base_port, *spec), "worker"});
  }
  return out;
}

EngineRun::EngineRun(EngineRunConfig config)
    : config_(std::move(config)), had_services_(static_cast<size_t>(config_.num_nodes), false) {
  for (const auto& spec : service_specs(config_.kind)) {
    int count = spec.node_scope == NodeScope::MasterOnly ? 1 : config_.num_nodes;
    for (int i = 0; i < count; ++i) {
      Instance inst;
      inst.spec = &spec;
      inst.index = i;
      instances_.emplace(std::make_pair(spec.name, i), std::move(inst));
    }
  }
}

std::string EngineRun::master_fqdn() const {
  return dbm::engines::master_fqdn(config_.database, config_.zone);
}

std::string EngineRun::node_fqdn(int index) const {
  return dbm::engines::node_fqdn(config_.database, index, config_.zone);
}

std::vector<std::pair<const ServiceSpec*, int>> EngineRun::instances_for(int index) const {
  std::vector<std::pair<const ServiceSpec*, int>> out;
  for (const auto& spec : service_specs(config_.kind)) {
    if (spec.node_scope == NodeScope::MasterOnly && index != 0) continue;
    out.emplace_back(&spec, index);
  }
  return out;
}

EngineRun::Instance& EngineRun::at(const std::string& service, int index) {
  return instances_.at({service, index});
}

void EngineRun::start_instance(Instance& inst, const std::string& ip,
                               const fs::path& local_db_dir) {
  const auto& spec = *inst.spec;
  auto data = local_db_dir / expand(spec.data_dir, inst.index);
  auto run_dir = local_db_dir / "run";
  fs::create_directories(run_dir);

  std::string peer_service;
  if (spec.role == "worker") {
    peer_service = config_.kind == EngineKind::ToyKv ? "coordinator" : "catalog";
  } else if (spec.role == "coordinator") {
    peer_service = "zookeeper";
  }

  SpawnSpec s;
  s.service = spec.name;
  s.executable = config_.daemon_executable;
  s.log_file = run_dir / (spec.name + ".log");
  s.pid_file = run_dir / (spec.name + ".pid");
  s.args = {"--role",        spec.role,
            "--db",          config_.database,
            "--bind",        ip,
            "--port",        std::to_string(service_port(config_.base_port, spec)),
            "--data",        data.string(),
            "--secret-file", (local_db_dir / "secrets/shared_secret").string(),
            "--dns",         config_.dns.to_string()};
  if (spec.role == "coordinator" || spec.role == "catalog") {
    s.args.insert(s.args.end(),
                  {"--superuser-file", (local_db_dir / "secrets/superuser").string(),
                   "--users-file", (local_db_dir / users_dir(config_.kind) / "users.json").string()});
  }
  if (!peer_service.empty()) {
    const auto* peer = find_spec(config_.kind, peer_service);
    s.args.insert(s.args.end(), {"--peer", master_fqdn(), "--peer-port",
                                 std::to_string(service_port(config_.base_port, *peer))});
  }
  inst.process = DaemonProcess::spawn(s);
}

void EngineRun::start_node(int index, const std::string& ip, const fs::path& local_db_dir,
                           const StepRunner& step) {
  {
    std::lock_guard lk(mu_);
    had_services_.at(static_cast<size_t>(index)) = true;
  }
  std::mt19937 rng(std::random_device{}());
  auto mine = instances_for(index);
  for (size_t k = 0; k < mine.size(); ++k) {
    const auto* spec = mine[k].first;
    try {
      {
        std::unique_lock lk(mu_);
        for (const auto& dep : spec->depends_on) {
          int count = find_spec(config_.kind, dep)->node_scope == NodeScope::MasterOnly
                          ? 1
                          : config_.num_nodes;
          for (int i = 0; i < count; ++i) {
            auto& d = at(dep, i);
            bool settled = cv_.wait_for(lk, config_.dependency_timeout,
                                        [&] { return d.state != State::Pending; });
            if (!settled || d.state != State::Running) {
              throw Error(Errc::DependencyStartFailed,
                          spec->name + " cannot start: dependency " + dep + " is not running",
                          {{"service", dep}});
            }
          }
        }
      }
      if (config_.start_jitter.count() > 0) {
        std::uniform_int_distribution<long> jitter(0, config_.start_jitter.count());
        std::this_thread::sleep_for(std::chrono::milliseconds(jitter(rng)));
      }
      step("service:" + spec->name, [&] {
        auto& inst = [&]() -> Instance& {
          std::lock_guard lk(mu_);
          events_.push_back("start " + spec->name + " " + std::to_string(index));
          return at(spec->name, index);
        }();
        if (spec->impl == ServiceImpl::Daemon) start_instance(inst, ip, local_db_dir);
        std::lock_guard lk(mu_);
        inst.state = State::Running;
        events_.push_back("ready " + spec->name + " " + std::to_string(index));
        cv_.notify_all();
      });
    } catch (...) {
      std::lock_guard lk(mu_);
      at(spec->name, index).state = State::Failed;
      for (size_t j = k + 1; j < mine.size(); ++j) at(mine[j].first->name, index).state = State::Skipped;
      cv_.notify_all();
      throw;
    }
  }
}

void EngineRun::check_health(int index) {
  std::vector<const ServiceSpec*> daemons;
  for (const auto& [spec, i] : instances_for(index)) {
    if (spec->impl == ServiceImpl::Daemon) daemons.push_back(spec);
  }
  auto fqdn = node_fqdn(index);
  auto ip = dyndns::resolve_a(config_.dns, fqdn);
  if (!ip) throw Error(Errc::EngineUnreachable, fqdn + " does not resolve");
  for (const auto* spec : daemons) {
    auto sock = LineSocket::connect(*ip, service_port(config_.base_port, *spec));
    auto r = sock.request("PING");
    if (!r.ok) throw Error(Errc::EngineUnreachable, spec->name + " on " + fqdn + " unhealthy");
  }
}

void EngineRun::abandon_node(int index) {
  std::lock_guard lk(mu_);
  for (const auto& [spec, i] : instances_for(index)) {
    auto& inst = at(spec->name, i);
    if (inst.state == State::Pending) inst.state = State::Skipped;
  }
  cv_.notify_all();
}

void EngineRun::wait_all_started() {
  std::unique_lock lk(mu_);
  bool settled = cv_.wait_for(lk, config_.dependency_timeout, [&] {
    return std::none_of(instances_.begin(), instances_.end(),
                        [](const auto& kv) { return kv.second.state == State::Pending; });
  });
  for (const auto& [key, inst] : instances_) {
    if (!settled || inst.state != State::Running) {
      throw Error(Errc::DependencyStartFailed,
                  key.first + " on node " + std::to_string(key.second) + " is not running",
                  {{"service", key.first}});
    }
  }
}

std::vector<std::string> EngineRun::stop_node(int index, const StepRunner& step) {
  std::vector<std::string> anomalies;
  auto mine = instances_for(index);
  for (auto it = mine.rbegin(); it != mine.rend(); ++it) {
    const auto* spec = it->first;
    {
      std::unique_lock lk(mu_);
      auto& self = at(spec->name, index);
      if (self.state != State::Running) {
        if (self.state == State::Pending) self.state = State::Skipped;
        cv_.notify_all();
        continue;
      }
      // Wait for every dependent instance anywhere to be down.
      cv_.wait_for(lk, config_.dependency_timeout, [&] {
        for (const auto& [key, inst] : instances_) {
          const auto& deps = inst.spec->depends_on;
          if (std::find(deps.begin(), deps.end(), spec->name) == deps.end()) continue;
          if (inst.state == State::Running || inst.state == State::Pending) return false;
        }
        return true;
      });
    }
    step("service:" + spec->name, [&] {
      std::optional<DaemonProcess>* proc = nullptr;
      {
        std::lock_guard lk(mu_);
        events_.push_back("stop " + spec->name + " " + std::to_string(index));
        proc = &at(spec->name, index).process;
      }
      if (*proc) {
        auto outcome = (*proc)->stop(config_.stop_grace);
        if (outcome == StopOutcome::AlreadyDead) {
          anomalies.push_back(spec->name + " on node " + std::to_string(index) +
                              " was not running");
        } else if (outcome == StopOutcome::Killed) {
          anomalies.push_back(std::string(errc_name(Errc::StopTimeout)) + ": " + spec->name +
                              " on node " + std::to_string(index) + " was killed");
        }
      }
      std::lock_guard lk(mu_);
      at(spec->name, index).state = State::Stopped;
      cv_.notify_all();
    });
  }
  return anomalies;
}

bool EngineRun::node_had_services(int index) const {
  std::lock_guard lk(mu_);
  return had_services_.at(static_cast<size_t>(index));
}

std::vector<std::string> EngineRun::events() const {
  std::lock_guard lk(mu_);
  return events_;
}

EngineEndpoint EngineRun::authority_endpoint() const {
  return dbm::engines::authority_endpoint(config_.kind, config_.database, config_.zone,
                                          config_.base_port);
}

std::vector<EngineEndpoint> EngineRun::worker_endpoints() const {
  return dbm::engines::worker_endpoints(config_.kind, config_.database, config_.zone,
                                        config_.num_nodes, config_.base_port);
}

}  // namespace dbm::engines
