#include "registry/registry.hpp"

#include <algorithm>
#include <regex>
#include <sstream>

#include "common/error.hpp"
#include "common/fsutil.hpp"

namespace dbm::registry {

std::string DatabaseDescriptor::type_string() const {
  return std::string(engines::to_string(engine)) + " " + engine_version;
}

nlohmann::json DatabaseDescriptor::to_json() const {
  return {{"name", name},
          {"engine", std::string(engines::to_string(engine))},
          {"engine_version", engine_version},
          {"num_nodes", num_nodes},
          {"security_group", security_group},
          {"central_path", central_path.string()},
          {"created_at", timeutil::to_rfc3339(created_at)}};
}

DatabaseDescriptor DatabaseDescriptor::from_json(const nlohmann::json& j) {
  DatabaseDescriptor d;
  d.name = j.at("name").get<std::string>();
  d.engine = engines::engine_from_string(j.at("engine").get<std::string>());
  d.engine_version = j.at("engine_version").get<std::string>();
  d.num_nodes = j.at("num_nodes").get<int>();
  d.security_group = j.at("security_group").get<std::string>();
  d.central_path = j.at("central_path").get<std::string>();
  d.created_at = timeutil::parse_rfc3339(j.at("created_at").get<std::string>());
  return d;
}

nlohmann::json DatabaseSummary::to_json() const {
  nlohmann::json actions_json = nlohmann::json::array();
  for (auto a : actions) actions_json.push_back(std::string(to_string(a)));
  return {{"name", name}, {"type", type}, {"status", std::string(to_string(status))},
          {"actions", actions_json}};
}

bool is_valid_name(std::string_view name) {
  static const std::regex re("[a-z][a-z0-9_-]{0,62}");
  return std::regex_match(name.begin(), name.end(), re);
}

Registry::Registry(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_ / "history");
  fs::create_directories(root_ / "locks");
  if (!fs::exists(root_ / "index.json")) {
    fsutil::FileLock lock(root_ / "index.lock");
    if (!fs::exists(root_ / "index.json")) {
      fsutil::write_json_atomic(root_ / "index.json",
                                {{"version", 1}, {"databases", nlohmann::json::object()}});
    }
  }
}

std::map<std::string, DatabaseDescriptor> Registry::load_index() const {
  auto doc = fsutil::read_json(root_ / "index.json");
  std::map<std::string, DatabaseDescriptor> out;
  for (auto& [name, entry] : doc.at("databases").items()) {
    out.emplace(name, DatabaseDescriptor::from_json(entry));
  }
  return out;
}

std::mutex& Registry::db_mutex(const std::string& name) {
  std::lock_guard lk(locks_mu_);
  auto& slot = db_locks_[name];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

fs::path Registry::status_path(const DatabaseDescriptor& d) const {
  return d.central_path / "status.json";
}

fs::path Registry::lock_path(const DatabaseDescriptor& d) const {
  return root_ / "locks" / (d.name + ".lock");
}

std::string Registry::register_database(const DatabaseDescriptor& descriptor) {
  if (!is_valid_name(descriptor.name)) {
    throw Error(Errc::InvalidName, "invalid database name: '" + descriptor.name + "'");
  }
  if (descriptor.num_nodes < 1) {
    throw Error(Errc::InvalidNodeCount,
                "num_nodes must be >= 1, got " + std::to_string(descriptor.num_nodes));
  }
  std::lock_guard lk(index_mu_);
  fsutil::FileLock lock(root_ / "index.lock");
  auto doc = fsutil::read_json(root_ / "index.json");
  if (doc["databases"].contains(descriptor.name)) {
    throw Error(Errc::DuplicateName, "database already registered: " + descriptor.name);
  }
  fs::create_directories(descriptor.central_path);
  DatabaseStatus initial;
  initial.value = StatusValue::Stopped;
  initial.since = timeutil::Clock::now();
  fsutil::write_json_atomic(status_path(descriptor), initial.to_json());
  doc["databases"][descriptor.name] = descriptor.to_json();
  fsutil::write_json_atomic(root_ / "index.json", doc);
  return descriptor.name;
}

DatabaseDescriptor Registry::get_descriptor(const std::string& name) const {
  std::lock_guard lk(index_mu_);
  auto idx = load_index();
  auto it = idx.find(name);
  if (it == idx.end()) throw Error(Errc::NotFound, "no such database: " + name);
  return it->second;
}

bool Registry::contains(const std::string& name) const {
  std::lock_guard lk(index_mu_);
  return load_index().count(name) > 0;
}

DatabaseStatus Registry::get_status(const std::string& name) const {
  auto d = get_descriptor(name);
  return DatabaseStatus::from_json(fsutil::read_json(status_path(d)));
}

TransitionReceipt Registry::transition(const std::string& name, StatusValue from, StatusValue to,
                                       const TransitionContext& ctx) {
  if (!is_permitted_edge(from, to)) {
    throw Error(Errc::IllegalEdge, "illegal transition " + std::string(to_string(from)) + " -> " +
                                       std::string(to_string(to)));
  }
  auto d = get_descriptor(name);
  std::lock_guard lk(db_mutex(name));
  fsutil::FileLock lock(lock_path(d));
  auto current = DatabaseStatus::from_json(fsutil::read_json(status_path(d)));
  if (current.value != from) {
    throw Error(Errc::WrongCurrentStatus,
                "database " + name + " is " + std::string(to_string(current.value)) +
                    ", expected " + std::string(to_string(from)),
                {{"actual", std::string(to_string(current.value))},
                 {"expected", std::string(to_string(from))}});
  }

  DatabaseStatus next;
  next.value = to;
  next.since = timeutil::Clock::now();
  switch (to) {
    case StatusValue::Stopped:
      break;
    case StatusValue::Starting:
      next.job_id = ctx.job_id;
      next.started_by = ctx.started_by;
      break;
    case StatusValue::Checkpointing:
      next.job_id = ctx.job_id;
      break;
    case StatusValue::Started:
    case StatusValue::Stopping:
      next.job_id = ctx.job_id ? ctx.job_id : current.job_id;
      next.started_by = ctx.started_by ? ctx.started_by : current.started_by;
      break;
  }
  fsutil::write_json_atomic(status_path(d), next.to_json());

  nlohmann::json hist{{"from", std::string(to_string(from))},
                      {"to", std::string(to_string(to))},
                      {"at", timeutil::to_rfc3339(next.since)},
                      {"job_id", next.job_id ? nlohmann::json(*next.job_id) : nullptr}};
  fsutil::append_line(root_ / "history" / (name + ".jsonl"), hist.dump());

  return TransitionReceipt{name, from, to, next.since, next.job_id};
}

void Registry::with_status_locked(const std::string& name, StatusValue required,
                                  const std::function<void()>& fn) {
  auto d = get_descriptor(name);
  std::lock_guard lk(db_mutex(name));
  fsutil::FileLock lock(lock_path(d));
  auto current = DatabaseStatus::from_json(fsutil::read_json(status_path(d)));
  if (current.value != required) {
    throw Error(Errc::WrongCurrentStatus,
                "database " + name + " is " + std::string(to_string(current.value)) +
                    ", expected " + std::string(to_string(required)),
                {{"actual", std::string(to_string(current.value))}});
  }
  fn();
}

std::vector<DatabaseSummary> Registry::list_databases(
    const std::set<std::string>& caller_groups) const {
  std::map<std::string, DatabaseDescriptor> idx;
  {
    std::lock_guard lk(index_mu_);
    idx = load_index();
  }
  std::vector<DatabaseSummary> out;
  for (const auto& [name, d] : idx) {
    if (!caller_groups.count(d.security_group)) continue;
    auto st = DatabaseStatus::from_json(fsutil::read_json(status_path(d)));
    out.push_back({name, d.type_string(), st.value, permitted_actions(st.value)});
  }
  // std::map iteration is already name-ordered.
  return out;
}

std::vector<DatabaseDescriptor> Registry::all() const {
  std::lock_guard lk(index_mu_);
  std::vector<DatabaseDescriptor> out;
  for (auto& [_, d] : load_index()) out.push_back(d);
  return out;
}

std::vector<HistoryEntry> Registry::history(const std::string& name) const {
  std::vector<HistoryEntry> out;
  auto text = fsutil::try_read_file(root_ / "history" / (name + ".jsonl"));
  if (!text) return out;
  std::istringstream in(*text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    HistoryEntry e;
    e.from = status_from_string(j.at("from").get<std::string>());
    e.to = status_from_string(j.at("to").get<std::string>());
    e.at = timeutil::parse_rfc3339(j.at("at").get<std::string>());
    if (!j["job_id"].is_null()) e.job_id = j["job_id"].get<std::string>();
    out.push_back(e);
  }
  return out;
}

}  // namespace dbm::registry
