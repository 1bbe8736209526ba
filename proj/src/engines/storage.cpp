#include "engines/storage.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <sstream>

#include "common/error.hpp"
#include "common/fsutil.hpp"
#include "engines/protocol.hpp"

namespace dbm::engines {

void init_storage(EngineKind kind, const fs::path& central_path, int num_nodes) {
  std::error_code ec;
  if (fs::exists(central_path, ec) && !fs::is_empty(central_path, ec)) {
    throw Error(Errc::NotEmpty, "central folder is not empty: " + central_path.string());
  }
  if (num_nodes < 1) throw Error(Errc::InvalidNodeCount, "num_nodes must be >= 1");
  fs::create_directories(central_path);
  if (kind == EngineKind::ToyKv) {
    fs::create_directories(central_path / "hdfs/meta");
    fs::create_directories(central_path / "zookeeper");
    fsutil::write_json_atomic(central_path / "hdfs/meta/manifest.json",
                              {{"format", "toy-kv-image"},
                               {"version", 1},
                               {"partitions", num_nodes},
                               {"tables", nlohmann::json::array()}});
    fsutil::write_file_atomic(central_path / "zookeeper/epoch", "0\n");
  } else {
    fs::create_directories(central_path / "catalog");
    fsutil::write_json_atomic(central_path / "catalog/catalog.json",
                              {{"schema_version", 1},
                               {"partitions", num_nodes},
                               {"arrays", nlohmann::json::array()}});
  }
  for (int i = 0; i < num_nodes; ++i) {
    auto part = central_path / partition_dir(kind, i);
    fs::create_directories(part);
    if (kind == EngineKind::ToyTabular) {
      fsutil::write_json_atomic(part / "manifest.json", {{"partition", i}, {"chunks", 0}});
    }
  }
}

void write_engine_config(EngineKind kind, const fs::path& central_path, const std::string& db,
                         int num_nodes, const std::string& zone) {
  nlohmann::json services = nlohmann::json::array();
  for (const auto& s : service_specs(kind)) {
    services.push_back({{"name", s.name},
                        {"scope", s.node_scope == NodeScope::MasterOnly ? "master" : "all"},
                        {"start_order", s.start_order},
                        {"depends_on", s.depends_on},
                        {"port_offset", s.port_offset}});
  }
  std::string z = zone;
  if (!z.empty() && z.back() == '.') z.pop_back();
  fs::create_directories(central_path / "conf");
  fsutil::write_json_atomic(central_path / "conf/engine.json",
                            {{"engine", std::string(to_string(kind))},
                             {"database", db},
                             {"num_nodes", num_nodes},
                             {"master", db + "." + z},
                             {"services", services},
                             {"shared_secret_file", "secrets/shared_secret"},
                             {"superuser_file", "secrets/superuser"}});
}

std::string users_dir(EngineKind kind) {
  return kind == EngineKind::ToyKv ? "hdfs/meta" : "catalog";
}

PartitionStore::PartitionStore(fs::path dir) : dir_(std::move(dir)) {
  fs::create_directories(dir_);
  data_ = load(dir_);
  auto log = dir_ / "data.log";
  fd_ = ::open(log.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error(Errc::Io, "open " + log.string() + ": " + std::strerror(errno));
}

PartitionStore::~PartitionStore() {
  if (fd_ >= 0) ::close(fd_);
}

std::map<std::string, std::string> PartitionStore::load(const fs::path& dir) {
  std::map<std::string, std::string> out;
  auto text = fsutil::try_read_file(dir / "data.log");
  if (!text) return out;
  std::istringstream in(*text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      out[j.at("k").get<std::string>()] = j.at("v").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      break;  // torn tail from a killed daemon
    }
  }
  return out;
}

void PartitionStore::put(const std::string& key, const std::string& value) {
  std::string line = nlohmann::json{{"k", key}, {"v", value}}.dump() + "\n";
  std::lock_guard lk(mu_);
  std::string_view rest = line;
  while (!rest.empty()) {
    ssize_t n = ::write(fd_, rest.data(), rest.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(Errc::Io, std::string("append: ") + std::strerror(errno));
    }
    rest.remove_prefix(static_cast<size_t>(n));
  }
  data_[key] = value;
}

std::optional<std::string> PartitionStore::get(const std::string& key) const {
  std::lock_guard lk(mu_);
  auto it = data_.find(key);
  if (it == data_.end()) return std::nullopt;
  return it->second;
}

std::size_t PartitionStore::size() const {
  std::lock_guard lk(mu_);
  return data_.size();
}

UserStore::UserStore(fs::path file) : file_(std::move(file)) {
  auto text = fsutil::try_read_file(file_);
  users_ = text ? nlohmann::json::parse(*text).value("users", nlohmann::json::object())
                : nlohmann::json::object();
}

void UserStore::set_password(const std::string& user, const std::string& password) {
  std::lock_guard lk(mu_);
  users_[user] = hash_password(password);
  fsutil::write_json_atomic(file_, {{"users", users_}},
                            fs::perms::owner_read | fs::perms::owner_write);
}

bool UserStore::verify(const std::string& user, const std::string& password) const {
  std::lock_guard lk(mu_);
  auto it = users_.find(user);
  if (it == users_.end()) return false;
  return verify_password(it->get<std::string>(), password);
}

}  // namespace dbm::engines
