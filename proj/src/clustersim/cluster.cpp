#include "clustersim/cluster.hpp"

#include <arpa/inet.h>

#include <set>

#include "common/error.hpp"
#include "common/fsutil.hpp"

namespace dbm::clustersim {

ClusterConfig ClusterConfig::from_json(const nlohmann::json& j) {
  ClusterConfig c;
  c.nodes = j.value("nodes", 8);
  c.cluster_root = j.value("cluster_root", std::string());
  c.ip_base = j.value("ip_base", std::string("127.64.0.0"));
  return c;
}

nlohmann::json ClusterConfig::to_json() const {
  return {{"nodes", nodes}, {"cluster_root", cluster_root.string()}, {"ip_base", ip_base}};
}

std::string ipv4_offset(const std::string& base, std::uint32_t offset) {
  in_addr addr{};
  if (inet_pton(AF_INET, base.c_str(), &addr) != 1) {
    throw Error(Errc::InvalidArgument, "bad IPv4 base: " + base);
  }
  addr.s_addr = htonl(ntohl(addr.s_addr) + offset);
  char buf[INET_ADDRSTRLEN];
  inet_ntop(AF_INET, &addr, buf, sizeof buf);
  return buf;
}

Cluster::Cluster(ClusterConfig config) : config_(std::move(config)) {
  if (config_.nodes < 1) throw Error(Errc::InvalidArgument, "cluster needs at least one node");
  fs::create_directories(config_.cluster_root / "nodes");
  fs::create_directories(config_.cluster_root / "jobs");
  for (int i = 1; i <= config_.nodes; ++i) {
    SimNode n;
    n.node_id = i;
    n.hostname = "node-" + std::to_string(i);
    n.ip = ipv4_offset(config_.ip_base, static_cast<std::uint32_t>(i));
    n.local_root = config_.cluster_root / "nodes" / n.hostname;
    fs::create_directories(n.local_root);
    nodes_.push_back(std::move(n));
  }
  auto saved = fsutil::try_read_file(config_.cluster_root / "nodes.json");
  if (saved) {
    auto doc = nlohmann::json::parse(*saved);
    auto allocations = doc.value("allocations", nlohmann::json::object());
    for (auto& [id, job] : allocations.items()) {
      int node_id = std::stoi(id);
      if (node_id >= 1 && node_id <= config_.nodes) nodes_[node_id - 1].job_id = job;
    }
  }
}

int Cluster::free_nodes() const {
  std::lock_guard lk(mu_);
  int n = 0;
  for (const auto& node : nodes_) n += node.job_id ? 0 : 1;
  return n;
}

std::vector<SimNode> Cluster::nodes() const {
  std::lock_guard lk(mu_);
  return nodes_;
}

std::optional<std::vector<SimNode>> Cluster::try_allocate(int count, const std::string& job_id) {
  std::lock_guard lk(mu_);
  std::vector<size_t> picked;
  for (size_t i = 0; i < nodes_.size() && static_cast<int>(picked.size()) < count; ++i) {
    if (!nodes_[i].job_id) picked.push_back(i);
  }
  if (static_cast<int>(picked.size()) < count) return std::nullopt;
  std::vector<SimNode> out;
  for (auto i : picked) {
    nodes_[i].job_id = job_id;
    out.push_back(nodes_[i]);
  }
  persist_locked();
  return out;
}

int Cluster::release(const std::string& job_id) {
  std::lock_guard lk(mu_);
  int freed = 0;
  for (auto& n : nodes_) {
    if (n.job_id == job_id) {
      n.job_id.reset();
      ++freed;
    }
  }
  if (freed) persist_locked();
  return freed;
}

std::vector<std::string> Cluster::allocated_job_ids() const {
  std::lock_guard lk(mu_);
  std::set<std::string> ids;
  for (const auto& n : nodes_) {
    if (n.job_id) ids.insert(*n.job_id);
  }
  return {ids.begin(), ids.end()};
}

void Cluster::persist_locked() const {
  nlohmann::json alloc = nlohmann::json::object();
  for (const auto& n : nodes_) {
    if (n.job_id) alloc[std::to_string(n.node_id)] = *n.job_id;
  }
  fsutil::write_json_atomic(config_.cluster_root / "nodes.json", {{"allocations", alloc}});
}

}  // namespace dbm::clustersim
