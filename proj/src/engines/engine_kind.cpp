#include "engines/engine_kind.hpp"

#include "common/error.hpp"

namespace dbm::engines {

std::string_view to_string(EngineKind kind) {
  return kind == EngineKind::ToyKv ? "toy-kv" : "toy-tabular";
}

EngineKind engine_from_string(std::string_view s) {
  if (s == "toy-kv" || s == "accumulo") return EngineKind::ToyKv;
  if (s == "toy-tabular" || s == "scidb") return EngineKind::ToyTabular;
  throw Error(Errc::InvalidArgument, "unknown engine kind: " + std::string(s));
}

std::string_view default_version(EngineKind kind) {
  return kind == EngineKind::ToyKv ? "v1.0" : "14.3";
}

const std::vector<ServiceSpec>& service_specs(EngineKind kind) {
  // Kerberos and the HDFS image are named slots without a process: the
  // ordering is represented, the protocols are not.
  static const std::vector<ServiceSpec> kv{
      {"kerberos", NodeScope::MasterOnly, 0, {}, ServiceImpl::Noop, "", 0, ""},
      {"hdfs", NodeScope::MasterOnly, 1, {"kerberos"}, ServiceImpl::Noop, "", 0, "hdfs/meta"},
      {"zookeeper", NodeScope::MasterOnly, 2, {"kerberos"}, ServiceImpl::Daemon, "zookeeper", 1,
       "zookeeper"},
      {"coordinator", NodeScope::MasterOnly, 3, {"hdfs", "zookeeper"}, ServiceImpl::Daemon,
       "coordinator", 2, "hdfs/meta"},
      {"tablet", NodeScope::AllNodes, 4, {"coordinator"}, ServiceImpl::Daemon, "worker", 3,
       "hdfs/tablets/part-{i}"},
  };
  static const std::vector<ServiceSpec> tabular{
      {"catalog", NodeScope::MasterOnly, 0, {}, ServiceImpl::Daemon, "catalog", 1, "catalog"},
      {"kerberos", NodeScope::MasterOnly, 1, {}, ServiceImpl::Noop, "", 0, ""},
      {"worker", NodeScope::AllNodes, 2, {"catalog"}, ServiceImpl::Daemon, "worker", 3,
       "arrays/part-{i}"},
  };
  return kind == EngineKind::ToyKv ? kv : tabular;
}

std::vector<std::string> data_subtrees(EngineKind kind) {
  if (kind == EngineKind::ToyKv) return {"hdfs", "zookeeper"};
  return {"arrays", "catalog"};
}

std::string partition_dir(EngineKind kind, int index) {
  auto base = kind == EngineKind::ToyKv ? std::string("hdfs/tablets/part-")
                                        : std::string("arrays/part-");
  return base + std::to_string(index);
}

std::vector<std::string> node_inbound_paths(EngineKind kind, int index) {
  std::vector<std::string> out{"conf", "secrets"};
  for (const auto& p : node_outbound_paths(kind, index)) out.push_back(p);
  return out;
}

std::vector<std::string> node_outbound_paths(EngineKind kind, int index) {
  std::vector<std::string> out;
  if (index == 0) {
    if (kind == EngineKind::ToyKv) {
      out.push_back("hdfs/meta");
      out.push_back("zookeeper");
    } else {
      out.push_back("catalog");
    }
  }
  out.push_back(partition_dir(kind, index));
  return out;
}

}  // namespace dbm::engines
