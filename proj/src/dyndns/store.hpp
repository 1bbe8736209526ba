#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

namespace dbm::dyndns {

namespace fs = std::filesystem;

struct ZoneConfig {
  std::string zone = "db.supercloud.test.";
  std::uint32_t default_ttl = 5;
  std::uint32_t ttl_max = 60;
  std::string bind = "127.0.0.1";
  int udp_port = 5353;
  int http_port = 8053;
  fs::path store_dir;

  static ZoneConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct DnsRecord {
  std::string name;  // relative to the zone, lowercase
  std::string fqdn;  // absolute, trailing dot
  std::string address;
  std::uint32_t ttl = 0;

  nlohmann::json to_json() const;
};

/// Durable A-record table for one zone: JSON snapshot plus an append log,
/// compacted periodically. Writers serialize; readers take an immutable
/// snapshot pointer.
class RecordStore {
 public:
  explicit RecordStore(ZoneConfig config);

  /// Create or replace. Throws InvalidName, InvalidArgument (bad address), TtlTooHigh.
  DnsRecord upsert(const std::string& name, const std::string& address,
                   std::optional<std::uint32_t> ttl = std::nullopt);
  /// Idempotent; returns whether a record was removed.
  bool remove(const std::string& name);
  /// nullopt is NXDOMAIN. Accepts relative or absolute names.
  std::optional<DnsRecord> resolve(const std::string& name) const;
  std::vector<DnsRecord> records() const;

  /// Lowercased name relative to the zone. Throws InvalidName.
  std::string normalize(const std::string& name) const;
  /// For wire lookups: nullopt if the absolute name is outside the zone;
  /// "" for the apex.
  std::optional<std::string> relative_in_zone(const std::string& absolute) const;

  const ZoneConfig& config() const { return config_; }
  std::string zone_no_dot() const;

 private:
  using Table = std::map<std::string, DnsRecord>;

  void load();
  void log_op(const nlohmann::json& op);
  std::shared_ptr<const Table> snapshot() const;

  ZoneConfig config_;
  std::mutex write_mu_;
  mutable std::shared_mutex ptr_mu_;
  std::shared_ptr<const Table> table_;
  int log_entries_ = 0;
};

}  // namespace dbm::dyndns
