#include "dyndns/store.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "common/error.hpp"
#include "common/fsutil.hpp"
#include "dyndns/wire.hpp"

namespace dbm::dyndns {
namespace {

constexpr int kCompactEvery = 256;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

bool valid_label(std::string_view label) {
  if (label.empty() || label.size() > 63) return false;
  for (char c : label) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
    if (!ok) return false;
  }
  return label.front() != '-' && label.back() != '-';
}

}  // namespace

ZoneConfig ZoneConfig::from_json(const nlohmann::json& j) {
  ZoneConfig c;
  c.zone = j.value("zone", c.zone);
  c.default_ttl = j.value("default_ttl", c.default_ttl);
  c.ttl_max = j.value("ttl_max", c.ttl_max);
  c.bind = j.value("bind", c.bind);
  c.udp_port = j.value("udp_port", c.udp_port);
  c.http_port = j.value("http_port", c.http_port);
  c.store_dir = j.value("store_dir", std::string());
  return c;
}

nlohmann::json ZoneConfig::to_json() const {
  return {{"zone", zone},          {"default_ttl", default_ttl}, {"ttl_max", ttl_max},
          {"bind", bind},          {"udp_port", udp_port},       {"http_port", http_port},
          {"store_dir", store_dir.string()}};
}

nlohmann::json DnsRecord::to_json() const {
  return {{"name", name}, {"fqdn", fqdn}, {"address", address}, {"ttl", ttl}, {"type", "A"}};
}

RecordStore::RecordStore(ZoneConfig config) : config_(std::move(config)) {
  config_.zone = lower(config_.zone);
  if (config_.zone.empty() || config_.zone.back() != '.') {
    throw Error(Errc::InvalidArgument, "zone must be absolute (trailing dot): " + config_.zone);
  }
  std::string z = zone_no_dot();
  std::istringstream labels(z);
  std::string label;
  while (std::getline(labels, label, '.')) {
    if (!valid_label(label)) throw Error(Errc::InvalidArgument, "invalid zone: " + config_.zone);
  }
  if (config_.default_ttl == 0 || config_.default_ttl > config_.ttl_max) {
    throw Error(Errc::InvalidArgument, "default_ttl must be in [1, ttl_max]");
  }
  table_ = std::make_shared<const Table>();
  if (!config_.store_dir.empty()) {
    fs::create_directories(config_.store_dir);
    load();
  }
}

std::string RecordStore::zone_no_dot() const {
  return config_.zone.substr(0, config_.zone.size() - 1);
}

std::optional<std::string> RecordStore::relative_in_zone(const std::string& absolute) const {
  auto name = lower(absolute);
  if (!name.empty() && name.back() == '.') name.pop_back();
  auto z = zone_no_dot();
  if (name == z) return std::string();
  if (name.size() > z.size() && name.compare(name.size() - z.size(), z.size(), z) == 0 &&
      name[name.size() - z.size() - 1] == '.') {
    return name.substr(0, name.size() - z.size() - 1);
  }
  return std::nullopt;
}

std::string RecordStore::normalize(const std::string& name) const {
  std::string rel;
  if (!name.empty() && name.back() == '.') {
    auto r = relative_in_zone(name);
    if (!r) throw Error(Errc::InvalidName, "name outside zone " + config_.zone + ": " + name);
    rel = *r;
  } else {
    auto r = relative_in_zone(name);
    rel = r ? *r : lower(name);
  }
  if (rel.empty()) throw Error(Errc::InvalidName, "empty name");
  if (rel.size() + config_.zone.size() > 254) throw Error(Errc::InvalidName, "name too long");
  std::istringstream labels(rel);
  std::string label;
  int count = 0;
  while (std::getline(labels, label, '.')) {
    ++count;
    if (!valid_label(label)) throw Error(Errc::InvalidName, "invalid label in name: " + name);
  }
  if (count == 0 || rel.back() == '.') throw Error(Errc::InvalidName, "invalid name: " + name);
  return rel;
}

std::shared_ptr<const RecordStore::Table> RecordStore::snapshot() const {
  std::shared_lock lk(ptr_mu_);
  return table_;
}

DnsRecord RecordStore::upsert(const std::string& name, const std::string& address,
                              std::optional<std::uint32_t> ttl) {
  auto rel = normalize(name);
  std::uint32_t effective = ttl.value_or(config_.default_ttl);
  if (effective == 0) throw Error(Errc::InvalidArgument, "ttl must be positive");
  if (effective > config_.ttl_max) {
    throw Error(Errc::TtlTooHigh,
                "ttl " + std::to_string(effective) + " exceeds ttl_max " +
                    std::to_string(config_.ttl_max),
                {{"ttl", effective}, {"ttl_max", config_.ttl_max}});
  }
  try {
    wire::a_rdata(address);
  } catch (const std::invalid_argument& e) {
    throw Error(Errc::InvalidArgument, e.what());
  }
  DnsRecord rec{rel, rel + "." + config_.zone, address, effective};

  std::lock_guard lk(write_mu_);
  auto next = std::make_shared<Table>(*snapshot());
  (*next)[rel] = rec;
  log_op({{"op", "put"}, {"name", rel}, {"address", address}, {"ttl", effective}});
  std::unique_lock plk(ptr_mu_);
  table_ = std::move(next);
  return rec;
}

bool RecordStore::remove(const std::string& name) {
  std::string rel;
  try {
    rel = normalize(name);
  } catch (const Error&) {
    return false;
  }
  std::lock_guard lk(write_mu_);
  auto current = snapshot();
  if (!current->count(rel)) return false;
  auto next = std::make_shared<Table>(*current);
  next->erase(rel);
  log_op({{"op", "del"}, {"name", rel}});
  std::unique_lock plk(ptr_mu_);
  table_ = std::move(next);
  return true;
}

std::optional<DnsRecord> RecordStore::resolve(const std::string& name) const {
  std::string rel;
  try {
    rel = normalize(name);
  } catch (const Error&) {
    return std::nullopt;
  }
  auto t = snapshot();
  auto it = t->find(rel);
  if (it == t->end()) return std::nullopt;
  return it->second;
}

std::vector<DnsRecord> RecordStore::records() const {
  auto t = snapshot();
  std::vector<DnsRecord> out;
  for (const auto& [_, r] : *t) out.push_back(r);
  return out;
}

void RecordStore::load() {
  Table table;
  auto snap = fsutil::try_read_file(config_.store_dir / "records.json");
  auto apply = [&](const nlohmann::json& op) {
    auto rel = op.at("name").get<std::string>();
    if (op.value("op", "put") == "del") {
      table.erase(rel);
    } else {
      table[rel] = DnsRecord{rel, rel + "." + config_.zone, op.at("address").get<std::string>(),
                             op.at("ttl").get<std::uint32_t>()};
    }
  };
  if (snap) {
    auto doc = nlohmann::json::parse(*snap);
    for (const auto& r : doc.at("records")) apply(r);
  }
  if (auto log = fsutil::try_read_file(config_.store_dir / "records.log")) {
    std::istringstream in(*log);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        apply(nlohmann::json::parse(line));
      } catch (const nlohmann::json::exception&) {
        break;  // torn tail from a crash mid-append
      }
      ++log_entries_;
    }
  }
  table_ = std::make_shared<const Table>(std::move(table));
}

void RecordStore::log_op(const nlohmann::json& op) {
  if (config_.store_dir.empty()) return;
  if (++log_entries_ < kCompactEvery) {
    fsutil::append_line(config_.store_dir / "records.log", op.dump());
    return;
  }
  // Compaction: fold the pending op into a fresh snapshot and truncate the log.
  Table folded = *snapshot();
  auto rel = op.at("name").get<std::string>();
  if (op.at("op") == "del") {
    folded.erase(rel);
  } else {
    folded[rel] = DnsRecord{rel, rel + "." + config_.zone, op.at("address").get<std::string>(),
                            op.at("ttl").get<std::uint32_t>()};
  }
  nlohmann::json records = nlohmann::json::array();
  for (const auto& [n, r] : folded) {
    records.push_back({{"op", "put"}, {"name", n}, {"address", r.address}, {"ttl", r.ttl}});
  }
  fsutil::write_json_atomic(config_.store_dir / "records.json", {{"records", records}});
  fsutil::write_file_atomic(config_.store_dir / "records.log", "");
  log_entries_ = 0;
}

}  // namespace dbm::dyndns
