#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dyndns/wire.hpp"

namespace dbm::dyndns {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 53;

  /// "host:port"
  static Endpoint parse(const std::string& text);
  std::string to_string() const;
};

struct QueryResult {
  wire::Rcode rcode = wire::Rcode::ServFail;
  bool authoritative = false;
  std::vector<std::string> addresses;
  std::vector<std::uint32_t> ttls;
  wire::Message message;
};

/// Minimal stub resolver: one UDP question, retried on timeout.
/// Throws dbm::Error(Errc::Io) when nothing answers.
QueryResult query(const Endpoint& server, const std::string& fqdn,
                  std::uint16_t qtype = wire::kTypeA,
                  std::chrono::milliseconds timeout = std::chrono::milliseconds(500),
                  int attempts = 3);

/// First A address, or nullopt on NXDOMAIN/NODATA.
std::optional<std::string> resolve_a(const Endpoint& server, const std::string& fqdn);

}  // namespace dbm::dyndns
