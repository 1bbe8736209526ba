#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "dyndns/store.hpp"

namespace httplib {
class Server;
}

namespace dbm::dyndns {

/// Builds the authoritative response for one query packet, or nullopt when
/// the packet must be dropped (too short, or itself a response).
std::optional<std::vector<std::uint8_t>> answer_query(std::span<const std::uint8_t> packet,
                                                      const RecordStore& store);

/// Running UDP responder plus the HTTP CRUD web service. Stops on destruction.
class DnsServer {
 public:
  /// Ports of 0 pick ephemeral ports. Throws PortInUse.
  DnsServer(RecordStore& store, const ZoneConfig& config);
  ~DnsServer();
  DnsServer(const DnsServer&) = delete;
  DnsServer& operator=(const DnsServer&) = delete;

  std::uint16_t udp_port() const { return udp_port_; }
  std::uint16_t http_port() const { return http_port_; }
  std::uint64_t queries_answered() const { return answered_.load(); }
  void stop();

 private:
  void udp_loop();

  RecordStore& store_;
  int udp_fd_ = -1;
  int wake_pipe_[2] = {-1, -1};
  std::uint16_t udp_port_ = 0;
  std::uint16_t http_port_ = 0;
  std::atomic<bool> stopping_{false};
  std::atomic<std::uint64_t> answered_{0};
  std::vector<std::thread> udp_threads_;
  std::unique_ptr<httplib::Server> http_;
  std::thread http_thread_;
};

/// serve(config): start both listeners for `store`.
std::unique_ptr<DnsServer> serve(RecordStore& store, const ZoneConfig& config);

}  // namespace dbm::dyndns
