#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <utility>

#include <json.hpp>

#include "gateway/session.hpp"
#include "lifecycle/orchestrator.hpp"

namespace httplib {
class Server;
}

namespace dbm::gateway {

/// HTTP/JSON front end of the orchestrator. Errors are
/// {"error": {"code", "message", "details"}} with the status mapped from the
/// error code, so the CLI and the API agree on outcome classes.
class ApiServer {
 public:
  /// Port 0 picks an ephemeral port. Throws PortInUse.
  ApiServer(lifecycle::Orchestrator& orchestrator, const SessionIssuer& sessions,
            const std::string& bind, int port);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  std::uint16_t port() const { return port_; }
  void stop();

 private:
  void routes();
  /// Replays the stored outcome for (user, token) or runs `fn` and stores it.
  std::pair<int, nlohmann::json> idempotent(const std::string& user, const std::string& token,
                                            const std::function<std::pair<int, nlohmann::json>()>& fn);

  lifecycle::Orchestrator& orch_;
  const SessionIssuer& sessions_;
  std::unique_ptr<httplib::Server> http_;
  std::thread thread_;
  std::uint16_t port_ = 0;

  std::mutex idem_mu_;
  std::map<std::pair<std::string, std::string>, std::pair<int, nlohmann::json>> outcomes_;
};

}  // namespace dbm::gateway
