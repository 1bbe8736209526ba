#include "gateway/api.hpp"

#include <sys/socket.h>

#include <algorithm>
#include <cctype>

#include <httplib.h>

#include "common/error.hpp"
#include "engines/engine_kind.hpp"

namespace dbm::gateway {
namespace {

constexpr std::size_t kMaxRememberedOutcomes = 4096;

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
  send_json(res, http_status(e.code()), {{"error", e.to_json()}});
}

nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  try {
    auto j = nlohmann::json::parse(req.body);
    if (!j.is_object()) throw Error(Errc::InvalidArgument, "request body must be a JSON object");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidArgument, std::string("malformed JSON body: ") + e.what());
  }
}

std::string require_string(const nlohmann::json& body, const char* key) {
  if (!body.contains(key) || !body[key].is_string() || body[key].get<std::string>().empty()) {
    throw Error(Errc::InvalidArgument, std::string("missing field '") + key + "'");
  }
  return body[key].get<std::string>();
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

ApiServer::ApiServer(lifecycle::Orchestrator& orchestrator, const SessionIssuer& sessions,
                     const std::string& bind, int port)
    : orch_(orchestrator), sessions_(sessions), http_(std::make_unique<httplib::Server>()) {
  http_->set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  });
  routes();
  int bound = port == 0 ? http_->bind_to_any_port(bind) : (http_->bind_to_port(bind, port) ? port : -1);
  if (bound < 0) {
    throw Error(Errc::PortInUse, "cannot bind HTTP API to " + bind + ":" + std::to_string(port));
  }
  port_ = static_cast<std::uint16_t>(bound);
  thread_ = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
}

ApiServer::~ApiServer() { stop(); }

void ApiServer::stop() {
  if (http_) http_->stop();
  if (thread_.joinable()) thread_.join();
}

std::pair<int, nlohmann::json> ApiServer::idempotent(
    const std::string& user, const std::string& token,
    const std::function<std::pair<int, nlohmann::json>()>& fn) {
  if (token.empty()) return fn();
  {
    std::lock_guard lk(idem_mu_);
    auto it = outcomes_.find({user, token});
    if (it != outcomes_.end()) return it->second;
  }
  auto outcome = fn();
  std::lock_guard lk(idem_mu_);
  if (outcomes_.size() >= kMaxRememberedOutcomes) outcomes_.erase(outcomes_.begin());
  outcomes_.emplace(std::make_pair(user, token), outcome);
  return outcome;
}

void ApiServer::routes() {
  using Handler = std::function<void(const httplib::Request&, httplib::Response&,
                                     const security::Identity&)>;
  // Every route except /login and /health runs with an authenticated identity.
  auto authed = [this](Handler h) {
    return [this, h](const httplib::Request& req, httplib::Response& res) {
      try {
        auto header = req.get_header_value("Authorization");
        const std::string prefix = "Bearer ";
        if (header.rfind(prefix, 0) != 0) {
          throw Error(Errc::Unauthenticated, "missing bearer token");
        }
        auto who = sessions_.authenticate(header.substr(prefix.size()));
        h(req, res, who);
      } catch (const Error& e) {
        send_error(res, e);
      } catch (const std::exception& e) {
        send_error(res, Error(Errc::Internal, e.what()));
      }
    };
  };
  auto open = [](std::function<void(const httplib::Request&, httplib::Response&)> h) {
    return [h](const httplib::Request& req, httplib::Response& res) {
      try {
        h(req, res);
      } catch (const Error& e) {
        send_error(res, e);
      } catch (const std::exception& e) {
        send_error(res, Error(Errc::Internal, e.what()));
      }
    };
  };

  http_->Get("/health", open([](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"ok", true}});
  }));

  http_->Post("/login", open([this](const httplib::Request& req, httplib::Response& res) {
    auto body = parse_body(req);
    auto user = require_string(body, "user");
    auto token = sessions_.login(user);
    auto who = orch_.identities().require(user);
    auto j = who.to_json();
    j["token"] = token;
    send_json(res, 200, j);
  }));

  http_->Get("/whoami", authed([](const httplib::Request&, httplib::Response& res,
                                  const security::Identity& who) {
    send_json(res, 200, who.to_json());
  }));

  http_->Get("/databases", authed([this](const httplib::Request&, httplib::Response& res,
                                         const security::Identity& who) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& s : orch_.list(who.name)) rows.push_back(s.to_json());
    send_json(res, 200, rows);
  }));

  http_->Post("/databases", authed([this](const httplib::Request& req, httplib::Response& res,
                                          const security::Identity& who) {
    auto body = parse_body(req);
    auto engine = engines::engine_from_string(require_string(body, "engine"));
    if (!body.contains("num_nodes") || !body["num_nodes"].is_number_integer()) {
      throw Error(Errc::InvalidArgument, "missing integer field 'num_nodes'");
    }
    std::optional<std::string> version;
    if (body.contains("engine_version") && body["engine_version"].is_string()) {
      version = body["engine_version"].get<std::string>();
    }
    auto d = orch_.db_create(engine, body["num_nodes"].get<int>(), require_string(body, "name"),
                             require_string(body, "group"), who.name, version);
    auto j = d.to_json();
    j["status"] = "stopped";
    send_json(res, 201, j);
  }));

  http_->Get(R"(/databases/([^/]+))", authed([this](const httplib::Request& req,
                                                    httplib::Response& res,
                                                    const security::Identity& who) {
    send_json(res, 200, orch_.view_info(req.matches[1], who.name));
  }));

  http_->Post(R"(/databases/([^/]+)/actions)",
              authed([this](const httplib::Request& req, httplib::Response& res,
                            const security::Identity& who) {
                auto body = parse_body(req);
                auto name = std::string(req.matches[1]);
                auto action = lower(require_string(body, "action"));
                auto token = body.value("idempotency_token", std::string());
                auto [status, out] = idempotent(who.name, token, [&]() -> std::pair<int, nlohmann::json> {
                  try {
                    nlohmann::json j{{"accepted", true}, {"database", name}, {"action", action}};
                    if (action == "start") {
                      auto h = orch_.db_start(name, who.name);
                      j["status"] = registry::to_string(h.status);
                      j["job_id"] = h.job_id;
                    } else if (action == "stop") {
                      auto h = orch_.db_stop(name, who.name);
                      j["status"] = registry::to_string(h.status);
                      j["job_id"] = h.job_id;
                    } else if (action == "checkpoint") {
                      auto c = orch_.db_checkpoint(name, who.name);
                      j["status"] = "checkpointing";
                      j["checkpoint"] = c.to_json();
                    } else {
                      throw Error(Errc::InvalidArgument,
                                  "unknown action '" + action + "' (start, stop, checkpoint)");
                    }
                    return {202, j};
                  } catch (const Error& e) {
                    return {http_status(e.code()), {{"error", e.to_json()}}};
                  }
                });
                send_json(res, status, out);
              }));

  http_->Post(R"(/databases/([^/]+)/restore)",
              authed([this](const httplib::Request& req, httplib::Response& res,
                            const security::Identity& who) {
                auto body = parse_body(req);
                auto name = std::string(req.matches[1]);
                auto checkpoint = require_string(body, "checkpoint");
                orch_.db_restore(name, checkpoint, who.name);
                send_json(res, 200, {{"database", name}, {"restored", checkpoint}, {"status", "stopped"}});
              }));

  http_->Post(R"(/databases/([^/]+)/force-stop)",
              authed([this](const httplib::Request& req, httplib::Response& res,
                            const security::Identity& who) {
                send_json(res, 200, orch_.db_force_stop(req.matches[1], who.name).to_json());
              }));

  http_->Get(R"(/databases/([^/]+)/checkpoints)",
             authed([this](const httplib::Request& req, httplib::Response& res,
                           const security::Identity& who) {
               nlohmann::json out = nlohmann::json::array();
               for (const auto& c : orch_.list_checkpoints(req.matches[1], who.name)) {
                 out.push_back(c.to_json());
               }
               send_json(res, 200, out);
             }));

  http_->Get(R"(/databases/([^/]+)/accesskey)",
             authed([this](const httplib::Request& req, httplib::Response& res,
                           const security::Identity& who) {
               auto name = std::string(req.matches[1]);
               send_json(res, 200,
                         {{"database", name},
                          {"username", security::kAccessUserName},
                          {"key", orch_.locate_access_key(name, who.name)}});
             }));

  http_->Post(R"(/databases/([^/]+)/revoke)",
              authed([this](const httplib::Request& req, httplib::Response& res,
                            const security::Identity& who) {
                auto body = parse_body(req);
                send_json(res, 200,
                          orch_.revoke_user(req.matches[1], require_string(body, "user"), who.name)
                              .to_json());
              }));

  http_->Get(R"(/databases/([^/]+)/revocations)",
             authed([this](const httplib::Request& req, httplib::Response& res,
                           const security::Identity& who) {
               nlohmann::json out = nlohmann::json::array();
               for (const auto& p : orch_.revocations(req.matches[1], who.name)) {
                 out.push_back(p.to_json());
               }
               send_json(res, 200, out);
             }));

  http_->Get("/cluster", authed([this](const httplib::Request&, httplib::Response& res,
                                       const security::Identity&) {
    send_json(res, 200, orch_.cluster_info());
  }));

  http_->Post(R"(/jobs/([^/]+)/cancel)",
              authed([this](const httplib::Request& req, httplib::Response& res,
                            const security::Identity& who) {
                auto job = std::string(req.matches[1]);
                orch_.cancel_job(job, who.name);
                send_json(res, 202, {{"job_id", job}, {"cancel_requested", true}});
              }));
}

}  // namespace dbm::gateway
