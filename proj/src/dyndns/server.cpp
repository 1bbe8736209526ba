#include "dyndns/server.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include <httplib.h>

#include "common/error.hpp"
#include "dyndns/wire.hpp"

namespace dbm::dyndns {
namespace {

constexpr int kUdpThreads = 2;

void json_error(httplib::Response& res, const Error& e) {
  res.status = http_status(e.code());
  res.set_content(nlohmann::json{{"error", e.to_json()}}.dump(), "application/json");
}

}  // namespace

std::optional<std::vector<std::uint8_t>> answer_query(std::span<const std::uint8_t> packet,
                                                      const RecordStore& store) {
  auto header = wire::decode_header(packet);
  if (!header || header->qr) return std::nullopt;

  wire::Message resp;
  resp.header.id = header->id;
  resp.header.qr = true;
  resp.header.opcode = header->opcode;
  resp.header.aa = true;
  resp.header.rd = header->rd;
  resp.header.ra = false;

  wire::Message query;
  try {
    query = wire::decode(packet);
  } catch (const wire::WireError&) {
    resp.header.rcode = wire::Rcode::FormErr;
    return wire::encode(resp);
  }
  if (header->opcode != 0) {
    resp.questions = query.questions;
    resp.header.rcode = wire::Rcode::NotImp;
    return wire::encode(resp);
  }
  if (query.questions.size() != 1) {
    resp.header.rcode = wire::Rcode::FormErr;
    return wire::encode(resp);
  }
  const auto& q = query.questions.front();
  resp.questions.push_back(q);
  if (q.qclass != wire::kClassIN && q.qclass != wire::kClassANY) {
    resp.header.rcode = wire::Rcode::Refused;
    return wire::encode(resp);
  }
  auto rel = store.relative_in_zone(q.name);
  if (!rel) {
    resp.header.rcode = wire::Rcode::Refused;
    return wire::encode(resp);
  }
  if (rel->empty()) {
    resp.header.rcode = wire::Rcode::NoError;  // apex: no A data
    return wire::encode(resp);
  }
  auto rec = store.resolve(*rel);
  if (!rec) {
    resp.header.rcode = wire::Rcode::NxDomain;
    return wire::encode(resp);
  }
  resp.header.rcode = wire::Rcode::NoError;
  if (q.qtype == wire::kTypeA || q.qtype == wire::kTypeANY) {
    wire::ResourceRecord rr;
    rr.name = q.name;
    rr.type = wire::kTypeA;
    rr.rclass = wire::kClassIN;
    rr.ttl = rec->ttl;
    rr.rdata = wire::a_rdata(rec->address);
    resp.answers.push_back(std::move(rr));
  }
  return wire::encode(resp);
}

DnsServer::DnsServer(RecordStore& store, const ZoneConfig& config) : store_(store) {
  udp_fd_ = ::socket(AF_INET, SOCK_DGRAM | SOCK_CLOEXEC, 0);
  if (udp_fd_ < 0) throw Error(Errc::Io, std::string("socket: ") + std::strerror(errno));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(config.udp_port));
  if (inet_pton(AF_INET, config.bind.c_str(), &addr.sin_addr) != 1) {
    ::close(udp_fd_);
    throw Error(Errc::InvalidArgument, "bad bind address: " + config.bind);
  }
  if (::bind(udp_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    int err = errno;
    ::close(udp_fd_);
    throw Error(Errc::PortInUse, "cannot bind UDP " + config.bind + ":" +
                                     std::to_string(config.udp_port) + ": " + std::strerror(err),
                {{"port", config.udp_port}});
  }
  socklen_t len = sizeof addr;
  ::getsockname(udp_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  udp_port_ = ntohs(addr.sin_port);
  if (::pipe2(wake_pipe_, O_CLOEXEC) != 0) {
    ::close(udp_fd_);
    throw Error(Errc::Io, "pipe failed");
  }

  http_ = std::make_unique<httplib::Server>();
  http_->set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  });
  http_->Put(R"(/records/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      auto body = nlohmann::json::parse(req.body.empty() ? "{}" : req.body);
      std::optional<std::uint32_t> ttl;
      if (body.contains("ttl") && !body["ttl"].is_null()) ttl = body["ttl"].get<std::uint32_t>();
      auto rec = store_.upsert(req.matches[1], body.at("address").get<std::string>(), ttl);
      res.set_content(rec.to_json().dump(), "application/json");
    } catch (const Error& e) {
      json_error(res, e);
    } catch (const nlohmann::json::exception& e) {
      json_error(res, Error(Errc::InvalidArgument, e.what()));
    }
  });
  http_->Delete(R"(/records/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    bool removed = store_.remove(req.matches[1]);
    res.set_content(nlohmann::json{{"removed", removed}}.dump(), "application/json");
  });
  http_->Get(R"(/records/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    auto rec = store_.resolve(req.matches[1]);
    if (!rec) {
      json_error(res, Error(Errc::NotFound, "NXDOMAIN"));
      return;
    }
    res.set_content(rec->to_json().dump(), "application/json");
  });
  http_->Get("/records", [this](const httplib::Request&, httplib::Response& res) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& r : store_.records()) list.push_back(r.to_json());
    res.set_content(nlohmann::json{{"zone", store_.config().zone}, {"records", list}}.dump(),
                    "application/json");
  });

  int port = config.http_port;
  if (port == 0) {
    port = http_->bind_to_any_port(config.bind);
  } else if (!http_->bind_to_port(config.bind, port)) {
    port = -1;
  }
  if (port <= 0) {
    ::close(udp_fd_);
    ::close(wake_pipe_[0]);
    ::close(wake_pipe_[1]);
    throw Error(Errc::PortInUse, "cannot bind HTTP " + config.bind + ":" +
                                     std::to_string(config.http_port),
                {{"port", config.http_port}});
  }
  http_port_ = static_cast<std::uint16_t>(port);
  http_thread_ = std::thread([this] { http_->listen_after_bind(); });
  for (int i = 0; i < kUdpThreads; ++i) udp_threads_.emplace_back([this] { udp_loop(); });
}

DnsServer::~DnsServer() { stop(); }

void DnsServer::stop() {
  if (stopping_.exchange(true)) return;
  char b = 1;
  [[maybe_unused]] auto n = ::write(wake_pipe_[1], &b, 1);
  for (auto& t : udp_threads_) t.join();
  if (http_) http_->stop();
  if (http_thread_.joinable()) http_thread_.join();
  ::close(udp_fd_);
  ::close(wake_pipe_[0]);
  ::close(wake_pipe_[1]);
}

void DnsServer::udp_loop() {
  std::vector<std::uint8_t> buf(4096);
  while (!stopping_.load()) {
    pollfd fds[2] = {{udp_fd_, POLLIN, 0}, {wake_pipe_[0], POLLIN, 0}};
    int rc = ::poll(fds, 2, 500);
    if (rc <= 0) continue;
    if (fds[1].revents) break;
    if (!(fds[0].revents & POLLIN)) continue;
    sockaddr_in peer{};
    socklen_t plen = sizeof peer;
    ssize_t n = ::recvfrom(udp_fd_, buf.data(), buf.size(), MSG_DONTWAIT,
                           reinterpret_cast<sockaddr*>(&peer), &plen);
    if (n <= 0) continue;
    auto resp = answer_query({buf.data(), static_cast<size_t>(n)}, store_);
    if (!resp) continue;
    ::sendto(udp_fd_, resp->data(), resp->size(), 0, reinterpret_cast<sockaddr*>(&peer), plen);
    ++answered_;
  }
}

std::unique_ptr<DnsServer> serve(RecordStore& store, const ZoneConfig& config) {
  return std::make_unique<DnsServer>(store, config);
}

}  // namespace dbm::dyndns
