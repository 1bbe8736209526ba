#include "engines/client.hpp"

#include "common/error.hpp"

namespace dbm::engines {
namespace {

[[noreturn]] void raise(const Reply& r) {
  Errc code = Errc::Internal;
  try {
    code = errc_from_name(r.code);
  } catch (const Error&) {
  }
  throw Error(code, r.payload.empty() ? r.code : r.code + ": " + r.payload);
}

}  // namespace

EngineClient::EngineClient(ClientConfig config) : config_(std::move(config)) {
  workers_ = worker_endpoints(config_.kind, config_.database, config_.zone, config_.num_nodes,
                              config_.base_port);
  sockets_.resize(workers_.size());
}

LineSocket EngineClient::open(const EngineEndpoint& ep) const {
  auto ip = dyndns::resolve_a(config_.dns, ep.fqdn);
  if (!ip) throw Error(Errc::EngineUnreachable, ep.fqdn + " does not resolve");
  return LineSocket::connect(*ip, ep.port);
}

Reply EngineClient::call(int partition, const std::string& line) {
  auto& sock = sockets_.at(static_cast<size_t>(partition));
  if (!sock.valid()) throw Error(Errc::NotAuthenticated, "authenticate first");
  return sock.request(line);
}

void EngineClient::authenticate(const std::string& user, const std::string& secret) {
  std::lock_guard lk(mu_);
  for (size_t i = 0; i < workers_.size(); ++i) {
    auto sock = open(workers_[i]);
    auto r = sock.request("AUTH " + user + " " + secret);
    if (!r.ok) {
      for (auto& s : sockets_) s.close();
      raise(r);
    }
    sockets_[i] = std::move(sock);
  }
}

void EngineClient::set_password(const std::string& user, const std::string& new_secret,
                                const std::string& superuser_secret) {
  auto ep = authority_endpoint(config_.kind, config_.database, config_.zone, config_.base_port);
  auto sock = open(ep);
  auto auth = sock.request("AUTH root " + superuser_secret);
  if (!auth.ok) {
    throw Error(Errc::SuperuserAuthFailed, "superuser authentication failed on " + ep.fqdn);
  }
  auto r = sock.request("SETPASS " + user + " " + new_secret);
  if (!r.ok) raise(r);
}

void EngineClient::put(const std::string& key, const std::string& value) {
  if (key.empty() || key.size() > kMaxKeyBytes || key.find_first_of(" \n\r") != std::string::npos) {
    throw Error(Errc::InvalidArgument, "keys are 1..1024 bytes without whitespace");
  }
  if (value.size() > kMaxValueBytes || value.find_first_of("\n\r") != std::string::npos) {
    throw Error(Errc::InvalidArgument, "values are at most 64 KiB without newlines");
  }
  std::lock_guard lk(mu_);
  auto r = call(partition_for(key, config_.num_nodes), "PUT " + key + " " + value);
  if (!r.ok) raise(r);
}

std::string EngineClient::get(const std::string& key) {
  std::lock_guard lk(mu_);
  auto r = call(partition_for(key, config_.num_nodes), "GET " + key);
  if (!r.ok) raise(r);
  return r.payload;
}

std::vector<std::size_t> EngineClient::partition_counts() {
  std::lock_guard lk(mu_);
  std::vector<std::size_t> out;
  for (size_t i = 0; i < workers_.size(); ++i) {
    auto r = call(static_cast<int>(i), "COUNT");
    if (!r.ok) raise(r);
    out.push_back(std::stoul(r.payload));
  }
  return out;
}

bool EngineClient::ping() {
  try {
    std::vector<EngineEndpoint> all = workers_;
    all.push_back(
        authority_endpoint(config_.kind, config_.database, config_.zone, config_.base_port));
    for (const auto& ep : all) {
      auto sock = open(ep);
      if (!sock.request("PING").ok) return false;
    }
    return true;
  } catch (const Error&) {
    return false;
  }
}

}  // namespace dbm::engines
