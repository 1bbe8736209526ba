#include "dyndns/resolver.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <random>

#include "common/error.hpp"

namespace dbm::dyndns {

Endpoint Endpoint::parse(const std::string& text) {
  auto colon = text.rfind(':');
  if (colon == std::string::npos) throw Error(Errc::InvalidArgument, "expected host:port");
  Endpoint e;
  e.host = text.substr(0, colon);
  e.port = static_cast<std::uint16_t>(std::stoi(text.substr(colon + 1)));
  return e;
}

std::string Endpoint::to_string() const { return host + ":" + std::to_string(port); }

QueryResult query(const Endpoint& server, const std::string& fqdn, std::uint16_t qtype,
                  std::chrono::milliseconds timeout, int attempts) {
  int fd = ::socket(AF_INET, SOCK_DGRAM | SOCK_CLOEXEC, 0);
  if (fd < 0) throw Error(Errc::Io, "socket failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(server.port);
  if (inet_pton(AF_INET, server.host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw Error(Errc::InvalidArgument, "bad DNS server address: " + server.host);
  }
  thread_local std::mt19937 rng{std::random_device{}()};
  auto id = static_cast<std::uint16_t>(rng());
  auto packet = wire::make_query(id, fqdn, qtype);
  std::vector<std::uint8_t> buf(4096);
  for (int attempt = 0; attempt < attempts; ++attempt) {
    ::sendto(fd, packet.data(), packet.size(), 0, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
    auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) break;
      pollfd pfd{fd, POLLIN, 0};
      if (::poll(&pfd, 1, static_cast<int>(left.count())) <= 0) break;
      ssize_t n = ::recv(fd, buf.data(), buf.size(), 0);
      if (n <= 0) continue;
      try {
        auto msg = wire::decode({buf.data(), static_cast<size_t>(n)});
        if (msg.header.id != id || !msg.header.qr) continue;
        QueryResult r;
        r.rcode = msg.header.rcode;
        r.authoritative = msg.header.aa;
        for (const auto& rr : msg.answers) {
          if (rr.type == wire::kTypeA && rr.rdata.size() == 4) {
            r.addresses.push_back(wire::rdata_to_ipv4(rr.rdata));
            r.ttls.push_back(rr.ttl);
          }
        }
        r.message = std::move(msg);
        ::close(fd);
        return r;
      } catch (const wire::WireError&) {
        continue;
      }
    }
  }
  ::close(fd);
  throw Error(Errc::Io, "no DNS answer from " + server.to_string() + " for " + fqdn);
}

std::optional<std::string> resolve_a(const Endpoint& server, const std::string& fqdn) {
  auto r = query(server, fqdn);
  if (r.rcode != wire::Rcode::NoError || r.addresses.empty()) return std::nullopt;
  return r.addresses.front();
}

}  // namespace dbm::dyndns
