#include "engines/protocol.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sodium.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "common/error.hpp"
#include "common/random.hpp"

namespace dbm::engines {

Command parse_command(std::string_view line) {
  Command cmd;
  auto next_token = [&]() {
    while (!line.empty() && line.front() == ' ') line.remove_prefix(1);
    auto end = line.find(' ');
    std::string tok(line.substr(0, end));
    line.remove_prefix(end == std::string_view::npos ? line.size() : end);
    return tok;
  };
  cmd.verb = next_token();
  if (cmd.verb == "PUT") {
    cmd.args.push_back(next_token());
    if (!line.empty() && !cmd.args.back().empty()) cmd.args.emplace_back(line.substr(1));
    return cmd;
  }
  for (auto tok = next_token(); !tok.empty(); tok = next_token()) cmd.args.push_back(tok);
  return cmd;
}

Reply Reply::parse(std::string_view line) {
  Reply r;
  if (line.substr(0, 2) == "OK") {
    r.ok = true;
    if (line.size() > 3) r.payload = std::string(line.substr(3));
    return r;
  }
  if (line.substr(0, 3) == "ERR") {
    auto rest = line.size() > 4 ? line.substr(4) : std::string_view{};
    auto sp = rest.find(' ');
    r.code = std::string(rest.substr(0, sp));
    if (sp != std::string_view::npos) r.payload = std::string(rest.substr(sp + 1));
    return r;
  }
  r.code = "Internal";
  r.payload = "malformed reply: " + std::string(line);
  return r;
}

std::string Reply::to_line() const {
  if (ok) return payload.empty() ? "OK" : "OK " + payload;
  return payload.empty() ? "ERR " + code : "ERR " + code + " " + payload;
}

std::uint64_t key_hash(std::string_view key) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : key) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

int partition_for(std::string_view key, int partitions) {
  return static_cast<int>(key_hash(key) % static_cast<std::uint64_t>(partitions));
}

namespace {

std::string sha256_hex(std::string_view data) {
  unsigned char digest[crypto_hash_sha256_BYTES];
  crypto_hash_sha256(digest, reinterpret_cast<const unsigned char*>(data.data()), data.size());
  char hex[crypto_hash_sha256_BYTES * 2 + 1];
  sodium_bin2hex(hex, sizeof hex, digest, sizeof digest);
  return hex;
}

}  // namespace

std::string hash_password(std::string_view password) {
  auto salt = random_hex(16);
  return salt + "$" + sha256_hex(salt + std::string(password));
}

bool verify_password(std::string_view stored, std::string_view password) {
  auto sep = stored.find('$');
  if (sep == std::string_view::npos) return false;
  auto salt = std::string(stored.substr(0, sep));
  auto expected = sha256_hex(salt + std::string(password));
  auto actual = stored.substr(sep + 1);
  return actual.size() == expected.size() &&
         sodium_memcmp(actual.data(), expected.data(), expected.size()) == 0;
}

LineSocket::~LineSocket() { close(); }

LineSocket::LineSocket(LineSocket&& other) noexcept
    : fd_(other.fd_), buffer_(std::move(other.buffer_)) {
  other.fd_ = -1;
}

LineSocket& LineSocket::operator=(LineSocket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.fd_;
    buffer_ = std::move(other.buffer_);
    other.fd_ = -1;
  }
  return *this;
}

void LineSocket::close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
  buffer_.clear();
}

LineSocket LineSocket::connect(const std::string& ip, int port, std::chrono::milliseconds timeout) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<uint16_t>(port));
  if (::inet_pton(AF_INET, ip.c_str(), &addr.sin_addr) != 1) {
    throw Error(Errc::EngineUnreachable, "bad address " + ip);
  }
  int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC | SOCK_NONBLOCK, 0);
  if (fd < 0) throw Error(Errc::EngineUnreachable, std::string("socket: ") + std::strerror(errno));
  LineSocket sock(fd);
  auto target = ip + ":" + std::to_string(port);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    if (errno != EINPROGRESS) {
      throw Error(Errc::EngineUnreachable,
                  "cannot connect to " + target + ": " + std::strerror(errno));
    }
    pollfd p{fd, POLLOUT, 0};
    int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
    int err = 0;
    socklen_t len = sizeof err;
    if (rc <= 0) throw Error(Errc::EngineUnreachable, "connect timeout to " + target);
    ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) {
      throw Error(Errc::EngineUnreachable,
                  "cannot connect to " + target + ": " + std::strerror(err));
    }
  }
  ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) & ~O_NONBLOCK);
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return sock;
}

bool LineSocket::send_line(std::string_view line) {
  std::string buf(line);
  buf.push_back('\n');
  std::string_view rest = buf;
  while (!rest.empty()) {
    ssize_t n = ::send(fd_, rest.data(), rest.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    rest.remove_prefix(static_cast<size_t>(n));
  }
  return true;
}

std::optional<std::string> LineSocket::read_line(std::chrono::milliseconds timeout) {
  auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return line;
    }
    if (buffer_.size() > kMaxLineBytes) return std::nullopt;
    if (timeout.count() >= 0) {
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return std::nullopt;
      pollfd p{fd_, POLLIN, 0};
      int rc = ::poll(&p, 1, static_cast<int>(left.count()));
      if (rc < 0 && errno == EINTR) continue;
      if (rc <= 0) return std::nullopt;
    }
    char chunk[16384];
    ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return std::nullopt;
    buffer_.append(chunk, static_cast<size_t>(n));
  }
}

Reply LineSocket::request(std::string_view line, std::chrono::milliseconds timeout) {
  if (!send_line(line)) throw Error(Errc::EngineUnreachable, "connection lost");
  auto reply = read_line(timeout);
  if (!reply) throw Error(Errc::EngineUnreachable, "no reply from engine");
  return Reply::parse(*reply);
}

}  // namespace dbm::engines
