#include "engines/daemon.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <condition_variable>
#include <cstdio>
#include <cstring>
#include <memory>
#include <mutex>
#include <set>
#include <thread>

#include <sodium.h>

#include "common/error.hpp"
#include "common/fsutil.hpp"
#include "engines/protocol.hpp"
#include "engines/storage.hpp"

namespace dbm::engines {
namespace {

int g_signal_pipe[2] = {-1, -1};

void on_signal(int) {
  char c = 1;
  [[maybe_unused]] ssize_t n = ::write(g_signal_pipe[1], &c, 1);
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r' || s.back() == ' ')) s.pop_back();
  return s;
}

bool secrets_equal(const std::string& a, const std::string& b) {
  return a.size() == b.size() && sodium_memcmp(a.data(), b.data(), a.size()) == 0;
}

struct Session {
  std::string user;
  bool peer = false;
};

class Daemon {
 public:
  explicit Daemon(const DaemonOptions& o) : opt_(o) {}

  int run();

 private:
  bool is_authority() const { return opt_.role == "coordinator" || opt_.role == "catalog"; }
  LineSocket connect_peer();
  void serve_client(int fd);
  Reply handle(const Command& cmd, Session& s);
  Reply verify_with_authority(const std::string& user, const std::string& password);

  DaemonOptions opt_;
  std::string secret_;
  std::unique_ptr<UserStore> users_;
  std::unique_ptr<PartitionStore> partition_;

  std::mutex authority_mu_;
  LineSocket authority_;

  std::mutex clients_mu_;
  std::condition_variable clients_cv_;
  std::set<int> clients_;
  int active_ = 0;
};

LineSocket Daemon::connect_peer() {
  auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(10);
  std::string last;
  while (std::chrono::steady_clock::now() < deadline) {
    try {
      auto ip = dyndns::resolve_a(opt_.dns, opt_.peer_fqdn);
      if (ip) {
        auto sock = LineSocket::connect(*ip, opt_.peer_port);
        auto r = sock.request("PEER " + secret_);
        if (!r.ok) {
          throw Error(Errc::AuthMismatch,
                      "shared secret rejected by " + opt_.peer_fqdn + " (" + r.code + ")");
        }
        return sock;
      }
      last = opt_.peer_fqdn + " does not resolve";
    } catch (const Error& e) {
      if (e.code() == Errc::AuthMismatch) throw;
      last = e.what();
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  throw Error(Errc::EngineUnreachable, "cannot reach " + opt_.peer_fqdn + ": " + last);
}

Reply Daemon::verify_with_authority(const std::string& user, const std::string& password) {
  std::lock_guard lk(authority_mu_);
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      if (!authority_.valid()) authority_ = connect_peer();
      return authority_.request("VERIFY " + user + " " + password);
    } catch (const Error& e) {
      authority_.close();
      if (attempt == 1) return Reply::failure("EngineUnreachable", e.what());
    }
  }
  return Reply::failure("EngineUnreachable");
}

Reply Daemon::handle(const Command& cmd, Session& s) {
  const auto& v = cmd.verb;
  const auto& a = cmd.args;
  if (v == "PING") return Reply::success("PONG " + opt_.role);
  if (v == "PEER") {
    if (a.size() != 1) return Reply::failure("InvalidArgument", "usage: PEER <secret>");
    if (!secrets_equal(a[0], secret_)) return Reply::failure("AuthMismatch");
    s.peer = true;
    return Reply::success();
  }
  if (v == "AUTH") {
    if (a.size() != 2) return Reply::failure("InvalidArgument", "usage: AUTH <user> <secret>");
    bool ok = false;
    if (is_authority()) {
      ok = users_->verify(a[0], a[1]);
    } else if (opt_.role == "worker") {
      auto r = verify_with_authority(a[0], a[1]);
      if (!r.ok && r.code != "AuthFailed") return r;
      ok = r.ok;
    }
    if (!ok) return Reply::failure("AuthFailed");
    s.user = a[0];
    return Reply::success();
  }
  if (v == "VERIFY") {
    if (!is_authority()) return Reply::failure("InvalidArgument", "not an authority");
    if (!s.peer) return Reply::failure("NotAuthenticated");
    if (a.size() != 2) return Reply::failure("InvalidArgument");
    return users_->verify(a[0], a[1]) ? Reply::success() : Reply::failure("AuthFailed");
  }
  if (v == "SETPASS") {
    if (!is_authority()) return Reply::failure("InvalidArgument", "not an authority");
    if (s.user.empty()) return Reply::failure("NotAuthenticated");
    if (s.user != "root") return Reply::failure("PermissionDenied", "superuser required");
    if (a.size() != 2) return Reply::failure("InvalidArgument");
    users_->set_password(a[0], a[1]);
    return Reply::success();
  }
  if (v == "PUT" || v == "GET" || v == "COUNT") {
    if (!partition_) return Reply::failure("InvalidArgument", "no data on this role");
    if (s.user.empty()) return Reply::failure("NotAuthenticated");
    if (v == "COUNT") return Reply::success(std::to_string(partition_->size()));
    if (a.empty() || a[0].empty()) return Reply::failure("InvalidArgument", "missing key");
    if (a[0].size() > kMaxKeyBytes) return Reply::failure("InvalidArgument", "key too long");
    if (v == "GET") {
      auto val = partition_->get(a[0]);
      return val ? Reply::success(*val) : Reply::failure("KeyNotFound");
    }
    if (a.size() != 2) return Reply::failure("InvalidArgument", "usage: PUT <key> <value>");
    if (a[1].size() > kMaxValueBytes) return Reply::failure("InvalidArgument", "value too long");
    partition_->put(a[0], a[1]);
    return Reply::success();
  }
  return Reply::failure("InvalidArgument", "unknown command " + v);
}

void Daemon::serve_client(int fd) {
  LineSocket sock(fd);
  Session session;
  while (auto line = sock.read_line()) {
    Reply r;
    try {
      r = handle(parse_command(*line), session);
    } catch (const Error& e) {
      r = Reply::failure(std::string(errc_name(e.code())), e.what());
    } catch (const std::exception& e) {
      r = Reply::failure("Internal", e.what());
    }
    if (!sock.send_line(r.to_line())) break;
  }
  std::lock_guard lk(clients_mu_);
  clients_.erase(fd);
  --active_;
  clients_cv_.notify_all();
}

int Daemon::run() {
  if (::pipe2(g_signal_pipe, O_CLOEXEC) != 0) {
    std::printf("FAIL Io pipe\n");
    return 1;
  }
  struct sigaction sa{};
  sa.sa_handler = on_signal;
  ::sigaction(SIGTERM, &sa, nullptr);
  ::sigaction(SIGINT, &sa, nullptr);
  ::signal(SIGPIPE, SIG_IGN);
  sigset_t unblock;
  sigemptyset(&unblock);
  sigaddset(&unblock, SIGTERM);
  sigaddset(&unblock, SIGINT);
  ::pthread_sigmask(SIG_UNBLOCK, &unblock, nullptr);

  int listener = -1;
  try {
    auto text = fsutil::try_read_file(opt_.secret_file);
    if (!text) throw Error(Errc::AuthMismatch, "shared secret unreadable");
    secret_ = trim(*text);
    fs::create_directories(opt_.data_dir);

    if (opt_.role == "zookeeper") {
      auto epoch_file = opt_.data_dir / "epoch";
      auto text_epoch = fsutil::try_read_file(epoch_file);
      long epoch = text_epoch ? std::stol(*text_epoch) : 0;
      fsutil::write_file_atomic(epoch_file, std::to_string(epoch + 1) + "\n");
    } else if (opt_.role == "coordinator" || opt_.role == "worker") {
      authority_ = connect_peer();
      if (opt_.role == "coordinator") authority_.close();
    } else if (opt_.role != "catalog") {
      throw Error(Errc::InvalidArgument, "unknown role " + opt_.role);
    }
    if (is_authority()) {
      users_ = std::make_unique<UserStore>(opt_.users_file);
      auto su = fsutil::try_read_file(opt_.superuser_file);
      if (!su) throw Error(Errc::SuperuserAuthFailed, "superuser credential unreadable");
      if (!users_->verify("root", trim(*su))) users_->set_password("root", trim(*su));
    }
    if (opt_.role == "worker") partition_ = std::make_unique<PartitionStore>(opt_.data_dir);

    listener = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    int one = 1;
    ::setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<uint16_t>(opt_.port));
    ::inet_pton(AF_INET, opt_.bind.c_str(), &addr.sin_addr);
    if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
        ::listen(listener, 64) != 0) {
      throw Error(Errc::PortInUse, opt_.bind + ":" + std::to_string(opt_.port) + ": " +
                                       std::strerror(errno));
    }
  } catch (const Error& e) {
    std::printf("FAIL %s %s\n", std::string(errc_name(e.code())).c_str(), e.what());
    std::fflush(stdout);
    return 1;
  } catch (const std::exception& e) {
    std::printf("FAIL Internal %s\n", e.what());
    std::fflush(stdout);
    return 1;
  }

  std::printf("READY\n");
  std::fflush(stdout);

  for (;;) {
    pollfd fds[2] = {{listener, POLLIN, 0}, {g_signal_pipe[0], POLLIN, 0}};
    int rc = ::poll(fds, 2, -1);
    if (rc < 0 && errno == EINTR) continue;
    if (fds[1].revents) break;
    if (fds[0].revents & POLLIN) {
      int fd = ::accept4(listener, nullptr, nullptr, SOCK_CLOEXEC);
      if (fd < 0) continue;
      std::lock_guard lk(clients_mu_);
      clients_.insert(fd);
      ++active_;
      std::thread([this, fd] { serve_client(fd); }).detach();
    }
  }

  ::close(listener);
  {
    std::unique_lock lk(clients_mu_);
    for (int fd : clients_) ::shutdown(fd, SHUT_RDWR);
    clients_cv_.wait_for(lk, std::chrono::seconds(3), [&] { return active_ == 0; });
  }
  partition_.reset();
  return 0;
}

}  // namespace

int run_daemon(const DaemonOptions& options) {
  if (sodium_init() < 0) {
    std::printf("FAIL Internal sodium_init\n");
    return 1;
  }
  Daemon d(options);
  return d.run();
}

}  // namespace dbm::engines
