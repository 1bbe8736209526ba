#include "engines/supervisor.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <thread>

#include "common/error.hpp"
#include "common/fsutil.hpp"

extern char** environ;

namespace dbm::engines {
namespace {

using namespace std::chrono_literals;

std::optional<std::string> read_first_line(int fd, std::chrono::milliseconds timeout) {
  std::string buf;
  auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    auto nl = buf.find('\n');
    if (nl != std::string::npos) return buf.substr(0, nl);
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) return std::nullopt;
    pollfd p{fd, POLLIN, 0};
    int rc = ::poll(&p, 1, static_cast<int>(left.count()));
    if (rc < 0 && errno == EINTR) continue;
    if (rc <= 0) return std::nullopt;
    char chunk[512];
    ssize_t n = ::read(fd, chunk, sizeof chunk);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return buf.empty() ? std::nullopt : std::optional<std::string>(buf);
    buf.append(chunk, static_cast<size_t>(n));
  }
}

/// Live and not a zombie.
bool process_running(pid_t pid) {
  auto stat = fsutil::try_read_file("/proc/" + std::to_string(pid) + "/stat");
  if (!stat) return false;
  auto close_paren = stat->rfind(')');
  if (close_paren == std::string::npos || close_paren + 2 >= stat->size()) return false;
  char state = (*stat)[close_paren + 2];
  return state != 'Z' && state != 'X';
}

}  // namespace

DaemonProcess DaemonProcess::spawn(const SpawnSpec& spec) {
  int out[2];
  if (::pipe2(out, O_CLOEXEC) != 0) {
    throw Error(Errc::Io, std::string("pipe: ") + std::strerror(errno));
  }
  posix_spawn_file_actions_t fa;
  posix_spawn_file_actions_init(&fa);
  posix_spawn_file_actions_addopen(&fa, 0, "/dev/null", O_RDONLY, 0);
  posix_spawn_file_actions_adddup2(&fa, out[1], 1);
  posix_spawn_file_actions_addopen(&fa, 2, spec.log_file.c_str(), O_WRONLY | O_CREAT | O_APPEND,
                                   0644);
#if defined(__GLIBC__) && (__GLIBC__ > 2 || (__GLIBC__ == 2 && __GLIBC_MINOR__ >= 34))
  posix_spawn_file_actions_addclosefrom_np(&fa, 3);
#endif
  posix_spawnattr_t attr;
  posix_spawnattr_init(&attr);
  sigset_t empty, defaults;
  sigemptyset(&empty);
  sigemptyset(&defaults);
  sigaddset(&defaults, SIGTERM);
  sigaddset(&defaults, SIGINT);
  sigaddset(&defaults, SIGPIPE);
  posix_spawnattr_setsigmask(&attr, &empty);
  posix_spawnattr_setsigdefault(&attr, &defaults);
  posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETSID | POSIX_SPAWN_SETSIGMASK | POSIX_SPAWN_SETSIGDEF);

  std::vector<std::string> argv_storage;
  argv_storage.push_back(spec.executable.string());
  argv_storage.insert(argv_storage.end(), spec.args.begin(), spec.args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());
  argv.push_back(nullptr);

  pid_t pid = -1;
  int rc = ::posix_spawn(&pid, spec.executable.c_str(), &fa, &attr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&fa);
  posix_spawnattr_destroy(&attr);
  ::close(out[1]);
  if (rc != 0) {
    ::close(out[0]);
    throw Error(Errc::DependencyStartFailed,
                "cannot launch " + spec.service + ": " + std::strerror(rc),
                {{"service", spec.service}});
  }

  DaemonProcess proc;
  proc.service_ = spec.service;
  proc.pid_ = pid;
  proc.pid_file_ = spec.pid_file;

  auto line = read_first_line(out[0], spec.ready_timeout);
  ::close(out[0]);
  if (line && *line == "READY") {
    if (!spec.pid_file.empty()) fsutil::write_file_atomic(spec.pid_file, std::to_string(pid) + "\n");
    return proc;
  }
  proc.stop(1s);
  std::string code = "Timeout";
  std::string message = "no readiness report from " + spec.service;
  if (line && line->rfind("FAIL ", 0) == 0) {
    auto rest = line->substr(5);
    auto sp = rest.find(' ');
    code = rest.substr(0, sp);
    message = sp == std::string::npos ? code : rest.substr(sp + 1);
  } else if (line) {
    message = "unexpected output from " + spec.service + ": " + *line;
  }
  if (code == "AuthMismatch") {
    throw Error(Errc::AuthMismatch, spec.service + ": " + message, {{"service", spec.service}});
  }
  throw Error(Errc::DependencyStartFailed, spec.service + " failed to start: " + message,
              {{"service", spec.service}, {"cause", code}});
}

bool DaemonProcess::alive() {
  if (pid_ < 0 || reaped_) return false;
  int status = 0;
  pid_t r = ::waitpid(pid_, &status, WNOHANG);
  if (r == pid_) {
    reaped_ = true;
    return false;
  }
  return r == 0;
}

StopOutcome DaemonProcess::stop(std::chrono::milliseconds grace) {
  if (!alive()) {
    std::error_code ec;
    if (!pid_file_.empty()) fs::remove(pid_file_, ec);
    return StopOutcome::AlreadyDead;
  }
  ::kill(pid_, SIGTERM);
  auto deadline = std::chrono::steady_clock::now() + grace;
  StopOutcome outcome = StopOutcome::Clean;
  while (alive()) {
    if (std::chrono::steady_clock::now() >= deadline) {
      ::kill(pid_, SIGKILL);
      int status = 0;
      ::waitpid(pid_, &status, 0);
      reaped_ = true;
      outcome = StopOutcome::Killed;
      break;
    }
    std::this_thread::sleep_for(10ms);
  }
  std::error_code ec;
  if (!pid_file_.empty()) fs::remove(pid_file_, ec);
  return outcome;
}

bool terminate_pid_file(const fs::path& pid_file, std::chrono::milliseconds grace) {
  auto text = fsutil::try_read_file(pid_file);
  std::error_code ec;
  if (!text) return false;
  pid_t pid = static_cast<pid_t>(std::stol(*text));
  auto cmdline = fsutil::try_read_file("/proc/" + std::to_string(pid) + "/cmdline");
  bool ours = cmdline && cmdline->find("dbm_engined") != std::string::npos;
  if (!ours || !process_running(pid)) {
    fs::remove(pid_file, ec);
    return false;
  }
  ::kill(pid, SIGTERM);
  auto deadline = std::chrono::steady_clock::now() + grace;
  while (process_running(pid)) {
    if (std::chrono::steady_clock::now() >= deadline) {
      ::kill(pid, SIGKILL);
      break;
    }
    std::this_thread::sleep_for(10ms);
  }
  // Our own child if the service restarted in-process; reap it quietly.
  int status = 0;
  ::waitpid(pid, &status, WNOHANG);
  fs::remove(pid_file, ec);
  return true;
}

}  // namespace dbm::engines
