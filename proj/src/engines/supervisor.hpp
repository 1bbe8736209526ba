#pragma once

#include <sys/types.h>

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dbm::engines {

namespace fs = std::filesystem;

struct SpawnSpec {
  std::string service;
  fs::path executable;
  std::vector<std::string> args;
  /// The daemon's stderr.
  fs::path log_file;
  /// Written after a successful start so a restarted service can find the
  /// process again (force-stop of orphans).
  fs::path pid_file;
  std::chrono::milliseconds ready_timeout = std::chrono::seconds(15);
};

enum class StopOutcome { Clean, Killed, AlreadyDead };

/// A child daemon. Destruction does not stop the process.
class DaemonProcess {
 public:
  /// Starts the process and waits for "READY". Throws AuthMismatch when the
  /// daemon reports it, DependencyStartFailed otherwise.
  static DaemonProcess spawn(const SpawnSpec& spec);

  const std::string& service() const { return service_; }
  pid_t pid() const { return pid_; }
  bool alive();
  /// SIGTERM, wait `grace`, then SIGKILL. Second call returns AlreadyDead.
  StopOutcome stop(std::chrono::milliseconds grace = std::chrono::seconds(5));

 private:
  std::string service_;
  pid_t pid_ = -1;
  fs::path pid_file_;
  bool reaped_ = false;
};

/// For processes that are not our children (left behind by a crashed
/// service): checks /proc that the pid still runs an engine daemon, then
/// terminates it. Returns false when nothing was running.
bool terminate_pid_file(const fs::path& pid_file,
                        std::chrono::milliseconds grace = std::chrono::seconds(5));

}  // namespace dbm::engines
