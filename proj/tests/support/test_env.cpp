#include "support/test_env.hpp"

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "common/fsutil.hpp"

#include <sodium.h>

extern char** environ;

namespace dbm::testing {

nlohmann::json default_identities() {
  return {{"users",
           {{"root", {{"groups", {"admins"}}, {"admin", true}}},
            {"alice", {{"groups", {"secgroup"}}, {"admin", true}}},
            {"bob", {{"groups", {"secgroup"}}, {"admin", false}}},
            {"carol", {{"groups", {"othergroup"}}, {"admin", false}}},
            {"dave", {{"groups", {"secgroup"}}, {"admin", false}}}}}};
}

NetSlot allocate_net_slot() {
  static std::mt19937 rng(std::random_device{}() ^ static_cast<unsigned>(::getpid()));
  std::uniform_int_distribution<int> octet(1, 250);
  std::uniform_int_distribution<int> port(200, 580);
  return {"127.64." + std::to_string(octet(rng)) + ".0", port(rng) * 100};
}

fs::path engine_daemon_path() { return DBM_TEST_ENGINED; }
fs::path cli_path() { return DBM_TEST_CLI; }

TestEnv::TestEnv(int nodes, std::string prefix) : nodes_(nodes), slot_(allocate_net_slot()) {
  std::random_device rd;
  root_ = fs::temp_directory_path() /
          (prefix + "-" + std::to_string(::getpid()) + "-" + std::to_string(rd()));
  fs::create_directories(root_);
  fsutil::write_json_atomic(root_ / "identities.json", default_identities());
}

TestEnv::~TestEnv() {
  if (std::getenv("DBM_KEEP_TEST_STATE")) return;
  std::error_code ec;
  fs::remove_all(root_, ec);
}

lifecycle::LifecycleOptions TestEnv::options() const {
  lifecycle::LifecycleOptions o;
  o.registry_root = root_ / "registry";
  o.central_root = root_ / "central";
  o.keys_root = root_ / "keys";
  o.identity_file = root_ / "identities.json";
  o.cluster.nodes = nodes_;
  o.cluster.cluster_root = root_ / "cluster";
  o.cluster.ip_base = slot_.ip_base;
  o.dns.store_dir = root_ / "dns";
  o.dns.udp_port = 0;
  o.dns.http_port = 0;
  o.engine_daemon = engine_daemon_path();
  o.engine_base_port = slot_.engine_base_port;
  o.stop_grace = std::chrono::seconds(3);
  return o;
}

nlohmann::json TestEnv::service_config() const {
  return {{"state_root", root_.string()},
          {"cluster", {{"nodes", nodes_}, {"ip_base", slot_.ip_base}}},
          {"dns", {{"udp_port", 0}, {"http_port", 0}}},
          {"gateway", {{"bind", "127.0.0.1"}, {"port", 0}}},
          {"engine_base_port", slot_.engine_base_port},
          {"engine_daemon", engine_daemon_path().string()},
          {"stop_grace_ms", 3000}};
}

fs::path TestEnv::write_service_config(const nlohmann::json& extra) const {
  auto cfg = service_config();
  cfg.merge_patch(extra);
  auto path = root_ / "service.json";
  fsutil::write_json_atomic(path, cfg);
  return path;
}

namespace {

std::string drain(int fd) {
  std::string s;
  char buf[4096];
  for (;;) {
    ssize_t n = ::read(fd, buf, sizeof buf);
    if (n > 0) {
      s.append(buf, static_cast<size_t>(n));
    } else if (n < 0 && errno == EINTR) {
      continue;
    } else {
      break;
    }
  }
  return s;
}

std::vector<std::string> merged_env(const std::map<std::string, std::string>& extra) {
  std::map<std::string, std::string> env;
  for (char** e = environ; *e; ++e) {
    std::string kv(*e);
    auto eq = kv.find('=');
    if (eq != std::string::npos) env[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  for (const auto& [k, v] : extra) env[k] = v;
  std::vector<std::string> out;
  for (const auto& [k, v] : env) out.push_back(k + "=" + v);
  return out;
}

pid_t spawn(const std::vector<std::string>& argv, const std::map<std::string, std::string>& env,
            int out_fd, int err_fd) {
  posix_spawn_file_actions_t fa;
  posix_spawn_file_actions_init(&fa);
  posix_spawn_file_actions_addopen(&fa, 0, "/dev/null", O_RDONLY, 0);
  posix_spawn_file_actions_adddup2(&fa, out_fd, 1);
  posix_spawn_file_actions_adddup2(&fa, err_fd, 2);
  auto envs = merged_env(env);
  std::vector<char*> cargv, cenv;
  for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
  cargv.push_back(nullptr);
  for (const auto& e : envs) cenv.push_back(const_cast<char*>(e.c_str()));
  cenv.push_back(nullptr);
  pid_t pid = -1;
  int rc = posix_spawn(&pid, cargv[0], &fa, nullptr, cargv.data(), cenv.data());
  posix_spawn_file_actions_destroy(&fa);
  if (rc != 0) throw std::runtime_error("spawn failed: " + argv[0]);
  return pid;
}

int wait_status(pid_t pid) {
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  return 128 + WTERMSIG(status);
}

}  // namespace

ProcResult run_process(const std::vector<std::string>& argv,
                       const std::map<std::string, std::string>& env) {
  // Temp files rather than pipes: no deadlock on large output.
  char out_tmpl[] = "/tmp/dbm-proc-out-XXXXXX";
  char err_tmpl[] = "/tmp/dbm-proc-err-XXXXXX";
  int out_fd = ::mkstemp(out_tmpl);
  int err_fd = ::mkstemp(err_tmpl);
  ::unlink(out_tmpl);
  ::unlink(err_tmpl);
  ProcResult r;
  pid_t pid = spawn(argv, env, out_fd, err_fd);
  r.exit_code = wait_status(pid);
  ::lseek(out_fd, 0, SEEK_SET);
  ::lseek(err_fd, 0, SEEK_SET);
  r.out = drain(out_fd);
  r.err = drain(err_fd);
  ::close(out_fd);
  ::close(err_fd);
  return r;
}

ServeProcess::ServeProcess(const fs::path& config, const fs::path& workdir) {
  auto port_file = workdir / "serve.port";
  fs::remove(port_file);
  int log_fd = ::open((workdir / "serve.log").c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  pid_ = spawn({cli_path().string(), "serve", "--config", config.string(), "--port-file",
                port_file.string()},
               {}, log_fd, log_fd);
  ::close(log_fd);
  auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(20);
  while (std::chrono::steady_clock::now() < deadline) {
    if (auto text = fsutil::try_read_file(port_file); text && !text->empty()) {
      http_port_ = std::stoi(*text);
      return;
    }
    int status = 0;
    if (::waitpid(pid_, &status, WNOHANG) == pid_) {
      pid_ = -1;
      throw std::runtime_error("dbm serve exited early; see " + (workdir / "serve.log").string());
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  kill_hard();
  throw std::runtime_error("dbm serve did not report a port");
}

ServeProcess::~ServeProcess() {
  if (pid_ > 0) terminate();
}

void ServeProcess::kill_hard() {
  if (pid_ <= 0) return;
  ::kill(pid_, SIGKILL);
  wait_status(pid_);
  pid_ = -1;
}

int ServeProcess::terminate() {
  if (pid_ <= 0) return -1;
  ::kill(pid_, SIGTERM);
  int rc = wait_status(pid_);
  pid_ = -1;
  return rc;
}

std::map<std::string, std::string> hash_tree(const fs::path& root,
                                             const std::set<std::string>& skip_top) {
  std::map<std::string, std::string> out;
  for (auto it = fs::recursive_directory_iterator(root); it != fs::recursive_directory_iterator();
       ++it) {
    auto rel = it->path().lexically_relative(root).generic_string();
    auto top = rel.substr(0, rel.find('/'));
    if (skip_top.count(top)) {
      if (it->is_directory() && !it->is_symlink()) it.disable_recursion_pending();
      continue;
    }
    auto st = it->symlink_status();
    char mode[8];
    std::snprintf(mode, sizeof mode, "%04o", static_cast<unsigned>(st.permissions()) & 07777);
    if (fs::is_symlink(st)) {
      out[rel] = std::string("link ") + fs::read_symlink(it->path()).string();
    } else if (fs::is_directory(st)) {
      out[rel] = std::string("dir ") + mode;
    } else {
      auto data = fsutil::read_file(it->path());
      unsigned char digest[crypto_hash_sha256_BYTES];
      crypto_hash_sha256(digest, reinterpret_cast<const unsigned char*>(data.data()), data.size());
      char hex[crypto_hash_sha256_BYTES * 2 + 1];
      sodium_bin2hex(hex, sizeof hex, digest, sizeof digest);
      out[rel] = std::string("file ") + mode + " " + hex;
    }
  }
  return out;
}

std::uint64_t make_random_tree(const fs::path& root, std::mt19937_64& rng, const TreeShape& shape) {
  fs::create_directories(root);
  std::vector<fs::path> dirs{root};
  std::uniform_int_distribution<int> files_dist(0, shape.max_files);
  int files = files_dist(rng);
  std::uint64_t budget = shape.max_total_bytes;
  std::uint64_t total = 0;
  for (int i = 0; i < files; ++i) {
    // Occasionally open a new subdirectory below an existing one.
    if (rng() % 5 == 0) {
      auto parent = dirs[rng() % dirs.size()];
      if (static_cast<int>(std::distance(parent.lexically_relative(root).begin(),
                                         parent.lexically_relative(root).end())) < shape.max_depth) {
        auto d = parent / ("d" + std::to_string(i));
        fs::create_directories(d);
        dirs.push_back(d);
      }
    }
    auto dir = dirs[rng() % dirs.size()];
    auto path = dir / ("f" + std::to_string(i) + (rng() % 3 == 0 ? ".dat" : ""));
    std::uint64_t cap = budget / static_cast<std::uint64_t>(std::max(1, files - i));
    std::uint64_t size = rng() % 7 == 0 ? 0 : rng() % (2 * cap + 1);
    size = std::min(size, budget);
    budget -= size;
    std::string data(size, '\0');
    for (auto& c : data) c = static_cast<char>(rng());
    fsutil::write_file_atomic(path, data);
    total += size;
    if (shape.odd_modes) {
      static const fs::perms modes[] = {fs::perms(0644), fs::perms(0600), fs::perms(0755),
                                        fs::perms(0640), fs::perms(0444)};
      fs::permissions(path, modes[rng() % 5], fs::perm_options::replace);
    }
    if (shape.symlinks && rng() % 9 == 0) {
      fs::create_symlink(path.filename(), dir / ("l" + std::to_string(i)));
    }
  }
  if (shape.odd_modes && dirs.size() > 1) {
    fs::permissions(dirs.back(), fs::perms(0750), fs::perm_options::replace);
  }
  return total;
}

void put_file(const fs::path& path, std::string_view data, std::optional<fs::perms> perms) {
  fs::create_directories(path.parent_path());
  fsutil::write_file_atomic(path, data, perms);
}

std::vector<fs::path> files_containing(const fs::path& dir, const std::string& needle) {
  std::vector<fs::path> hits;
  std::error_code ec;
  for (auto it = fs::recursive_directory_iterator(dir, fs::directory_options::skip_permission_denied, ec);
       it != fs::recursive_directory_iterator(); it.increment(ec)) {
    if (ec) break;
    if (!it->is_regular_file(ec)) continue;
    auto text = fsutil::try_read_file(it->path());
    if (text && text->find(needle) != std::string::npos) hits.push_back(it->path());
  }
  return hits;
}

}  // namespace dbm::testing
