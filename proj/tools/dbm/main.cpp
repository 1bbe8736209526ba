#include <signal.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dbm/dbm.h"

namespace {

using nlohmann::json;

struct Globals {
  std::string url;
  std::string user;
};

int fail(dbm_status st) {
  std::fprintf(stderr, "error: %s: %s\n", dbm_last_error_code(), dbm_last_error_message());
  std::string details = dbm_last_error_details();
  if (details != "{}" && details != "null") std::fprintf(stderr, "details: %s\n", details.c_str());
  return static_cast<int>(st);
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? v : fallback;
}

/// DBM_URL, else the gateway address named in DBM_CONFIG, else the default.
std::string default_url() {
  if (const char* u = std::getenv("DBM_URL"); u && *u) return u;
  std::string bind = "127.0.0.1";
  int port = 8080;
  if (const char* cfg = std::getenv("DBM_CONFIG"); cfg && *cfg) {
    std::ifstream in(cfg);
    json j = json::parse(in, nullptr, false);
    if (j.is_object() && j.contains("gateway")) {
      bind = j["gateway"].value("bind", bind);
      port = j["gateway"].value("port", port);
    }
  }
  if (bind == "0.0.0.0") bind = "127.0.0.1";
  return "http://" + bind + ":" + std::to_string(port);
}

std::string default_user() {
  if (const char* u = std::getenv("DBM_USER"); u && *u) return u;
  if (const char* u = std::getenv("USER"); u && *u) return u;
  return "root";
}

/// Owns a client connection and a result string.
class Session {
 public:
  explicit Session(const Globals& g) { status_ = dbm_client_open(g.url.c_str(), g.user.c_str(), &c_); }
  ~Session() {
    dbm_string_free(out_);
    dbm_client_close(c_);
  }
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  bool ok() const { return status_ == DBM_OK; }
  dbm_status status() const { return status_; }
  dbm_client* get() { return c_; }
  char** out() {
    dbm_string_free(out_);
    out_ = nullptr;
    return &out_;
  }
  json result() const { return out_ ? json::parse(out_) : json(); }

 private:
  dbm_client* c_ = nullptr;
  char* out_ = nullptr;
  dbm_status status_ = DBM_OK;
};

std::string join(const json& arr) {
  std::string s;
  for (const auto& a : arr) {
    if (!s.empty()) s += " ";
    s += a.get<std::string>();
  }
  return s;
}

void print_table(const json& rows) {
  std::printf("%-20s %-22s %-14s %s\n", "Folder Name", "Type", "Status", "Actions");
  for (const auto& r : rows) {
    std::printf("%-20s %-22s %-14s %s\n", r.value("name", "").c_str(), r.value("type", "").c_str(),
                r.value("status", "").c_str(), join(r.value("actions", json::array())).c_str());
  }
}

int run_serve(const std::string& config, const std::string& port_file) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGTERM);
  sigaddset(&set, SIGINT);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  dbm_service* svc = nullptr;
  if (auto st = dbm_service_open(config.c_str(), &svc); st != DBM_OK) return fail(st);
  int http = dbm_service_http_port(svc);
  std::printf("serving http=%d dns=%d dns_http=%d\n", http, dbm_service_dns_port(svc),
              dbm_service_dns_http_port(svc));
  std::fflush(stdout);
  if (!port_file.empty()) {
    std::ofstream(port_file + ".tmp") << http << "\n";
    std::filesystem::rename(port_file + ".tmp", port_file);
  }
  int sig = 0;
  sigwait(&set, &sig);
  std::printf("shutting down\n");
  std::fflush(stdout);
  dbm_service_close(svc);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  // Invoked through a db_* symlink: treat the link name as the subcommand.
  std::vector<std::string> args(argv, argv + argc);
  auto self = std::filesystem::path(args[0]).filename().string();
  if (self.rfind("db_", 0) == 0) args.insert(args.begin() + 1, self);
  std::vector<const char*> cargv;
  for (auto& a : args) cargv.push_back(a.c_str());

  CLI::App app{"On-demand database lifecycle manager"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  g.url = default_url();
  g.user = default_user();
  app.add_option("--url", g.url, "Service URL (DBM_URL)");
  app.add_option("--as-user", g.user, "Identity to act as (DBM_USER)");

  std::string config = env_or("DBM_CONFIG", "");
  std::string port_file;
  auto* serve = app.add_subcommand("serve", "Run the orchestrator, DNS server and HTTP API");
  serve->add_option("--config", config, "Configuration file (DBM_CONFIG)");
  serve->add_option("--port-file", port_file, "Write the bound HTTP port here");

  std::string engine, name, group, version, checkpoint, target_user, job_id;
  int num_nodes = 1;
  bool no_wait = false, force = false, as_json = false, list = false;

  auto* create = app.add_subcommand("db_create", "Create a database (administrators)");
  create->add_option("engine", engine, "toy-kv (alias accumulo) or toy-tabular (alias scidb)")
      ->required();
  create->add_option("--num-nodes,-n", num_nodes, "Nodes per instance")->required();
  create->add_option("name", name)->required();
  create->add_option("group", group, "Security group allowed to use it")->required();
  create->add_option("--version", version, "Engine version string");

  auto* start = app.add_subcommand("db_start", "Start a stopped database");
  start->add_option("name", name)->required();
  start->add_flag("--no-wait", no_wait, "Return once the start is accepted");

  auto* stop = app.add_subcommand("db_stop", "Stop a started database");
  stop->add_option("name", name)->required();
  stop->add_flag("--no-wait", no_wait, "Return once the stop is accepted");
  stop->add_flag("--force", force, "Recover an orphaned database (administrators)");

  auto* ckpt = app.add_subcommand("db_checkpoint", "Archive a stopped database");
  ckpt->add_option("name", name)->required();
  ckpt->add_flag("--no-wait", no_wait, "Return once the checkpoint is accepted");
  ckpt->add_flag("--list", list, "List existing checkpoints instead");

  auto* restore = app.add_subcommand("db_restore", "Restore a checkpoint (administrators)");
  restore->add_option("name", name)->required();
  restore->add_option("checkpoint", checkpoint)->required();

  auto* status = app.add_subcommand("db_status", "List databases or show one");
  status->add_option("name", name);
  status->add_flag("--json", as_json, "Print JSON");

  auto* key = app.add_subcommand("db_key", "Print the current access key");
  key->add_option("name", name)->required();

  auto* revoke = app.add_subcommand("db_revoke", "Revoke a user's access (administrators)");
  revoke->add_option("name", name)->required();
  revoke->add_option("user", target_user)->required();

  auto* cancel = app.add_subcommand("db_cancel", "Cancel a scheduler job");
  cancel->add_option("job", job_id)->required();

  auto* cluster = app.add_subcommand("cluster", "Show node allocation");

  std::string sizes = "64MiB,256MiB", modes = "single,multi:3", directions = "both", out_file;
  std::string scratch = std::filesystem::is_directory("/dev/shm") ? "/dev/shm" : "/tmp";
  int trials = 3;
  auto* bench = app.add_subcommand("bench", "Benchmark the copy engine");
  bench->add_option("--sizes", sizes, "Bytes per node, comma separated");
  bench->add_option("--modes", modes, "single, multi, multi:<k>");
  bench->add_option("--directions", directions, "both, central_to_local, local_to_central");
  bench->add_option("--trials", trials);
  bench->add_option("--scratch", scratch, "Scratch directory");
  bench->add_option("--out", out_file, "CSV output file (default stdout)");

  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : DBM_E_USAGE;
  }

  if (serve->parsed()) {
    if (config.empty()) {
      std::fprintf(stderr, "error: no configuration (use --config or DBM_CONFIG)\n");
      return DBM_E_USAGE;
    }
    return run_serve(config, port_file);
  }

  if (bench->parsed()) {
    char* csv = nullptr;
    auto st = dbm_bench_run(scratch.c_str(), sizes.c_str(), modes.c_str(), directions.c_str(),
                            trials, &csv);
    if (st != DBM_OK) return fail(st);
    if (out_file.empty()) {
      std::fputs(csv, stdout);
    } else {
      std::ofstream(out_file) << csv;
    }
    dbm_string_free(csv);
    return 0;
  }

  Session s(g);
  if (!s.ok()) return fail(s.status());
  dbm_status st = DBM_OK;
  bool wait = !no_wait;

  if (create->parsed()) {
    st = dbm_db_create(s.get(), engine.c_str(), num_nodes, name.c_str(), group.c_str(),
                       version.empty() ? nullptr : version.c_str(), s.out());
    if (st == DBM_OK) {
      auto d = s.result();
      std::printf("created %s (%s %s)\n", name.c_str(), d.value("engine", "").c_str(),
                  d.value("engine_version", "").c_str());
    }
  } else if (start->parsed()) {
    st = dbm_db_start(s.get(), name.c_str(), wait, s.out());
    if (st == DBM_OK) std::printf("%s: %s\n", name.c_str(), s.result()["status"].dump().c_str());
  } else if (stop->parsed()) {
    st = dbm_db_stop(s.get(), name.c_str(), force, wait, s.out());
    if (st == DBM_OK) std::printf("%s\n", s.result().dump(2).c_str());
  } else if (ckpt->parsed()) {
    st = list ? dbm_db_list_checkpoints(s.get(), name.c_str(), s.out())
              : dbm_db_checkpoint(s.get(), name.c_str(), wait, s.out());
    if (st == DBM_OK && list) {
      for (const auto& c : s.result()) {
        std::printf("%s %s %s %llu%s\n", c.value("id", "").c_str(), c.value("created_at", "").c_str(),
                    c.value("created_by", "").c_str(),
                    static_cast<unsigned long long>(c.value("size_bytes", 0ULL)),
                    c.value("complete", false) ? "" : " incomplete");
      }
    } else if (st == DBM_OK) {
      auto r = s.result();
      std::printf("%s\n", r.contains("id") ? r["id"].get<std::string>().c_str() : r.dump().c_str());
    }
  } else if (restore->parsed()) {
    st = dbm_db_restore(s.get(), name.c_str(), checkpoint.c_str(), s.out());
    if (st == DBM_OK) std::printf("restored %s from %s\n", name.c_str(), checkpoint.c_str());
  } else if (status->parsed()) {
    st = dbm_db_status(s.get(), name.empty() ? nullptr : name.c_str(), s.out());
    if (st == DBM_OK) {
      if (as_json || !name.empty()) {
        std::printf("%s\n", s.result().dump(2).c_str());
      } else {
        print_table(s.result());
      }
    }
  } else if (key->parsed()) {
    char* k = nullptr;
    st = dbm_db_access_key(s.get(), name.c_str(), &k);
    if (st == DBM_OK) std::printf("%s\n", k);
    dbm_string_free(k);
  } else if (revoke->parsed()) {
    st = dbm_db_revoke(s.get(), name.c_str(), target_user.c_str(), s.out());
    if (st == DBM_OK) std::printf("%s\n", s.result().dump(2).c_str());
  } else if (cancel->parsed()) {
    st = dbm_job_cancel(s.get(), job_id.c_str());
    if (st == DBM_OK) std::printf("cancel requested for %s\n", job_id.c_str());
  } else if (cluster->parsed()) {
    st = dbm_cluster_info(s.get(), s.out());
    if (st == DBM_OK) std::printf("%s\n", s.result().dump(2).c_str());
  }
  return st == DBM_OK ? 0 : fail(st);
}
