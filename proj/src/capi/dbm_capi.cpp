#include "dbm/dbm.h"

#include <cstdlib>
#include <cstring>
#include <functional>
#include <memory>
#include <string>
#include <thread>

#include "common/error.hpp"
#include "gateway/api.hpp"
#include "gateway/config.hpp"
#include "gateway/http_client.hpp"
#include "gateway/session.hpp"
#include "lifecycle/orchestrator.hpp"
#include "migrate/benchmark.hpp"

struct dbm_service {
  dbm::gateway::ServiceConfig config;
  std::unique_ptr<dbm::lifecycle::Orchestrator> orchestrator;
  std::unique_ptr<dbm::gateway::SessionIssuer> sessions;
  std::unique_ptr<dbm::gateway::ApiServer> api;
};

struct dbm_client {
  std::unique_ptr<dbm::gateway::HttpClient> http;
};

namespace {

using dbm::Errc;
using dbm::Error;
using nlohmann::json;

thread_local std::string t_code;
thread_local std::string t_message;
thread_local std::string t_details = "{}";

dbm_status set_error(const Error& e) {
  t_code = std::string(dbm::errc_name(e.code()));
  t_message = e.what();
  t_details = e.details().dump();
  return static_cast<dbm_status>(dbm::error_class(e.code()));
}

dbm_status guard(const std::function<void()>& fn) {
  t_code.clear();
  t_message.clear();
  t_details = "{}";
  try {
    fn();
    return DBM_OK;
  } catch (const Error& e) {
    return set_error(e);
  } catch (const std::exception& e) {
    return set_error(Error(Errc::Internal, e.what()));
  }
}

char* dup(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void emit(char** out, const json& j) {
  if (out) *out = dup(j.dump());
}

std::string req(const char* s, const char* what) {
  if (!s || !*s) throw Error(Errc::InvalidArgument, std::string("missing ") + what);
  return s;
}

dbm::gateway::HttpClient& client_of(dbm_client* c) {
  if (!c || !c->http) throw Error(Errc::InvalidArgument, "null client");
  return *c->http;
}

std::string db_path(const std::string& name) { return "/databases/" + name; }

/// Polls View Info until the status leaves the transient states.
json wait_settled(dbm::gateway::HttpClient& http, const std::string& name) {
  auto deadline = std::chrono::steady_clock::now() + std::chrono::minutes(5);
  for (;;) {
    auto info = http.call("GET", db_path(name));
    auto status = info["status"].value("value", "");
    if (status == "stopped" || status == "started") return info;
    if (std::chrono::steady_clock::now() >= deadline) {
      throw Error(Errc::Internal, name + " did not settle; still " + status);
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

json action(dbm::gateway::HttpClient& http, const std::string& name, const std::string& what) {
  return http.call("POST", db_path(name) + "/actions", {{"action", what}});
}

[[noreturn]] void settled_wrong(const json& info, const std::string& name, Errc code,
                                const std::string& expected) {
  std::string detail = info.value("last_error", std::string("no detail recorded"));
  throw Error(code, name + " settled " + info["status"].value("value", "?") + " instead of " +
                        expected + ": " + detail,
              {{"status", info["status"]}});
}

}  // namespace

extern "C" {

const char* dbm_version(void) { return "0.1.0"; }
const char* dbm_last_error_code(void) { return t_code.c_str(); }
const char* dbm_last_error_message(void) { return t_message.c_str(); }
const char* dbm_last_error_details(void) { return t_details.c_str(); }
void dbm_string_free(char* s) { std::free(s); }

dbm_status dbm_service_open(const char* config_path, dbm_service** out) {
  return guard([&] {
    if (!out) throw Error(Errc::InvalidArgument, "null out pointer");
    auto svc = std::make_unique<dbm_service>();
    svc->config = dbm::gateway::ServiceConfig::load(req(config_path, "config path"));
    svc->orchestrator = std::make_unique<dbm::lifecycle::Orchestrator>(svc->config.lifecycle);
    svc->sessions = std::make_unique<dbm::gateway::SessionIssuer>(
        svc->config.session_key_file, svc->orchestrator->identities());
    svc->api = std::make_unique<dbm::gateway::ApiServer>(*svc->orchestrator, *svc->sessions,
                                                         svc->config.http_bind,
                                                         svc->config.http_port);
    *out = svc.release();
  });
}

int dbm_service_http_port(const dbm_service* s) { return s && s->api ? s->api->port() : 0; }

int dbm_service_dns_port(const dbm_service* s) {
  return s && s->orchestrator ? s->orchestrator->dns_endpoint().port : 0;
}

int dbm_service_dns_http_port(const dbm_service* s) {
  return s && s->orchestrator ? s->orchestrator->dns_http_port() : 0;
}

void dbm_service_close(dbm_service* s) {
  if (!s) return;
  if (s->api) s->api->stop();
  s->api.reset();
  s->orchestrator.reset();
  delete s;
}

dbm_status dbm_client_open(const char* url, const char* user, dbm_client** out) {
  return guard([&] {
    if (!out) throw Error(Errc::InvalidArgument, "null out pointer");
    auto c = std::make_unique<dbm_client>();
    c->http = std::make_unique<dbm::gateway::HttpClient>(req(url, "service URL"));
    c->http->login(req(user, "user"));
    *out = c.release();
  });
}

void dbm_client_close(dbm_client* c) { delete c; }

dbm_status dbm_db_create(dbm_client* c, const char* engine, int num_nodes, const char* name,
                         const char* group, const char* engine_version, char** out_json) {
  return guard([&] {
    json body{{"engine", req(engine, "engine")},
              {"num_nodes", num_nodes},
              {"name", req(name, "name")},
              {"group", req(group, "group")}};
    if (engine_version && *engine_version) body["engine_version"] = engine_version;
    emit(out_json, client_of(c).call("POST", "/databases", body));
  });
}

dbm_status dbm_db_start(dbm_client* c, const char* name, int wait, char** out_json) {
  return guard([&] {
    auto& http = client_of(c);
    auto n = req(name, "name");
    auto accepted = action(http, n, "start");
    if (!wait) return emit(out_json, accepted);
    auto info = wait_settled(http, n);
    if (info["status"].value("value", "") != "started") {
      settled_wrong(info, n, Errc::DependencyStartFailed, "started");
    }
    emit(out_json, info);
  });
}

dbm_status dbm_db_stop(dbm_client* c, const char* name, int force, int wait, char** out_json) {
  return guard([&] {
    auto& http = client_of(c);
    auto n = req(name, "name");
    if (force) return emit(out_json, http.call("POST", db_path(n) + "/force-stop"));
    auto accepted = action(http, n, "stop");
    if (!wait) return emit(out_json, accepted);
    auto info = wait_settled(http, n);
    if (info["status"].value("value", "") != "stopped") {
      settled_wrong(info, n, Errc::Internal, "stopped");
    }
    emit(out_json, info);
  });
}

dbm_status dbm_db_checkpoint(dbm_client* c, const char* name, int wait, char** out_json) {
  return guard([&] {
    auto& http = client_of(c);
    auto n = req(name, "name");
    auto accepted = action(http, n, "checkpoint");
    if (!wait) return emit(out_json, accepted);
    auto id = accepted["checkpoint"].value("id", "");
    wait_settled(http, n);
    for (const auto& cp : http.call("GET", db_path(n) + "/checkpoints")) {
      if (cp.value("id", "") == id && cp.value("complete", false)) return emit(out_json, cp);
    }
    auto info = http.call("GET", db_path(n));
    throw Error(Errc::ArchiveFailed, "checkpoint " + id + " was not written: " +
                                         info.value("last_error", std::string("unknown cause")));
  });
}

dbm_status dbm_db_list_checkpoints(dbm_client* c, const char* name, char** out_json) {
  return guard([&] {
    emit(out_json, client_of(c).call("GET", db_path(req(name, "name")) + "/checkpoints"));
  });
}

dbm_status dbm_db_restore(dbm_client* c, const char* name, const char* checkpoint_id,
                          char** out_json) {
  return guard([&] {
    emit(out_json, client_of(c).call("POST", db_path(req(name, "name")) + "/restore",
                                     {{"checkpoint", req(checkpoint_id, "checkpoint id")}}));
  });
}

dbm_status dbm_db_status(dbm_client* c, const char* name, char** out_json) {
  return guard([&] {
    auto& http = client_of(c);
    emit(out_json, name && *name ? http.call("GET", db_path(name)) : http.call("GET", "/databases"));
  });
}

dbm_status dbm_db_access_key(dbm_client* c, const char* name, char** out_key) {
  return guard([&] {
    auto j = client_of(c).call("GET", db_path(req(name, "name")) + "/accesskey");
    if (out_key) *out_key = dup(j.at("key").get<std::string>());
  });
}

dbm_status dbm_db_revoke(dbm_client* c, const char* name, const char* user, char** out_json) {
  return guard([&] {
    emit(out_json, client_of(c).call("POST", db_path(req(name, "name")) + "/revoke",
                                     {{"user", req(user, "user")}}));
  });
}

dbm_status dbm_job_cancel(dbm_client* c, const char* job_id) {
  return guard([&] { client_of(c).call("POST", "/jobs/" + req(job_id, "job id") + "/cancel"); });
}

dbm_status dbm_cluster_info(dbm_client* c, char** out_json) {
  return guard([&] { emit(out_json, client_of(c).call("GET", "/cluster")); });
}

dbm_status dbm_request(dbm_client* c, const char* method, const char* path,
                       const char* body_json, int* http_status, char** out_json) {
  return guard([&] {
    json body = nullptr;
    if (body_json && *body_json) {
      try {
        body = json::parse(body_json);
      } catch (const json::exception& e) {
        throw Error(Errc::InvalidArgument, std::string("malformed body: ") + e.what());
      }
    }
    auto r = client_of(c).send(req(method, "method"), req(path, "path"), body);
    if (http_status) *http_status = r.status;
    emit(out_json, r.body);
    if (r.status < 200 || r.status >= 300) {
      Errc code = r.status == 0 ? Errc::Io : Errc::Internal;
      std::string message = "HTTP " + std::to_string(r.status);
      json details = json::object();
      if (r.body.is_object() && r.body.contains("error")) {
        try {
          code = dbm::errc_from_name(r.body["error"].value("code", "Internal"));
        } catch (const Error&) {
        }
        message = r.body["error"].value("message", message);
        details = r.body["error"].value("details", details);
      }
      throw Error(code, message, details);
    }
  });
}

dbm_status dbm_bench_run(const char* scratch_dir, const char* sizes, const char* modes,
                         const char* directions, int trials, char** out_csv) {
  return guard([&] {
    dbm::migrate::BenchmarkOptions opts;
    opts.scratch = req(scratch_dir, "scratch directory");
    opts.sizes_per_node = dbm::migrate::parse_size_list(req(sizes, "sizes"));
    opts.modes = dbm::migrate::parse_mode_list(modes && *modes ? modes : "single,multi:3");
    opts.directions =
        dbm::migrate::parse_direction_list(directions && *directions ? directions : "both");
    if (trials < 1) throw Error(Errc::InvalidArgument, "trials must be >= 1");
    opts.trials = trials;
    auto table = dbm::migrate::run_benchmark(opts);
    if (out_csv) *out_csv = dup(table.to_csv());
  });
}

}  // extern "C"
