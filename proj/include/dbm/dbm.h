/*
 * dbm: on-demand database lifecycle orchestration on a simulated cluster.
 *
 * Every function returns a dbm_status. On failure the calling thread's last
 * error (code name, message, JSON details) describes what happened. Strings
 * returned through char** out-parameters are heap-allocated; release them
 * with dbm_string_free(). Out-parameters may be NULL when the caller does not
 * want the result.
 */
#ifndef DBM_DBM_H
#define DBM_DBM_H

#ifdef __cplusplus
extern "C" {
#endif

#if defined(DBM_BUILDING_LIBRARY)
#define DBM_API __attribute__((visibility("default")))
#else
#define DBM_API
#endif

/* Outcome classes. The CLI uses these values as exit codes. */
typedef enum dbm_status {
  DBM_OK = 0,
  DBM_E_USAGE = 2,
  DBM_E_PERMISSION = 3,
  DBM_E_WRONG_STATUS = 4,
  DBM_E_RESOURCES = 5,
  DBM_E_INTERNAL = 6
} dbm_status;

typedef struct dbm_service dbm_service;
typedef struct dbm_client dbm_client;

DBM_API const char* dbm_version(void);

/* Error code name such as "InsufficientResources"; "" after success. */
DBM_API const char* dbm_last_error_code(void);
DBM_API const char* dbm_last_error_message(void);
/* JSON object; "{}" when there are no details. */
DBM_API const char* dbm_last_error_details(void);

DBM_API void dbm_string_free(char* s);

/* ---- Service: the orchestrator with its DNS server and HTTP API ---------- */

/* Loads the JSON configuration and starts DNS and HTTP listeners. */
DBM_API dbm_status dbm_service_open(const char* config_path, dbm_service** out);
DBM_API int dbm_service_http_port(const dbm_service* service);
DBM_API int dbm_service_dns_port(const dbm_service* service);
DBM_API int dbm_service_dns_http_port(const dbm_service* service);
/* Stops every running database (epilogs run), then the listeners. */
DBM_API void dbm_service_close(dbm_service* service);

/* ---- Client: typed calls against a running service ----------------------- */

/* Connects to e.g. "http://127.0.0.1:8080" and logs in as `user`. */
DBM_API dbm_status dbm_client_open(const char* url, const char* user, dbm_client** out);
DBM_API void dbm_client_close(dbm_client* client);

/* Administrators only. `engine_version` may be NULL for the default. */
DBM_API dbm_status dbm_db_create(dbm_client* client, const char* engine, int num_nodes,
                                 const char* name, const char* group,
                                 const char* engine_version, char** out_json);
/* With `wait`, returns once the status settles and fails if it settled in
 * the wrong state. */
DBM_API dbm_status dbm_db_start(dbm_client* client, const char* name, int wait,
                                char** out_json);
/* `force` is the administrator recovery path for orphaned databases. */
DBM_API dbm_status dbm_db_stop(dbm_client* client, const char* name, int force, int wait,
                               char** out_json);
DBM_API dbm_status dbm_db_checkpoint(dbm_client* client, const char* name, int wait,
                                     char** out_json);
DBM_API dbm_status dbm_db_list_checkpoints(dbm_client* client, const char* name,
                                           char** out_json);
DBM_API dbm_status dbm_db_restore(dbm_client* client, const char* name,
                                  const char* checkpoint_id, char** out_json);
/* `name` NULL lists visible databases; otherwise the View Info document. */
DBM_API dbm_status dbm_db_status(dbm_client* client, const char* name, char** out_json);
DBM_API dbm_status dbm_db_access_key(dbm_client* client, const char* name, char** out_key);
DBM_API dbm_status dbm_db_revoke(dbm_client* client, const char* name, const char* user,
                                 char** out_json);
DBM_API dbm_status dbm_job_cancel(dbm_client* client, const char* job_id);
DBM_API dbm_status dbm_cluster_info(dbm_client* client, char** out_json);

/* Generic request. `body_json` may be NULL. `http_status` receives the HTTP
 * status (0 when the service is unreachable). The response body is returned
 * even for error statuses. */
DBM_API dbm_status dbm_request(dbm_client* client, const char* method, const char* path,
                               const char* body_json, int* http_status, char** out_json);

/* ---- Copy benchmark (local; no service needed) --------------------------- */

/* sizes: "64MiB,256MiB"; modes: "single,multi:3"; directions: "both" or a
 * list of central_to_local/local_to_central. Writes the CSV table. */
DBM_API dbm_status dbm_bench_run(const char* scratch_dir, const char* sizes, const char* modes,
                                 const char* directions, int trials, char** out_csv);

#ifdef __cplusplus
}
#endif

#endif /* DBM_DBM_H */
