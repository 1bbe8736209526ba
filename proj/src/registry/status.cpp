#include "registry/status.hpp"

#include "common/error.hpp"

namespace dbm::registry {

std::string_view to_string(StatusValue v) {
  switch (v) {
    case StatusValue::Stopped: return "stopped";
    case StatusValue::Starting: return "starting";
    case StatusValue::Started: return "started";
    case StatusValue::Stopping: return "stopping";
    case StatusValue::Checkpointing: return "checkpointing";
  }
  return "stopped";
}

StatusValue status_from_string(std::string_view s) {
  for (auto v : kAllStatuses) {
    if (to_string(v) == s) return v;
  }
  throw Error(Errc::InvalidArgument, "unknown status: " + std::string(s));
}

bool is_permitted_edge(StatusValue from, StatusValue to) {
  using S = StatusValue;
  switch (from) {
    case S::Stopped: return to == S::Starting || to == S::Checkpointing;
    case S::Starting: return to == S::Started || to == S::Stopping;
    case S::Started: return to == S::Stopping;
    case S::Stopping: return to == S::Stopped;
    case S::Checkpointing: return to == S::Stopped;
  }
  return false;
}

bool is_transient(StatusValue v) {
  return v != StatusValue::Stopped && v != StatusValue::Started;
}

std::string_view to_string(Action a) {
  switch (a) {
    case Action::Start: return "Start";
    case Action::Stop: return "Stop";
    case Action::Checkpoint: return "Checkpoint";
    case Action::ViewInfo: return "ViewInfo";
  }
  return "ViewInfo";
}

Action action_from_string(std::string_view s) {
  for (auto a : {Action::Start, Action::Stop, Action::Checkpoint, Action::ViewInfo}) {
    if (to_string(a) == s) return a;
  }
  throw Error(Errc::InvalidArgument, "unknown action: " + std::string(s));
}

std::vector<Action> permitted_actions(StatusValue v) {
  switch (v) {
    case StatusValue::Stopped: return {Action::Start, Action::Checkpoint, Action::ViewInfo};
    case StatusValue::Started: return {Action::Stop, Action::ViewInfo};
    default: return {Action::ViewInfo};
  }
}

bool action_permitted(StatusValue v, Action a) {
  for (auto p : permitted_actions(v)) {
    if (p == a) return true;
  }
  return false;
}

nlohmann::json DatabaseStatus::to_json() const {
  nlohmann::json j;
  j["value"] = std::string(to_string(value));
  j["since"] = timeutil::to_rfc3339(since);
  j["job_id"] = job_id ? nlohmann::json(*job_id) : nlohmann::json(nullptr);
  j["started_by"] = started_by ? nlohmann::json(*started_by) : nlohmann::json(nullptr);
  return j;
}

DatabaseStatus DatabaseStatus::from_json(const nlohmann::json& j) {
  DatabaseStatus s;
  s.value = status_from_string(j.at("value").get<std::string>());
  s.since = timeutil::parse_rfc3339(j.at("since").get<std::string>());
  if (j.contains("job_id") && !j["job_id"].is_null()) s.job_id = j["job_id"].get<std::string>();
  if (j.contains("started_by") && !j["started_by"].is_null()) {
    s.started_by = j["started_by"].get<std::string>();
  }
  return s;
}

bool operator==(const DatabaseStatus& a, const DatabaseStatus& b) {
  return a.value == b.value && a.since == b.since && a.job_id == b.job_id &&
         a.started_by == b.started_by;
}

}  // namespace dbm::registry
