#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "common/timeutil.hpp"

namespace dbm::registry {

/// The five lifecycle statuses shown on the portal.
enum class StatusValue { Stopped, Starting, Started, Stopping, Checkpointing };

inline constexpr StatusValue kAllStatuses[] = {StatusValue::Stopped, StatusValue::Starting,
                                               StatusValue::Started, StatusValue::Stopping,
                                               StatusValue::Checkpointing};

std::string_view to_string(StatusValue v);
StatusValue status_from_string(std::string_view s);

/// True iff (from -> to) is one of the seven permitted edges.
bool is_permitted_edge(StatusValue from, StatusValue to);

bool is_transient(StatusValue v);

enum class Action { Start, Stop, Checkpoint, ViewInfo };

std::string_view to_string(Action a);
Action action_from_string(std::string_view s);

/// Buttons the portal shows for a status. Pure function of the status.
std::vector<Action> permitted_actions(StatusValue v);
bool action_permitted(StatusValue v, Action a);

struct DatabaseStatus {
  StatusValue value = StatusValue::Stopped;
  timeutil::TimePoint since{};
  std::optional<std::string> job_id;
  std::optional<std::string> started_by;

  nlohmann::json to_json() const;
  static DatabaseStatus from_json(const nlohmann::json& j);
};

bool operator==(const DatabaseStatus& a, const DatabaseStatus& b);

}  // namespace dbm::registry
