#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace dbm {

/// Every failure the orchestrator can report. The same code travels through
/// the C++ core, the C API, the HTTP gateway and the CLI exit status.
enum class Errc {
  InvalidArgument,
  InvalidName,
  InvalidNodeCount,
  DuplicateName,
  NotFound,
  WrongCurrentStatus,
  IllegalEdge,
  PermissionDenied,
  Unauthenticated,
  InsufficientResources,
  InvalidQueue,
  WrongPhase,
  EngineInitFailed,
  NotEmpty,
  ArchiveFailed,
  ArchiveCorrupt,
  CheckpointNotFound,
  SourceMissing,
  DestinationUnwritable,
  PartialCopy,
  InsufficientScratch,
  TtlTooHigh,
  PortInUse,
  AlreadyProvisioned,
  EngineUnreachable,
  SuperuserAuthFailed,
  NoKeyYet,
  UserNotInGroup,
  DependencyStartFailed,
  AuthMismatch,
  StopTimeout,
  AuthFailed,
  NotAuthenticated,
  KeyNotFound,
  Orphaned,
  Io,
  Internal,
};

/// Coarse outcome classes shared by HTTP status families and CLI exit codes.
enum class ErrorClass : int {
  Ok = 0,
  Usage = 2,
  Permission = 3,
  WrongStatus = 4,
  Resources = 5,
  Internal = 6,
};

std::string_view errc_name(Errc code);
Errc errc_from_name(std::string_view name);
ErrorClass error_class(Errc code);
int http_status(Errc code);
ErrorClass error_class_from_http(int status);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message, nlohmann::json details = nlohmann::json::object())
      : std::runtime_error(message), code_(code), details_(std::move(details)) {}

  Errc code() const noexcept { return code_; }
  const nlohmann::json& details() const noexcept { return details_; }

  /// {"code": "...", "message": "...", "details": {...}}
  nlohmann::json to_json() const;

 private:
  Errc code_;
  nlohmann::json details_;
};

}  // namespace dbm
