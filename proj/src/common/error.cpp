#include "common/error.hpp"

#include <array>
#include <utility>

namespace dbm {
namespace {

constexpr std::array<std::pair<Errc, std::string_view>, 37> kNames{{
    {Errc::InvalidArgument, "InvalidArgument"},
    {Errc::InvalidName, "InvalidName"},
    {Errc::InvalidNodeCount, "InvalidNodeCount"},
    {Errc::DuplicateName, "DuplicateName"},
    {Errc::NotFound, "NotFound"},
    {Errc::WrongCurrentStatus, "WrongCurrentStatus"},
    {Errc::IllegalEdge, "IllegalEdge"},
    {Errc::PermissionDenied, "PermissionDenied"},
    {Errc::Unauthenticated, "Unauthenticated"},
    {Errc::InsufficientResources, "InsufficientResources"},
    {Errc::InvalidQueue, "InvalidQueue"},
    {Errc::WrongPhase, "WrongPhase"},
    {Errc::EngineInitFailed, "EngineInitFailed"},
    {Errc::NotEmpty, "NotEmpty"},
    {Errc::ArchiveFailed, "ArchiveFailed"},
    {Errc::ArchiveCorrupt, "ArchiveCorrupt"},
    {Errc::CheckpointNotFound, "CheckpointNotFound"},
    {Errc::SourceMissing, "SourceMissing"},
    {Errc::DestinationUnwritable, "DestinationUnwritable"},
    {Errc::PartialCopy, "PartialCopy"},
    {Errc::InsufficientScratch, "InsufficientScratch"},
    {Errc::TtlTooHigh, "TtlTooHigh"},
    {Errc::PortInUse, "PortInUse"},
    {Errc::AlreadyProvisioned, "AlreadyProvisioned"},
    {Errc::EngineUnreachable, "EngineUnreachable"},
    {Errc::SuperuserAuthFailed, "SuperuserAuthFailed"},
    {Errc::NoKeyYet, "NoKeyYet"},
    {Errc::UserNotInGroup, "UserNotInGroup"},
    {Errc::DependencyStartFailed, "DependencyStartFailed"},
    {Errc::AuthMismatch, "AuthMismatch"},
    {Errc::StopTimeout, "StopTimeout"},
    {Errc::AuthFailed, "AuthFailed"},
    {Errc::NotAuthenticated, "NotAuthenticated"},
    {Errc::KeyNotFound, "KeyNotFound"},
    {Errc::Orphaned, "Orphaned"},
    {Errc::Io, "Io"},
    {Errc::Internal, "Internal"},
}};

}  // namespace

std::string_view errc_name(Errc code) {
  for (const auto& [c, name] : kNames) {
    if (c == code) return name;
  }
  return "Internal";
}

Errc errc_from_name(std::string_view name) {
  for (const auto& [c, n] : kNames) {
    if (n == name) return c;
  }
  return Errc::Internal;
}

ErrorClass error_class(Errc code) {
  switch (code) {
    case Errc::PermissionDenied:
    case Errc::Unauthenticated:
      return ErrorClass::Permission;
    case Errc::WrongCurrentStatus:
    case Errc::IllegalEdge:
    case Errc::DuplicateName:
    case Errc::WrongPhase:
    case Errc::AlreadyProvisioned:
    case Errc::Orphaned:
      return ErrorClass::WrongStatus;
    case Errc::InsufficientResources:
      return ErrorClass::Resources;
    case Errc::InvalidArgument:
    case Errc::InvalidName:
    case Errc::InvalidNodeCount:
    case Errc::InvalidQueue:
    case Errc::TtlTooHigh:
    case Errc::NotEmpty:
    case Errc::NotFound:
    case Errc::CheckpointNotFound:
    case Errc::NoKeyYet:
    case Errc::UserNotInGroup:
    case Errc::KeyNotFound:
      return ErrorClass::Usage;
    default:
      return ErrorClass::Internal;
  }
}

int http_status(Errc code) {
  switch (code) {
    case Errc::Unauthenticated:
      return 401;
    case Errc::PermissionDenied:
      return 403;
    case Errc::NotFound:
    case Errc::CheckpointNotFound:
    case Errc::NoKeyYet:
    case Errc::KeyNotFound:
      return 404;
    case Errc::InsufficientResources:
      return 503;
    default:
      break;
  }
  switch (error_class(code)) {
    case ErrorClass::WrongStatus:
      return 409;
    case ErrorClass::Usage:
      return 400;
    default:
      return 500;
  }
}

ErrorClass error_class_from_http(int status) {
  if (status >= 200 && status < 300) return ErrorClass::Ok;
  if (status == 401 || status == 403) return ErrorClass::Permission;
  if (status == 409) return ErrorClass::WrongStatus;
  if (status == 503) return ErrorClass::Resources;
  if (status >= 400 && status < 500) return ErrorClass::Usage;
  return ErrorClass::Internal;
}

nlohmann::json Error::to_json() const {
  return {{"code", std::string(errc_name(code_))}, {"message", what()}, {"details", details_}};
}

}  // namespace dbm
