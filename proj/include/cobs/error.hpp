#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cobs {

enum class Errc {
  EmptyComponent,
  IllegalSlash,
  MalformedPath,
  UnsupportedType,
  DetectorUnavailable,
  DetectorProtocolError,
  MalformedSidecar,
  DimensionMismatch,
  ZeroVector,
  EmptyInput,
  EmbedderUnavailable,
  InvalidDocument,
  InsufficientDevices,
  InvalidRing,
  DiskFull,
  IoError,
  NotFound,
  CorruptReplica,
  QuorumFailed,
  HashMismatch,
  Unauthorized,
  Forbidden,
  BadQuery,
};

constexpr std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::EmptyComponent: return "EmptyComponent";
    case Errc::IllegalSlash: return "IllegalSlash";
    case Errc::MalformedPath: return "MalformedPath";
    case Errc::UnsupportedType: return "UnsupportedType";
    case Errc::DetectorUnavailable: return "DetectorUnavailable";
    case Errc::DetectorProtocolError: return "DetectorProtocolError";
    case Errc::MalformedSidecar: return "MalformedSidecar";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::ZeroVector: return "ZeroVector";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::EmbedderUnavailable: return "EmbedderUnavailable";
    case Errc::InvalidDocument: return "InvalidDocument";
    case Errc::InsufficientDevices: return "InsufficientDevices";
    case Errc::InvalidRing: return "InvalidRing";
    case Errc::DiskFull: return "DiskFull";
    case Errc::IoError: return "IoError";
    case Errc::NotFound: return "NotFound";
    case Errc::CorruptReplica: return "CorruptReplica";
    case Errc::QuorumFailed: return "QuorumFailed";
    case Errc::HashMismatch: return "HashMismatch";
    case Errc::Unauthorized: return "Unauthorized";
    case Errc::Forbidden: return "Forbidden";
    case Errc::BadQuery: return "BadQuery";
  }
  return "Unknown";
}

/// Every failure surfaced by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace cobs
