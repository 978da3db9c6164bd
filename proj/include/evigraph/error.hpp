#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace evigraph {

enum class ErrorCode {
  UnknownFormat,
  MalformedRow,
  BadTimestamp,
  BadSize,
  BadIdentity,
  BadValue,
  BadMapping,
  DuplicateRecord,
  UnknownNode,
  UnknownEdge,
  IllegalTransition,
  SelfMatch,
  DuplicateEdge,
  BadRule,
  BadEnrichment,
  BadWindow,
  BadProbe,
  StorageError,
  VersionConflict,
  UnknownCase,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownFormat: return "UnknownFormat";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::BadTimestamp: return "BadTimestamp";
    case ErrorCode::BadSize: return "BadSize";
    case ErrorCode::BadIdentity: return "BadIdentity";
    case ErrorCode::BadValue: return "BadValue";
    case ErrorCode::BadMapping: return "BadMapping";
    case ErrorCode::DuplicateRecord: return "DuplicateRecord";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::UnknownEdge: return "UnknownEdge";
    case ErrorCode::IllegalTransition: return "IllegalTransition";
    case ErrorCode::SelfMatch: return "SelfMatch";
    case ErrorCode::DuplicateEdge: return "DuplicateEdge";
    case ErrorCode::BadRule: return "BadRule";
    case ErrorCode::BadEnrichment: return "BadEnrichment";
    case ErrorCode::BadWindow: return "BadWindow";
    case ErrorCode::BadProbe: return "BadProbe";
    case ErrorCode::StorageError: return "StorageError";
    case ErrorCode::VersionConflict: return "VersionConflict";
    case ErrorCode::UnknownCase: return "UnknownCase";
  }
  return "Unknown";
}

/// Structured failure raised by every evigraph operation. `line` is the
/// 1-based input line for ingestion failures and 0 otherwise.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::size_t line = 0)
      : std::runtime_error(format(code, message, line)),
        code_(code),
        line_(line),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  std::size_t line() const noexcept { return line_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  static std::string format(ErrorCode code, const std::string& message,
                            std::size_t line) {
    std::string out(to_string(code));
    if (line != 0) out += " (line " + std::to_string(line) + ")";
    out += ": ";
    out += message;
    return out;
  }

  ErrorCode code_;
  std::size_t line_;
  std::string detail_;
};

}  // namespace evigraph
