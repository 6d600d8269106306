#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace woundcare {

/// Stable machine-readable error codes shared by every module and surfaced
/// verbatim by the HTTP API and the CLI's --json mode.
enum class ErrorCode {
  invalid_argument,
  format,
  not_found,
  conflict,
  overlap_conflict,
  transition,
  incomplete_submission,
  quality_unconfirmed,
  range,
  not_confirmed,
  outside_window,
  unauthorized,
  forbidden,
  payload_too_large,
  io,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::string field = {})
      : std::runtime_error(std::move(message)), code_(code), field_(std::move(field)) {}

  ErrorCode code() const noexcept { return code_; }
  /// Dotted path of the offending input field, empty when not applicable.
  const std::string& field() const noexcept { return field_; }

 private:
  ErrorCode code_;
  std::string field_;
};

/// Container parse failure; carries the byte offset where decoding stopped.
class FormatError : public Error {
 public:
  FormatError(std::string message, std::uint64_t offset)
      : Error(ErrorCode::format, std::move(message) + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

[[noreturn]] inline void throw_invalid(std::string message) {
  throw Error(ErrorCode::invalid_argument, std::move(message));
}

}  // namespace woundcare
