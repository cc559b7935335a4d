#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mdds {

enum class ErrorCode {
  invalid_argument,
  parse_error,
  schema_error,
  type_mismatch,
  out_of_range,
  pool_exhausted,
  corrupt_segment,
  unknown_record_type,
  not_found,
  io_error,
};

std::string_view to_string(ErrorCode code);

/// Every failure surfaced by the library is an Error carrying a code, so
/// callers (and the fuzz tests) can tell a structured rejection apart from
/// a crash or an unrelated exception.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Query-text errors keep the byte offset of the offending token.
class ParseError : public Error {
 public:
  ParseError(std::size_t position, const std::string& message)
      : Error(ErrorCode::parse_error,
              message + " (at offset " + std::to_string(position) + ")"),
        position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

}  // namespace mdds
