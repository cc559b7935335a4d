#include "mdds/error.hpp"

namespace mdds {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::parse_error: return "parse_error";
    case ErrorCode::schema_error: return "schema_error";
    case ErrorCode::type_mismatch: return "type_mismatch";
    case ErrorCode::out_of_range: return "out_of_range";
    case ErrorCode::pool_exhausted: return "pool_exhausted";
    case ErrorCode::corrupt_segment: return "corrupt_segment";
    case ErrorCode::unknown_record_type: return "unknown_record_type";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::io_error: return "io_error";
  }
  return "unknown";
}

}  // namespace mdds
