#include "woundcare/error.hpp"

namespace woundcare {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::format: return "format";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::overlap_conflict: return "overlap_conflict";
    case ErrorCode::transition: return "transition";
    case ErrorCode::incomplete_submission: return "incomplete_submission";
    case ErrorCode::quality_unconfirmed: return "quality_unconfirmed";
    case ErrorCode::range: return "range";
    case ErrorCode::not_confirmed: return "not_confirmed";
    case ErrorCode::outside_window: return "outside_window";
    case ErrorCode::unauthorized: return "unauthorized";
    case ErrorCode::forbidden: return "forbidden";
    case ErrorCode::payload_too_large: return "payload_too_large";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

}  // namespace woundcare
