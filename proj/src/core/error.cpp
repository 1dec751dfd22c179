#include "fairfare/error.hpp"

namespace fairfare {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::bad_request: return "bad_request";
    case ErrorCode::validation: return "validation";
    case ErrorCode::unauthorized: return "unauthorized";
    case ErrorCode::forbidden: return "forbidden";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::gone: return "gone";
    case ErrorCode::locked: return "locked";
    case ErrorCode::contract_violation: return "contract_violation";
    case ErrorCode::unavailable: return "unavailable";
  }
  return "unknown";
}

}  // namespace fairfare
