#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fairfare {

// Machine-readable failure categories shared by every module. The api layer
// maps them onto HTTP statuses and the cli onto exit codes.
enum class ErrorCode {
  bad_request,
  validation,
  unauthorized,
  forbidden,
  not_found,
  conflict,
  gone,
  locked,
  contract_violation,
  unavailable,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string const& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace fairfare
