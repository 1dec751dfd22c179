#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace fairfare::crypto {

std::string sha256_hex(std::string_view data);
std::string hmac_sha256_hex(std::string_view key, std::string_view data);

// Hex string of `bytes` bytes from the OS CSPRNG.
std::string random_hex(std::size_t bytes);

bool constant_time_equal(std::string_view a, std::string_view b);

}  // namespace fairfare::crypto
