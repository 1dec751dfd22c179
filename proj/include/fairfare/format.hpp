#pragma once

#include <string>
#include <vector>

namespace fairfare {

// Fixed-point rendering in the classic locale; "-0.00" prints as "0.00".
std::string fixed(double value, int decimals);

// RFC 4180 quoting when the field needs it.
std::string csv_field(std::string const& value);

// Splits one CSV record, undoing csv_field.
std::vector<std::string> parse_csv_line(std::string const& line);

}  // namespace fairfare
