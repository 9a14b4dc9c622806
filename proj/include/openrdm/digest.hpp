#pragma once

#include <span>
#include <string>
#include <string_view>

namespace openrdm {

/// Hex SHA-256 of a byte string. `length` truncates the hex output.
std::string sha256_hex(std::string_view bytes, std::size_t length = 64);

std::string sha256_hex(std::span<const double> values, std::size_t length = 64);

} // namespace openrdm
