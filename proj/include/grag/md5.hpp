#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace grag {

using Md5Digest = std::array<std::uint8_t, 16>;

/// RFC 1321 message digest.
Md5Digest md5(std::string_view data);

/// Lowercase 32-character hex rendering of md5(data).
std::string md5_hex(std::string_view data);

}  // namespace grag
