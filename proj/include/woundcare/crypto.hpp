#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace woundcare::crypto {

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

/// Cryptographically secure random bytes; throws ErrorCode::io if the RNG fails.
std::vector<std::uint8_t> random_bytes(std::size_t n);

/// RFC 4648 base64url without padding.
std::string base64url(std::span<const std::uint8_t> bytes);

/// 128 random bits as base64url (22 characters).
std::string random_token();

/// PBKDF2-HMAC-SHA256, hex encoded.
std::string pbkdf2_hex(std::string_view password, std::string_view salt, int iterations = 100000);

bool constant_time_equal(std::string_view a, std::string_view b);

}  // namespace woundcare::crypto
