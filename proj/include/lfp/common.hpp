#pragma once

// Shared error types and small text/hash helpers used across the toolkit.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lfp {

// Base of every error raised by the toolkit. Precondition violations on
// pure functions use std::invalid_argument instead.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);

// ISO-8601 UTC timestamp with second precision, e.g. 2025-03-01T12:00:00Z.
std::string utc_timestamp_now();

namespace text {

bool is_space(char c);
std::string_view trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);

// Split on runs of ASCII whitespace; no empty tokens.
std::vector<std::string> split_ws(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Collapse every whitespace run to one space and trim the ends.
std::string normalize_ws(std::string_view s);

// UTF-8 decoding. Invalid bytes decode to U+FFFD and consume one byte.
std::vector<char32_t> decode_utf8(std::string_view s);
std::string encode_utf8(char32_t cp);

// Length in bytes of the UTF-8 sequence starting at s[pos] (1 for invalid).
std::size_t utf8_seq_len(std::string_view s, std::size_t pos);

bool is_han(char32_t cp);

}  // namespace text
}  // namespace lfp
