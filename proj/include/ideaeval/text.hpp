#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ideaeval::text {

/// Byte offset of every unicode scalar in `s`, plus a trailing entry equal to
/// s.size(). Scalar offset i maps to bytes [result[i], result[i+1]).
/// Throws ValidationError on malformed UTF-8.
std::vector<std::size_t> scalar_byte_offsets(std::string_view s);

/// Number of unicode scalars in `s`.
std::size_t scalar_length(std::string_view s);

/// Substring by half-open scalar range [start, end).
std::string scalar_substr(std::string_view s, std::size_t start, std::size_t end);

bool is_unicode_whitespace(char32_t cp) noexcept;

/// Whitespace-delimited tokens; separators are the Unicode White_Space set.
std::vector<std::string_view> split_words(std::string_view s);

inline std::size_t word_count(std::string_view s) { return split_words(s).size(); }

/// Prefix of `s` ending after its `max_words`-th word; `s` itself when it is short enough.
std::string_view truncate_words(std::string_view s, std::size_t max_words);

std::string_view trim(std::string_view s);

std::string to_lower_ascii(std::string_view s);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

/// Raw 32-byte SHA-256.
std::vector<std::uint8_t> sha256(std::string_view data);

}  // namespace ideaeval::text
