#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace dsq::text {

std::string_view trim(std::string_view s);
std::string collapse_whitespace(std::string_view s);
std::string to_lower(std::string_view s);

bool is_blank(std::string_view s);
bool starts_with_icase(std::string_view s, std::string_view prefix);

/// First line containing something other than whitespace, trimmed.
std::string first_nonempty_line(std::string_view s);

std::vector<std::string> split_words(std::string_view s);

/// Lowercased alphanumeric tokens (ASCII letters/digits, other bytes split).
std::vector<std::string> tokenize(std::string_view s);

/// Largest prefix of at most max_bytes that does not cut a UTF-8 sequence.
std::string_view utf8_prefix(std::string_view s, std::size_t max_bytes);

/// Moves pos backwards onto a UTF-8 lead byte.
std::size_t utf8_floor(std::string_view s, std::size_t pos);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace dsq::text
