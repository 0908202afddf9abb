#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace reportdpo::text {

std::string to_lower(std::string_view s);
std::string to_upper(std::string_view s);
std::string trim(std::string_view s);

/// Whitespace tokenization (any run of spaces, tabs, newlines).
std::vector<std::string> split_ws(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool icontains(std::string_view haystack, std::string_view lower_needle);

/// Uppercases the first character; used when a fragment becomes a line start.
std::string capitalize_first(std::string_view s);

/// Drops trailing periods and whitespace.
std::string strip_final_period(std::string_view s);

}  // namespace reportdpo::text
