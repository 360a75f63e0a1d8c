#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace claimcast {

// Shortest decimal form that round-trips the exact double (std::to_chars).
std::string format_double(double v);

// Strict parsers; throw parse_error with `context` on any trailing garbage.
double parse_double(std::string_view s, std::string_view context = {});
long parse_long(std::string_view s, std::string_view context = {});

// Split one CSV line on commas. Fields in this project never contain commas
// or quotes, so no quoting rules are applied.
std::vector<std::string_view> split_csv(std::string_view line);

// FNV-1a 64-bit, stable across runs and platforms. Used for stage stamps.
std::uint64_t fnv1a64(std::string_view s);
std::string to_hex(std::uint64_t v);

}  // namespace claimcast
