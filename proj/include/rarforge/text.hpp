#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace rarforge {

// Lowercased alphanumeric tokens; everything else is a separator.
std::vector<std::string> tokenize(std::string_view text);

// Whether `phrase`, tokenized, occurs as a contiguous run inside `tokens`.
bool contains_phrase(const std::vector<std::string>& tokens, std::string_view phrase);

bool contains_token(const std::vector<std::string>& tokens, std::string_view token);

// FNV-1a, 64-bit. Stable across platforms, unlike std::hash.
std::uint64_t fnv1a64(std::string_view data);

std::string join(const std::vector<std::string>& parts, std::string_view separator);

}  // namespace rarforge
