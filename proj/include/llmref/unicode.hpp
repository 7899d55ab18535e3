#pragma once

#include <string>
#include <string_view>
#include <vector>

// Thin UTF-8 helpers on top of ICU. Invalid byte sequences decode to U+FFFD.
namespace llmref::unicode {

std::vector<char32_t> decode(std::string_view utf8);
std::string encode(char32_t cp);
std::string encode(const std::vector<char32_t>& cps);

std::string nfc(std::string_view utf8);
std::string to_lower(std::string_view utf8);

bool is_whitespace(char32_t cp);
// Unicode general category P* or S* (so "$" and "+" split like ".").
bool is_punctuation(char32_t cp);

}  // namespace llmref::unicode
