#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace kge::text {

// NFC-normalizes UTF-8 input. Throws ValidationError on invalid UTF-8.
std::string nfc(std::string_view utf8);

// Strips leading/trailing Unicode whitespace.
std::string trim(std::string_view utf8);

// Simple (per code point) lowercase mapping; uncased characters unchanged.
std::string lowercase(std::string_view utf8);

// Splits on whitespace; punctuation and symbols become single-code-point words.
std::vector<std::string> split_words(std::string_view utf8);

// Decodes into code points (as UTF-8 substrings), one entry per code point.
std::vector<std::string> code_points(std::string_view utf8);

std::vector<std::string_view> split(std::string_view line, char sep);

}  // namespace kge::text
