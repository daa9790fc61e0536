#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace tracelm::unicode {

inline constexpr char32_t kReplacement = 0xFFFD;

enum class CharClass { letter, number, space, other };

/// One decoded unit of a byte string. Invalid sequences decode as a single
/// unit spanning their maximal subpart, with `valid == false`.
struct Utf8Unit {
    char32_t code_point;
    std::size_t length;
    bool valid;
};

Utf8Unit decode_utf8(std::string_view bytes, std::size_t offset);

void append_utf8(std::string& out, char32_t cp);

/// UTF-8 rendering with U+FFFD substituted for every invalid subsequence.
std::string lossy_utf8(std::string_view bytes);

bool is_valid_utf8(std::string_view bytes);

/// Classification used by the pre-tokenizer (\p{L}, \p{N}, \s).
CharClass classify(char32_t cp);

std::size_t code_point_count(std::string_view utf8);

}  // namespace tracelm::unicode
