#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace tracelm::testing {

/// Random byte strings for tokenizer properties: raw bytes, ASCII text,
/// whitespace runs, and multi-byte UTF-8 (CJK, emoji, combining marks, Cyrillic).
inline std::string random_text(std::mt19937_64& rng, std::size_t max_pieces = 12) {
    static constexpr std::array<std::string_view, 22> pieces = {
        "hello", " world", "'s", "'ll", " 42", "3.14", "  ", "\n", "\t", " \n ", "Größe", "测试",
        "😀", "👨‍👩‍👧", "e\xCC\x81", "ñ", "Привіт", "ďábel", "!?", "«»", "　", "'"};
    std::uniform_int_distribution<std::size_t> n_pieces(0, max_pieces);
    std::uniform_int_distribution<int> kind(0, 3);
    std::uniform_int_distribution<int> byte(0, 255);
    std::uniform_int_distribution<int> ascii(32, 126);
    std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1);
    std::uniform_int_distribution<int> len(1, 6);

    std::string out;
    const std::size_t n = n_pieces(rng);
    for (std::size_t i = 0; i < n; ++i) {
        switch (kind(rng)) {
            case 0:
                for (int j = len(rng); j > 0; --j) out += static_cast<char>(byte(rng));
                break;
            case 1:
                for (int j = len(rng); j > 0; --j) out += static_cast<char>(ascii(rng));
                break;
            default:
                out += pieces[pick(rng)];
                break;
        }
    }
    return out;
}

}  // namespace tracelm::testing
