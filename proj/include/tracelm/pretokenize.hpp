#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

namespace tracelm {

/// The GPT-2 splitting pattern, verbatim. `pretokenize` is a hand-written
/// scanner equivalent to matching this expression repeatedly with a
/// backtracking engine where \p{L}, \p{N} and \s follow Unicode semantics.
inline constexpr std::string_view kGpt2SplitPattern =
    R"('s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+)";

struct ByteChunk {
    std::size_t offset;
    std::size_t length;
};

/// Splits `text` into chunks that partition it. Bytes that are not valid
/// UTF-8 are treated as members of the "other symbol" class.
std::vector<ByteChunk> pretokenize(std::string_view text);

}  // namespace tracelm
