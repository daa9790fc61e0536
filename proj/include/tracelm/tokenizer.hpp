#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace tracelm {

using TokenId = std::int32_t;

/// One token of an encoded text. Spans are half-open byte offsets into the
/// source and are absent for generated tokens.
struct TokenRecord {
    TokenId id = 0;
    std::string text;
    std::optional<std::size_t> byte_start;
    std::optional<std::size_t> byte_end;

    bool operator==(const TokenRecord&) const = default;
};

/// The standard GPT-2 byte encoder: printable bytes map to themselves, the
/// remaining 68 map in ascending order to U+0100..U+0143.
const std::array<char32_t, 256>& byte_to_unicode();

/// Byte-level BPE vocabulary with merge ranks (GPT-2 family).
///
/// Immutable after construction; encode/decode are pure and safe to call
/// concurrently.
class BpeVocab {
public:
    /// Parses vocab.json and merges.txt contents. The names are used in error
    /// messages only. Throws LoadError naming the offending entry or line.
    static BpeVocab load(std::string_view vocab_json, std::string_view merges_text,
                         std::string_view vocab_name = "vocab.json",
                         std::string_view merges_name = "merges.txt");
    static BpeVocab load_files(const std::filesystem::path& vocab_path,
                               const std::filesystem::path& merges_path);

    std::size_t size() const noexcept { return id_to_token_.size(); }
    std::size_t merge_count() const noexcept { return merges_.size(); }

    /// Token string in the byte-to-unicode alphabet.
    const std::string& token(TokenId id) const;
    /// Raw bytes the token stands for.
    const std::string& token_bytes(TokenId id) const;
    /// Lossy UTF-8 rendering of the token bytes.
    std::string display_text(TokenId id) const;

    std::optional<TokenId> find(std::string_view token) const;
    std::optional<std::size_t> merge_rank(std::string_view left, std::string_view right) const;
    const std::pair<std::string, std::string>& merge(std::size_t rank) const { return merges_.at(rank); }

    std::optional<TokenId> special(std::string_view name) const;
    const std::map<std::string, TokenId, std::less<>>& special_tokens() const noexcept { return specials_; }
    void set_special(std::string name, TokenId id);

    std::vector<TokenRecord> encode(std::string_view text) const;
    std::vector<TokenId> encode_ids(std::string_view text) const;

    /// Throws ParameterError naming the id and its position when out of range.
    std::string decode(std::span<const TokenId> ids) const;

    /// Copy that keeps the vocabulary but drops merge rules with rank >= n_merges.
    BpeVocab with_merge_limit(std::size_t n_merges) const;

private:
    struct MergeTarget {
        std::uint32_t rank;
        TokenId result;
    };

    static std::uint64_t pair_key(TokenId a, TokenId b) {
        return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
               static_cast<std::uint32_t>(b);
    }

    void apply_merges(std::vector<TokenId>& symbols) const;

    std::vector<std::string> id_to_token_;
    std::vector<std::string> id_to_bytes_;
    std::unordered_map<std::string, TokenId> token_to_id_;
    std::array<TokenId, 256> byte_token_{};
    std::vector<std::pair<std::string, std::string>> merges_;
    std::unordered_map<std::uint64_t, MergeTarget> merge_table_;
    std::map<std::string, TokenId, std::less<>> specials_;
};

}  // namespace tracelm
