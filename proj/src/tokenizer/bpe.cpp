#include "tracelm/tokenizer.hpp"

#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "tracelm/error.hpp"
#include "tracelm/pretokenize.hpp"
#include "tracelm/unicode.hpp"

namespace tracelm {
namespace {

constexpr char32_t kByteAlphabetEnd = 256 + 68;

struct ByteDecoder {
    std::array<int, kByteAlphabetEnd> table;

    ByteDecoder() {
        table.fill(-1);
        const auto& enc = byte_to_unicode();
        for (int b = 0; b < 256; ++b) table[enc[b]] = b;
    }

    // Raw bytes of an alphabet string, or nullopt if any code point is outside the alphabet.
    std::optional<std::string> decode(std::string_view token) const {
        std::string out;
        for (std::size_t i = 0; i < token.size();) {
            const auto u = unicode::decode_utf8(token, i);
            if (!u.valid || u.code_point >= kByteAlphabetEnd || table[u.code_point] < 0) return std::nullopt;
            out += static_cast<char>(table[u.code_point]);
            i += u.length;
        }
        return out;
    }
};

const ByteDecoder& byte_decoder() {
    static const ByteDecoder decoder;
    return decoder;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string squote(std::string_view s) { return "'" + std::string(s) + "'"; }

}  // namespace

const std::array<char32_t, 256>& byte_to_unicode() {
    static const std::array<char32_t, 256> table = [] {
        std::array<char32_t, 256> t{};
        char32_t next = 256;
        for (int b = 0; b < 256; ++b) {
            const bool printable = (b >= 33 && b <= 126) || (b >= 161 && b <= 172) || (b >= 174 && b <= 255);
            t[b] = printable ? static_cast<char32_t>(b) : next++;
        }
        return t;
    }();
    return table;
}

BpeVocab BpeVocab::load(std::string_view vocab_json, std::string_view merges_text,
                        std::string_view vocab_name, std::string_view merges_name) {
    BpeVocab v;
    const std::string vname(vocab_name);
    const std::string mname(merges_name);

    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(vocab_json);
    } catch (const nlohmann::json::parse_error& e) {
        throw LoadError(vname + ": malformed JSON: " + e.what());
    }
    if (!doc.is_object()) throw LoadError(vname + ": expected a JSON object of token -> id");

    const std::size_t n = doc.size();
    v.id_to_token_.assign(n, {});
    v.id_to_bytes_.assign(n, {});
    std::vector<bool> seen(n, false);
    for (const auto& [token, value] : doc.items()) {
        if (!value.is_number_integer()) throw LoadError(vname + ": id of token " + squote(token) + " is not an integer");
        const auto id = value.get<std::int64_t>();
        if (id < 0) throw LoadError(vname + ": negative id " + std::to_string(id));
        if (static_cast<std::size_t>(id) >= n) {
            throw LoadError(vname + ": non-dense ids: id " + std::to_string(id) + " of token " + squote(token) +
                            " outside [0, " + std::to_string(n) + ")");
        }
        if (seen[id]) {
            throw LoadError(vname + ": duplicate id " + std::to_string(id) + " for tokens " +
                            squote(v.id_to_token_[id]) + " and " + squote(token));
        }
        auto bytes = byte_decoder().decode(token);
        if (!bytes) throw LoadError(vname + ": token " + squote(token) + " contains a code point outside the byte alphabet");
        seen[id] = true;
        v.id_to_token_[id] = token;
        v.id_to_bytes_[id] = std::move(*bytes);
        v.token_to_id_.emplace(token, static_cast<TokenId>(id));
    }

    const auto& enc = byte_to_unicode();
    for (int b = 0; b < 256; ++b) {
        std::string sym;
        unicode::append_utf8(sym, enc[b]);
        auto it = v.token_to_id_.find(sym);
        if (it == v.token_to_id_.end()) {
            throw LoadError(vname + ": missing single-byte token for byte " + std::to_string(b));
        }
        v.byte_token_[b] = it->second;
    }

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= merges_text.size()) {
        std::size_t eol = merges_text.find('\n', pos);
        if (eol == std::string_view::npos) eol = merges_text.size();
        std::string_view line = merges_text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        if (line_no == 1 && line.front() == '#') continue;

        const std::string where = mname + ":" + std::to_string(line_no) + ": ";
        const std::size_t sp = line.find(' ');
        if (sp == std::string_view::npos || sp == 0 || sp + 1 == line.size() ||
            line.find(' ', sp + 1) != std::string_view::npos) {
            throw LoadError(where + "malformed merge line " + squote(line));
        }
        const std::string left(line.substr(0, sp));
        const std::string right(line.substr(sp + 1));
        for (const auto& sym : {left, right}) {
            if (!byte_decoder().decode(sym)) throw LoadError(where + "symbol " + squote(sym) + " outside the byte alphabet");
        }
        const auto a = v.find(left);
        const auto b = v.find(right);
        const auto merged = v.find(left + right);
        if (!a || !b) throw LoadError(where + "symbol of " + squote(line) + " not in vocabulary");
        if (!merged) throw LoadError(where + "merge result " + squote(left + right) + " not in vocabulary");
        const auto rank = static_cast<std::uint32_t>(v.merges_.size());
        if (!v.merge_table_.emplace(pair_key(*a, *b), MergeTarget{rank, *merged}).second) {
            throw LoadError(where + "duplicate merge " + squote(line));
        }
        v.merges_.emplace_back(left, right);
    }

    if (auto eot = v.find("<|endoftext|>")) v.specials_.emplace("end_of_text", *eot);
    return v;
}

BpeVocab BpeVocab::load_files(const std::filesystem::path& vocab_path, const std::filesystem::path& merges_path) {
    const std::string vocab = read_file(vocab_path);
    const std::string merges = read_file(merges_path);
    return load(vocab, merges, vocab_path.string(), merges_path.string());
}

const std::string& BpeVocab::token(TokenId id) const { return id_to_token_.at(static_cast<std::size_t>(id)); }

const std::string& BpeVocab::token_bytes(TokenId id) const { return id_to_bytes_.at(static_cast<std::size_t>(id)); }

std::string BpeVocab::display_text(TokenId id) const { return unicode::lossy_utf8(token_bytes(id)); }

std::optional<TokenId> BpeVocab::find(std::string_view token) const {
    auto it = token_to_id_.find(std::string(token));
    if (it == token_to_id_.end()) return std::nullopt;
    return it->second;
}

std::optional<std::size_t> BpeVocab::merge_rank(std::string_view left, std::string_view right) const {
    const auto a = find(left);
    const auto b = find(right);
    if (!a || !b) return std::nullopt;
    auto it = merge_table_.find(pair_key(*a, *b));
    if (it == merge_table_.end()) return std::nullopt;
    return it->second.rank;
}

std::optional<TokenId> BpeVocab::special(std::string_view name) const {
    auto it = specials_.find(name);
    if (it == specials_.end()) return std::nullopt;
    return it->second;
}

void BpeVocab::set_special(std::string name, TokenId id) {
    if (id < 0 || static_cast<std::size_t>(id) >= size()) {
        throw ParameterError("special token " + name + " id " + std::to_string(id) + " out of range");
    }
    specials_[std::move(name)] = id;
}

void BpeVocab::apply_merges(std::vector<TokenId>& symbols) const {
    std::vector<TokenId> next;
    while (symbols.size() > 1) {
        std::uint32_t best = std::numeric_limits<std::uint32_t>::max();
        const MergeTarget* target = nullptr;
        TokenId left = 0, right = 0;
        for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
            auto it = merge_table_.find(pair_key(symbols[i], symbols[i + 1]));
            if (it != merge_table_.end() && it->second.rank < best) {
                best = it->second.rank;
                target = &it->second;
                left = symbols[i];
                right = symbols[i + 1];
            }
        }
        if (target == nullptr) break;

        next.clear();
        for (std::size_t i = 0; i < symbols.size();) {
            if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
                next.push_back(target->result);
                i += 2;
            } else {
                next.push_back(symbols[i]);
                ++i;
            }
        }
        symbols.swap(next);
    }
}

std::vector<TokenRecord> BpeVocab::encode(std::string_view text) const {
    std::vector<TokenRecord> out;
    std::vector<TokenId> symbols;
    for (const ByteChunk& chunk : pretokenize(text)) {
        symbols.clear();
        for (std::size_t i = 0; i < chunk.length; ++i) {
            symbols.push_back(byte_token_[static_cast<unsigned char>(text[chunk.offset + i])]);
        }
        apply_merges(symbols);
        std::size_t at = chunk.offset;
        for (TokenId id : symbols) {
            const std::size_t len = id_to_bytes_[id].size();
            out.push_back({id, unicode::lossy_utf8(text.substr(at, len)), at, at + len});
            at += len;
        }
    }
    return out;
}

std::vector<TokenId> BpeVocab::encode_ids(std::string_view text) const {
    std::vector<TokenId> ids;
    for (const auto& r : encode(text)) ids.push_back(r.id);
    return ids;
}

std::string BpeVocab::decode(std::span<const TokenId> ids) const {
    std::string out;
    for (std::size_t pos = 0; pos < ids.size(); ++pos) {
        const TokenId id = ids[pos];
        if (id < 0 || static_cast<std::size_t>(id) >= size()) {
            throw ParameterError("token id " + std::to_string(id) + " at position " + std::to_string(pos) +
                                 " out of range [0, " + std::to_string(size()) + ")");
        }
        out += id_to_bytes_[id];
    }
    return out;
}

BpeVocab BpeVocab::with_merge_limit(std::size_t n_merges) const {
    BpeVocab v = *this;
    if (n_merges >= v.merges_.size()) return v;
    v.merges_.resize(n_merges);
    std::erase_if(v.merge_table_, [&](const auto& kv) { return kv.second.rank >= n_merges; });
    return v;
}

}  // namespace tracelm
