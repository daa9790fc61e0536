#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "paths.hpp"
#include "tracelm/tokenizer.hpp"

namespace tracelm::testing {

inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// The published GPT-2 tokenizer, loaded once per test binary.
inline const BpeVocab& gpt2_vocab() {
    static const BpeVocab vocab =
        BpeVocab::load_files(gpt2_tokenizer_dir() / "vocab.json", gpt2_tokenizer_dir() / "merges.txt");
    return vocab;
}

/// vocab.json text holding the 256 single-byte tokens with id == byte value,
/// plus `extra` additional tokens appended in order.
inline std::string byte_vocab_json(std::initializer_list<std::string> extra = {}) {
    std::string out = "{";
    const auto& enc = byte_to_unicode();
    auto key = [](const std::string& s) {
        std::string k = "\"";
        for (char c : s) {
            if (c == '"' || c == '\\') k += '\\';
            k += c;
        }
        return k + "\"";
    };
    int id = 0;
    for (int b = 0; b < 256; ++b, ++id) {
        std::string sym;
        char32_t cp = enc[b];
        if (cp < 0x80) {
            sym += static_cast<char>(cp);
        } else {
            sym += static_cast<char>(0xC0 | (cp >> 6));
            sym += static_cast<char>(0x80 | (cp & 0x3F));
        }
        out += (b ? "," : "") + key(sym) + ":" + std::to_string(id);
    }
    for (const auto& e : extra) out += "," + key(e) + ":" + std::to_string(id++);
    return out + "}";
}

}  // namespace tracelm::testing
