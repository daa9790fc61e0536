#include "tracelm/unicode.hpp"

#include <algorithm>
#include <span>

namespace tracelm::unicode {
namespace {

struct CodePointRange {
    char32_t first;
    char32_t last;
};

#include "unicode_tables.inc"

bool in_ranges(std::span<const CodePointRange> ranges, char32_t cp) {
    auto it = std::upper_bound(ranges.begin(), ranges.end(), cp,
                               [](char32_t v, const CodePointRange& r) { return v < r.first; });
    if (it == ranges.begin()) return false;
    --it;
    return cp <= it->last;
}

bool is_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

}  // namespace

Utf8Unit decode_utf8(std::string_view bytes, std::size_t offset) {
    const auto at = [&](std::size_t i) { return static_cast<unsigned char>(bytes[offset + i]); };
    const std::size_t avail = bytes.size() - offset;
    const unsigned char lead = at(0);
    if (lead < 0x80) return {lead, 1, true};

    std::size_t need = 0;
    char32_t cp = 0;
    // Allowed range for the second byte; excludes overlongs, surrogates and > U+10FFFF.
    unsigned char lo = 0x80, hi = 0xBF;
    if (lead >= 0xC2 && lead <= 0xDF) {
        need = 1;
        cp = lead & 0x1F;
    } else if (lead >= 0xE0 && lead <= 0xEF) {
        need = 2;
        cp = lead & 0x0F;
        if (lead == 0xE0) lo = 0xA0;
        if (lead == 0xED) hi = 0x9F;
    } else if (lead >= 0xF0 && lead <= 0xF4) {
        need = 3;
        cp = lead & 0x07;
        if (lead == 0xF0) lo = 0x90;
        if (lead == 0xF4) hi = 0x8F;
    } else {
        return {kReplacement, 1, false};
    }

    std::size_t used = 1;
    for (std::size_t i = 0; i < need; ++i) {
        if (used >= avail) return {kReplacement, used, false};
        const unsigned char c = at(used);
        const bool ok = i == 0 ? (c >= lo && c <= hi) : is_continuation(c);
        if (!ok) return {kReplacement, used, false};
        cp = (cp << 6) | (c & 0x3F);
        ++used;
    }
    return {cp, used, true};
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

std::string lossy_utf8(std::string_view bytes) {
    std::string out;
    out.reserve(bytes.size());
    for (std::size_t i = 0; i < bytes.size();) {
        const Utf8Unit u = decode_utf8(bytes, i);
        if (u.valid) {
            out.append(bytes.substr(i, u.length));
        } else {
            append_utf8(out, kReplacement);
        }
        i += u.length;
    }
    return out;
}

bool is_valid_utf8(std::string_view bytes) {
    for (std::size_t i = 0; i < bytes.size();) {
        const Utf8Unit u = decode_utf8(bytes, i);
        if (!u.valid) return false;
        i += u.length;
    }
    return true;
}

CharClass classify(char32_t cp) {
    if (in_ranges(kLetterRanges, cp)) return CharClass::letter;
    if (in_ranges(kNumberRanges, cp)) return CharClass::number;
    if (in_ranges(kSpaceRanges, cp)) return CharClass::space;
    return CharClass::other;
}

std::size_t code_point_count(std::string_view utf8) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < utf8.size(); ++n) i += decode_utf8(utf8, i).length;
    return n;
}

}  // namespace tracelm::unicode
