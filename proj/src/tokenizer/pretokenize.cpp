#include "tracelm/pretokenize.hpp"

#include "tracelm/unicode.hpp"

namespace tracelm {
namespace {

using unicode::CharClass;

struct Unit {
    std::size_t offset;
    std::size_t length;
    char32_t cp;
    CharClass cls;
};

std::vector<Unit> decode_units(std::string_view text) {
    std::vector<Unit> units;
    units.reserve(text.size());
    for (std::size_t i = 0; i < text.size();) {
        const auto u = unicode::decode_utf8(text, i);
        const CharClass cls = u.valid ? unicode::classify(u.code_point) : CharClass::other;
        units.push_back({i, u.length, u.valid ? u.code_point : unicode::kReplacement, cls});
        i += u.length;
    }
    return units;
}

// Length (in units) of a contraction suffix starting at `i`, or 0.
std::size_t match_contraction(const std::vector<Unit>& u, std::size_t i) {
    if (u[i].cp != U'\'' || i + 1 >= u.size()) return 0;
    const char32_t a = u[i + 1].cp;
    if (a == U's' || a == U't' || a == U'm' || a == U'd') return 2;
    if (i + 2 >= u.size()) return 0;
    const char32_t b = u[i + 2].cp;
    if ((a == U'r' && b == U'e') || (a == U'v' && b == U'e') || (a == U'l' && b == U'l')) return 3;
    return 0;
}

std::size_t run_end(const std::vector<Unit>& u, std::size_t i, CharClass cls) {
    while (i < u.size() && u[i].cls == cls) ++i;
    return i;
}

}  // namespace

std::vector<ByteChunk> pretokenize(std::string_view text) {
    const std::vector<Unit> u = decode_units(text);
    std::vector<ByteChunk> chunks;
    std::size_t i = 0;
    while (i < u.size()) {
        std::size_t end = 0;
        if (const std::size_t n = match_contraction(u, i)) {
            end = i + n;
        } else {
            // ` ?X+` for X in {letter, number, other}: a literal space may lead the run.
            const bool lead_space = u[i].cp == U' ' && i + 1 < u.size() && u[i + 1].cls != CharClass::space;
            const std::size_t body = lead_space ? i + 1 : i;
            const CharClass cls = u[body].cls;
            if (cls != CharClass::space) {
                end = run_end(u, body, cls);
            } else {
                // `\s+(?!\S)` keeps the last whitespace unit for the following word;
                // a lone whitespace unit falls through to `\s+`.
                const std::size_t stop = run_end(u, i, CharClass::space);
                end = (stop == u.size() || stop - i == 1) ? stop : stop - 1;
            }
        }
        const std::size_t begin_byte = u[i].offset;
        const std::size_t end_byte = end < u.size() ? u[end].offset : text.size();
        chunks.push_back({begin_byte, end_byte - begin_byte});
        i = end;
    }
    return chunks;
}

}  // namespace tracelm
