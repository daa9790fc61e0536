#!/usr/bin/env python3
"""Regenerates src/tokenizer/unicode_tables.inc.

The classes are taken from the `regex` module, which is the engine the
reference GPT-2 encoder uses for its pre-tokenization pattern, so the C++
scanner classifies code points exactly as the reference does.

    python3 tools/gen_unicode_tables.py > src/tokenizer/unicode_tables.inc
"""
import regex

CLASSES = [("kLetterRanges", r"\p{L}"), ("kNumberRanges", r"\p{N}"), ("kSpaceRanges", r"\s")]


def ranges(pattern):
    rx = regex.compile(pattern)
    out, start = [], None
    for cp in range(0x110001):
        hit = cp <= 0x10FFFF and not (0xD800 <= cp <= 0xDFFF) and rx.match(chr(cp)) is not None
        if hit and start is None:
            start = cp
        elif not hit and start is not None:
            out.append((start, cp - 1))
            start = None
    return out


def main():
    print("// Generated by tools/gen_unicode_tables.py (regex %s). Do not edit." % regex.__version__)
    for name, pattern in CLASSES:
        rs = ranges(pattern)
        print("inline constexpr CodePointRange %s[] = {" % name)
        for i in range(0, len(rs), 4):
            print("    " + " ".join("{0x%X, 0x%X}," % r for r in rs[i:i + 4]))
        print("};")


if __name__ == "__main__":
    main()
