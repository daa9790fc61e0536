#!/usr/bin/env python3
"""Builds the frozen multilingual tokenizer corpus used by the C++ tests.

Expected ids come from two independent GPT-2 encoders: the Rust `tokenizers`
package (BPE model + ByteLevel pre-tokenizer) and a straight Python port of
the original GPT-2 encoder.py below. A string is frozen only when both agree,
and the script fails loudly if they ever disagree.

    python3 tests/oracle/make_tokenizer_corpus.py assets/gpt2 tests/data/tokenizer_oracle.json
"""
import json
import random
import sys

import regex
from tokenizers import Tokenizer, decoders, models, pre_tokenizers

FRAGMENTS = [
    # en
    "The quick brown fox jumps over the lazy dog.", "I'm sure they'll say it's fine, won't they?",
    "Language models predict the next token.", "hello world", "Hello, World!", "don't", "we've", "you'd",
    "It's 3:45 PM on 2024-05-17.", "e-mail: someone@example.com", "  indented text", "line one\nline two",
    # cs
    "Příliš žluťoučký kůň úpěl ďábelské ódy.", "Jazykový model předpovídá další slovo.",
    "Dobrý den, jak se máte?", "Čeština má háčky a čárky.",
    # fr
    "Le modèle de langue prédit le mot suivant.", "C'est l'été, n'est-ce pas ?", "Où êtes-vous allés hier soir ?",
    "L'œuvre était « magnifique ».",
    # uk
    "Мовна модель передбачає наступне слово.", "Привіт, як справи?", "Ґанок, їжак, єнот і шлях.",
    # zh
    "语言模型预测下一个词。", "今天天气很好，我们去公园散步吧！", "测试", "人工智能正在改变世界。",
    # other scripts and symbols
    "Größe — 测试", "Straße und Übergröße", "¿Dónde está la biblioteca?", "Ελληνικά γράμματα", "日本語のテキスト",
    "한국어 문장입니다", "مرحبا بالعالم", "नमस्ते दुनिया", "ภาษาไทย", "Zürich, Köln, Malmö",
    "emoji 😀🎉👍🏽 and 👨‍👩‍👧", "combining: é à ñ", "math: ∑ x² ≤ ∞ ± √2", "€100 or £50 or ¥1000",
    "tabs\tand\ttabs", "trailing spaces   ", "\n\n\n", "multi   space   gaps", "nbsp here", "ideographic　space",
    "x = f(y) + 42 * z;", "for i in range(10):\n    print(i)", "#include <vector>", "'quoted' and \"double\"",
    "'s 't 're 've 'm 'll 'd", "''s", "1234567890", "3.14159", "٣٤٥ ௫ Ⅻ", "ALL CAPS TEXT", "MiXeD CaSe",
    "...", "!!!???", "a", " ", "", "\r\n", " sep", "under_score_name", "CamelCaseIdentifier",
]

SEPARATORS = [" ", "", "\n", "  ", "\t", ", ", ". ", " \n", " ", "　"]


GPT2_PATTERN = r"""'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+"""


def bytes_to_unicode():
    bs = list(range(ord("!"), ord("~") + 1)) + list(range(ord("¡"), ord("¬") + 1)) + list(range(ord("®"), ord("ÿ") + 1))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, map(chr, cs)))


class ReferenceEncoder:
    """Port of the published GPT-2 encoder.py (without its cache)."""

    def __init__(self, tok_dir):
        with open(f"{tok_dir}/vocab.json", encoding="utf-8") as f:
            self.encoder = json.load(f)
        with open(f"{tok_dir}/merges.txt", encoding="utf-8") as f:
            lines = f.read().split("\n")[1:-1]
        self.bpe_ranks = {tuple(line.split()): i for i, line in enumerate(lines)}
        self.byte_encoder = bytes_to_unicode()
        self.pat = regex.compile(GPT2_PATTERN)

    def bpe(self, token):
        word = tuple(token)
        while len(word) > 1:
            pairs = set(zip(word, word[1:]))
            bigram = min(pairs, key=lambda p: self.bpe_ranks.get(p, float("inf")))
            if bigram not in self.bpe_ranks:
                break
            first, second = bigram
            new_word, i = [], 0
            while i < len(word):
                try:
                    j = word.index(first, i)
                except ValueError:
                    new_word.extend(word[i:])
                    break
                new_word.extend(word[i:j])
                i = j
                if word[i] == first and i < len(word) - 1 and word[i + 1] == second:
                    new_word.append(first + second)
                    i += 2
                else:
                    new_word.append(word[i])
                    i += 1
            word = tuple(new_word)
        return word

    def encode(self, text):
        ids = []
        for token in regex.findall(self.pat, text):
            token = "".join(self.byte_encoder[b] for b in token.encode("utf-8"))
            ids.extend(self.encoder[t] for t in self.bpe(token))
        return ids


def build_corpus(rng, n):
    out = list(dict.fromkeys(FRAGMENTS))
    seen = set(out)
    while len(out) < n:
        parts = [rng.choice(FRAGMENTS) for _ in range(rng.randint(1, 5))]
        s = ""
        for p in parts:
            s += p + rng.choice(SEPARATORS)
        if rng.random() < 0.2:
            # random slice keeps code-point boundaries since s is a str
            a = rng.randint(0, len(s))
            b = rng.randint(a, len(s))
            s = s[a:b]
        if "<|endoftext|>" in s or s in seen:
            continue
        seen.add(s)
        out.append(s)
    return out[:n]


def main():
    tok_dir, out_path = sys.argv[1], sys.argv[2]
    slow = ReferenceEncoder(tok_dir)
    fast = Tokenizer(models.BPE.from_file(f"{tok_dir}/vocab.json", f"{tok_dir}/merges.txt"))
    fast.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False)
    fast.decoder = decoders.ByteLevel()
    corpus = build_corpus(random.Random(20251016), 1000)
    cases = []
    for s in corpus:
        a = slow.encode(s)
        b = fast.encode(s).ids
        if a != b:
            raise SystemExit(f"reference encoders disagree on {s!r}: {a} vs {b}")
        cases.append({"text": s, "ids": a})
    with open(out_path, "w", encoding="utf-8") as f:
        json.dump({"tokenizer": "gpt2", "cases": cases}, f, ensure_ascii=False, indent=0)
        f.write("\n")
    print(f"wrote {len(cases)} cases to {out_path}")


if __name__ == "__main__":
    main()
