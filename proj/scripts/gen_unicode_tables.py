#!/usr/bin/env python3
"""Regenerates include/detox/unicode_data.hpp from the Unicode character database.

Emits the tables needed for NFC normalization (full canonical decompositions,
combining classes, primary composites), simple lowercase mappings, and the
character-class ranges used by the tokenizer. Hangul syllables are handled
algorithmically at runtime and are excluded here.
"""

import sys
import unicodedata

MAX_CP = 0x110000
HANGUL_BASE, HANGUL_END = 0xAC00, 0xD7A4


def full_decomposition(cp):
    s = unicodedata.normalize("NFD", chr(cp))
    cps = [ord(c) for c in s]
    if cps == [cp]:
        return None
    return cps


def category_ranges(predicate):
    ranges = []
    start = None
    for cp in range(MAX_CP):
        if predicate(cp):
            if start is None:
                start = cp
        else:
            if start is not None:
                ranges.append((start, cp - 1))
                start = None
    if start is not None:
        ranges.append((start, MAX_CP - 1))
    return ranges


def main(out_path):
    decomp_index = []   # (cp, offset, length)
    decomp_data = []
    compositions = []   # (a, b, composed)
    combining = []      # (cp, ccc)
    lowercase = []      # (cp, lower)

    for cp in range(MAX_CP):
        if HANGUL_BASE <= cp < HANGUL_END:
            continue
        ccc = unicodedata.combining(chr(cp))
        if ccc:
            combining.append((cp, ccc))
        d = full_decomposition(cp)
        if d:
            decomp_index.append((cp, len(decomp_data), len(d)))
            decomp_data.extend(d)
        raw = unicodedata.decomposition(chr(cp))
        if raw and not raw.startswith("<"):
            parts = [int(p, 16) for p in raw.split()]
            if len(parts) == 2:
                a, b = parts
                # The NFC probe bakes in the composition exclusions.
                if unicodedata.normalize("NFC", chr(a) + chr(b)) == chr(cp):
                    compositions.append((a, b, cp))

    for cp in range(MAX_CP):
        lo = chr(cp).lower()
        if len(lo) == 1 and ord(lo) != cp:
            lowercase.append((cp, ord(lo)))

    compositions.sort()

    def is_letter(cp):
        return unicodedata.category(chr(cp)).startswith("L")

    def is_digit(cp):
        return unicodedata.category(chr(cp)) == "Nd"

    def is_mark(cp):
        return unicodedata.category(chr(cp)) in ("Mn", "Mc")

    letters = category_ranges(is_letter)
    digits = category_ranges(is_digit)
    marks = category_ranges(is_mark)

    with open(out_path, "w") as f:
        w = f.write
        w("// Generated by scripts/gen_unicode_tables.py from Unicode %s data.\n"
          % unicodedata.unidata_version)
        w("// Do not edit by hand.\n")
        w("#pragma once\n\n#include <cstdint>\n\nnamespace detox::unicode_data {\n\n")

        w("struct DecompEntry { char32_t cp; std::uint32_t offset; std::uint8_t length; };\n")
        w("struct CompEntry { char32_t first; char32_t second; char32_t composed; };\n")
        w("struct CccEntry { char32_t cp; std::uint8_t ccc; };\n")
        w("struct MapEntry { char32_t from; char32_t to; };\n")
        w("struct Range { char32_t lo; char32_t hi; };\n\n")

        w("inline constexpr char32_t kDecompData[] = {\n")
        for i in range(0, len(decomp_data), 12):
            w("    " + ", ".join("0x%X" % c for c in decomp_data[i:i + 12]) + ",\n")
        w("};\n\n")

        w("inline constexpr DecompEntry kDecompIndex[] = {\n")
        for cp, off, ln in decomp_index:
            w("    {0x%X, %d, %d},\n" % (cp, off, ln))
        w("};\n\n")

        w("inline constexpr CompEntry kCompositions[] = {\n")
        for a, b, c in compositions:
            w("    {0x%X, 0x%X, 0x%X},\n" % (a, b, c))
        w("};\n\n")

        w("inline constexpr CccEntry kCombiningClasses[] = {\n")
        for cp, ccc in combining:
            w("    {0x%X, %d},\n" % (cp, ccc))
        w("};\n\n")

        w("inline constexpr MapEntry kLowercase[] = {\n")
        for cp, lo in lowercase:
            w("    {0x%X, 0x%X},\n" % (cp, lo))
        w("};\n\n")

        for name, ranges in (("kLetterRanges", letters),
                             ("kDigitRanges", digits),
                             ("kMarkRanges", marks)):
            w("inline constexpr Range %s[] = {\n" % name)
            for lo, hi in ranges:
                w("    {0x%X, 0x%X},\n" % (lo, hi))
            w("};\n\n")

        w("}  // namespace detox::unicode_data\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "include/detox/unicode_data.hpp")
