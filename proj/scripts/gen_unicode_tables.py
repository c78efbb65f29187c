#!/usr/bin/env python3
"""Regenerates include/uniasr/detail/unicode_tables.hpp from Python's unicodedata."""
import sys
import unicodedata

MAX_CP = 0x110000


def ranges(pred):
    out, start = [], None
    for cp in range(MAX_CP):
        hit = pred(cp)
        if hit and start is None:
            start = cp
        elif not hit and start is not None:
            out.append((start, cp - 1))
            start = None
    if start is not None:
        out.append((start, MAX_CP - 1))
    return out


def is_punct(cp):
    return unicodedata.category(chr(cp)).startswith("P")


def is_space(cp):
    return chr(cp).isspace()


def lower_pairs():
    pairs = []
    for cp in range(MAX_CP):
        c = chr(cp)
        if 0xD800 <= cp <= 0xDFFF:
            continue
        low = c.lower()
        if low == c:
            continue
        if len(low) != 1:
            low = low[0]  # simple mapping (U+0130 -> 'i')
        if low.lower() != low:
            continue
        pairs.append((cp, ord(low)))
    return pairs


def emit_ranges(name, rs):
    lines = [f"inline constexpr CodepointRange {name}[] = {{"]
    for a, b in rs:
        lines.append(f"    {{0x{a:04X}, 0x{b:04X}}},")
    lines.append("};")
    return "\n".join(lines)


def main():
    out = [
        "// Generated by scripts/gen_unicode_tables.py (Unicode "
        + unicodedata.unidata_version + "). Do not edit.",
        "#pragma once",
        "",
        "#include <cstdint>",
        "",
        "namespace uniasr::detail {",
        "",
        "struct CodepointRange {",
        "  std::uint32_t first;",
        "  std::uint32_t last;",
        "};",
        "",
        "struct LowerPair {",
        "  std::uint32_t upper;",
        "  std::uint32_t lower;",
        "};",
        "",
        emit_ranges("kPunctuationRanges", ranges(is_punct)),
        "",
        emit_ranges("kWhitespaceRanges", ranges(is_space)),
        "",
        "inline constexpr LowerPair kLowerPairs[] = {",
    ]
    for a, b in lower_pairs():
        out.append(f"    {{0x{a:04X}, 0x{b:04X}}},")
    out += ["};", "", "}  // namespace uniasr::detail", ""]
    sys.stdout.write("\n".join(out))


if __name__ == "__main__":
    main()
