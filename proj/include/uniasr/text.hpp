#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "uniasr/detail/unicode_tables.hpp"

namespace uniasr {

namespace detail {

template <std::size_t N>
constexpr bool in_ranges(const CodepointRange (&table)[N], std::uint32_t cp) {
  auto it = std::upper_bound(std::begin(table), std::end(table), cp,
                             [](std::uint32_t v, const CodepointRange& r) { return v < r.first; });
  if (it == std::begin(table)) return false;
  --it;
  return cp <= it->last;
}

inline void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

}  // namespace detail

inline constexpr std::uint32_t kReplacementChar = 0xFFFD;

/// Decodes UTF-8; malformed sequences decode to U+FFFD one byte at a time.
inline std::vector<std::uint32_t> decode_utf8(std::string_view s) {
  std::vector<std::uint32_t> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (b0 < 0x80) {
      len = 1;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    }
    bool ok = len > 0 && i + len <= s.size();
    for (std::size_t k = 1; ok && k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) ok = false;
      cp = (cp << 6) | (b & 0x3F);
    }
    static constexpr std::uint32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
    if (ok && (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))) ok = false;
    if (!ok) {
      out.push_back(kReplacementChar);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

inline std::string encode_utf8(const std::vector<std::uint32_t>& cps) {
  std::string out;
  out.reserve(cps.size());
  for (auto cp : cps) detail::append_utf8(out, cp);
  return out;
}

inline bool is_punctuation(std::uint32_t cp) { return detail::in_ranges(detail::kPunctuationRanges, cp); }

inline bool is_whitespace(std::uint32_t cp) { return detail::in_ranges(detail::kWhitespaceRanges, cp); }

inline std::uint32_t to_lower(std::uint32_t cp) {
  const auto* first = std::begin(detail::kLowerPairs);
  const auto* last = std::end(detail::kLowerPairs);
  const auto* it = std::lower_bound(first, last, cp,
                                    [](const detail::LowerPair& p, std::uint32_t v) { return p.upper < v; });
  return (it != last && it->upper == cp) ? it->lower : cp;
}

/// Han ideographs (unified, extensions and compatibility blocks).
inline bool is_han(std::uint32_t cp) {
  return (cp >= 0x3400 && cp <= 0x4DBF) || (cp >= 0x4E00 && cp <= 0x9FFF) ||
         (cp >= 0xF900 && cp <= 0xFAFF) || (cp >= 0x20000 && cp <= 0x2FA1F) ||
         (cp >= 0x30000 && cp <= 0x323AF);
}

/// Lowercases, drops Unicode punctuation (categories P*), and collapses
/// whitespace runs to one ASCII space with no leading or trailing space.
inline std::string normalize_text(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (auto cp : decode_utf8(raw)) {
    if (is_whitespace(cp)) {
      pending_space = !out.empty();
      continue;
    }
    cp = to_lower(cp);
    if (is_punctuation(cp)) continue;
    if (pending_space) out.push_back(' ');
    pending_space = false;
    detail::append_utf8(out, cp);
  }
  return out;
}

}  // namespace uniasr
