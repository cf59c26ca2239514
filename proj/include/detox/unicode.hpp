#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "detox/unicode_data.hpp"

// UTF-8 codec, NFC normalization, simple lowercasing, and the character
// classes the tokenizer needs. All offsets elsewhere in the library are
// Unicode codepoint indices, so the decode step is shared here.

namespace detox::uni {

inline constexpr char32_t kReplacement = 0xFFFD;

/// Decodes UTF-8 into codepoints. Invalid bytes become U+FFFD.
inline std::vector<char32_t> decode(std::string_view s) {
    std::vector<char32_t> out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        unsigned char b = static_cast<unsigned char>(s[i]);
        char32_t cp = kReplacement;
        std::size_t len = 1;
        if (b < 0x80) {
            cp = b;
        } else if ((b & 0xE0) == 0xC0) {
            len = 2;
            cp = b & 0x1F;
        } else if ((b & 0xF0) == 0xE0) {
            len = 3;
            cp = b & 0x0F;
        } else if ((b & 0xF8) == 0xF0) {
            len = 4;
            cp = b & 0x07;
        } else {
            ++i;
            out.push_back(kReplacement);
            continue;
        }
        if (len > 1) {
            if (i + len > s.size()) {
                ++i;
                out.push_back(kReplacement);
                continue;
            }
            bool ok = true;
            for (std::size_t k = 1; k < len; ++k) {
                unsigned char c = static_cast<unsigned char>(s[i + k]);
                if ((c & 0xC0) != 0x80) {
                    ok = false;
                    break;
                }
                cp = (cp << 6) | (c & 0x3F);
            }
            if (!ok || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
                ++i;
                out.push_back(kReplacement);
                continue;
            }
        }
        out.push_back(cp);
        i += len;
    }
    return out;
}

inline void append_utf8(std::string& out, char32_t cp) {
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

inline std::string encode(const std::vector<char32_t>& cps) {
    std::string out;
    out.reserve(cps.size());
    for (char32_t cp : cps) append_utf8(out, cp);
    return out;
}

namespace detail {

inline int combining_class(char32_t cp) {
    const auto* begin = std::begin(unicode_data::kCombiningClasses);
    const auto* end = std::end(unicode_data::kCombiningClasses);
    auto it = std::lower_bound(begin, end, cp,
                               [](const unicode_data::CccEntry& e, char32_t c) { return e.cp < c; });
    return (it != end && it->cp == cp) ? it->ccc : 0;
}

inline bool in_ranges(char32_t cp, const unicode_data::Range* begin, const unicode_data::Range* end) {
    auto it = std::upper_bound(begin, end, cp,
                               [](char32_t c, const unicode_data::Range& r) { return c < r.lo; });
    return it != begin && cp <= (it - 1)->hi;
}

// Hangul syllables decompose and compose algorithmically (UAX #15).
inline constexpr char32_t kHangulSBase = 0xAC00;
inline constexpr char32_t kHangulLBase = 0x1100;
inline constexpr char32_t kHangulVBase = 0x1161;
inline constexpr char32_t kHangulTBase = 0x11A7;
inline constexpr int kHangulLCount = 19, kHangulVCount = 21, kHangulTCount = 28;
inline constexpr int kHangulNCount = kHangulVCount * kHangulTCount;
inline constexpr int kHangulSCount = kHangulLCount * kHangulNCount;

inline void decompose_cp(char32_t cp, std::vector<char32_t>& out) {
    if (cp >= kHangulSBase && cp < kHangulSBase + kHangulSCount) {
        int s = static_cast<int>(cp - kHangulSBase);
        out.push_back(kHangulLBase + s / kHangulNCount);
        out.push_back(kHangulVBase + (s % kHangulNCount) / kHangulTCount);
        if (s % kHangulTCount != 0) out.push_back(kHangulTBase + s % kHangulTCount);
        return;
    }
    const auto* begin = std::begin(unicode_data::kDecompIndex);
    const auto* end = std::end(unicode_data::kDecompIndex);
    auto it = std::lower_bound(begin, end, cp,
                               [](const unicode_data::DecompEntry& e, char32_t c) { return e.cp < c; });
    if (it != end && it->cp == cp) {
        for (std::uint8_t k = 0; k < it->length; ++k)
            out.push_back(unicode_data::kDecompData[it->offset + k]);
    } else {
        out.push_back(cp);
    }
}

inline char32_t compose_pair(char32_t a, char32_t b) {
    // Hangul LV / LVT.
    if (a >= kHangulLBase && a < kHangulLBase + kHangulLCount &&
        b >= kHangulVBase && b < kHangulVBase + kHangulVCount) {
        return kHangulSBase + ((a - kHangulLBase) * kHangulVCount + (b - kHangulVBase)) * kHangulTCount;
    }
    if (a >= kHangulSBase && a < kHangulSBase + kHangulSCount &&
        (a - kHangulSBase) % kHangulTCount == 0 &&
        b > kHangulTBase && b < kHangulTBase + kHangulTCount) {
        return a + (b - kHangulTBase);
    }
    const auto* begin = std::begin(unicode_data::kCompositions);
    const auto* end = std::end(unicode_data::kCompositions);
    auto it = std::lower_bound(begin, end, std::pair<char32_t, char32_t>{a, b},
                               [](const unicode_data::CompEntry& e, const std::pair<char32_t, char32_t>& p) {
                                   return e.first != p.first ? e.first < p.first : e.second < p.second;
                               });
    if (it != end && it->first == a && it->second == b) return it->composed;
    return 0;
}

}  // namespace detail

/// Canonical composition (NFC) over codepoints.
inline std::vector<char32_t> nfc(const std::vector<char32_t>& input) {
    // 1. full canonical decomposition
    std::vector<char32_t> buf;
    buf.reserve(input.size() + 8);
    for (char32_t cp : input) detail::decompose_cp(cp, buf);

    // 2. canonical ordering of combining marks
    for (std::size_t i = 1; i < buf.size(); ++i) {
        int cc = detail::combining_class(buf[i]);
        if (cc == 0) continue;
        std::size_t j = i;
        while (j > 0) {
            int prev = detail::combining_class(buf[j - 1]);
            if (prev == 0 || prev <= cc) break;
            std::swap(buf[j - 1], buf[j]);
            --j;
        }
    }

    // 3. composition
    if (buf.empty()) return buf;
    std::vector<char32_t> out;
    out.reserve(buf.size());
    out.push_back(buf[0]);
    std::ptrdiff_t last_starter = detail::combining_class(buf[0]) == 0 ? 0 : -1;
    for (std::size_t i = 1; i < buf.size(); ++i) {
        char32_t c = buf[i];
        int cc = detail::combining_class(c);
        if (last_starter >= 0) {
            bool starter_adjacent = static_cast<std::ptrdiff_t>(out.size()) - 1 == last_starter;
            int prev_cc = detail::combining_class(out.back());
            if (starter_adjacent || prev_cc < cc) {
                char32_t m = detail::compose_pair(out[static_cast<std::size_t>(last_starter)], c);
                if (m != 0) {
                    out[static_cast<std::size_t>(last_starter)] = m;
                    continue;
                }
            }
        }
        out.push_back(c);
        if (cc == 0) last_starter = static_cast<std::ptrdiff_t>(out.size()) - 1;
    }
    return out;
}

inline std::string nfc(std::string_view s) { return encode(nfc(decode(s))); }

inline char32_t to_lower(char32_t cp) {
    const auto* begin = std::begin(unicode_data::kLowercase);
    const auto* end = std::end(unicode_data::kLowercase);
    auto it = std::lower_bound(begin, end, cp,
                               [](const unicode_data::MapEntry& e, char32_t c) { return e.from < c; });
    return (it != end && it->from == cp) ? it->to : cp;
}

inline std::string to_lower(std::string_view s) {
    auto cps = decode(s);
    for (auto& cp : cps) cp = to_lower(cp);
    return encode(cps);
}

/// Lowercase + NFC, the normalization applied to lemmas and match keys.
inline std::string fold(std::string_view s) {
    auto cps = decode(s);
    for (auto& cp : cps) cp = to_lower(cp);
    return encode(nfc(cps));
}

inline bool is_letter(char32_t cp) {
    return detail::in_ranges(cp, std::begin(unicode_data::kLetterRanges),
                             std::end(unicode_data::kLetterRanges));
}

inline bool is_digit(char32_t cp) {
    return detail::in_ranges(cp, std::begin(unicode_data::kDigitRanges),
                             std::end(unicode_data::kDigitRanges));
}

inline bool is_mark(char32_t cp) {
    return detail::in_ranges(cp, std::begin(unicode_data::kMarkRanges),
                             std::end(unicode_data::kMarkRanges));
}

inline bool is_word_char(char32_t cp) {
    return is_letter(cp) || is_digit(cp) || is_mark(cp);
}

inline bool is_apostrophe(char32_t cp) { return cp == 0x27 || cp == 0x2019; }

/// Greek final sigma folded to medial sigma so inflection variants collide.
inline std::string final_sigma_to_medial(std::string_view s) {
    auto cps = decode(s);
    for (auto& cp : cps)
        if (cp == 0x3C2) cp = 0x3C3;
    return encode(cps);
}

}  // namespace detox::uni
