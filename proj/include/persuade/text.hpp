#pragma once

// Unicode helpers on UTF-8 std::string, backed by ICU.

#include <string>
#include <string_view>
#include <vector>

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include "persuade/error.hpp"

namespace persuade::text {

inline std::string nfc(std::string_view utf8) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* norm = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU NFC normalizer unavailable");
  icu::UnicodeString src = icu::UnicodeString::fromUTF8(
      icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
  icu::UnicodeString dst = norm->normalize(src, status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU NFC normalization failed");
  std::string out;
  dst.toUTF8String(out);
  return out;
}

// NFC then full Unicode lowercase (root locale).
inline std::string lower_nfc(std::string_view utf8) {
  icu::UnicodeString s = icu::UnicodeString::fromUTF8(nfc(utf8));
  s.toLower(icu::Locale::getRoot());
  std::string out;
  s.toUTF8String(out);
  return out;
}

inline bool valid_utf8(std::string_view utf8) {
  int32_t i = 0;
  const auto n = static_cast<int32_t>(utf8.size());
  while (i < n) {
    UChar32 c;
    U8_NEXT(utf8.data(), i, n, c);
    if (c < 0) return false;
  }
  return true;
}

inline std::u32string to_codepoints(std::string_view utf8) {
  std::u32string out;
  int32_t i = 0;
  const auto n = static_cast<int32_t>(utf8.size());
  while (i < n) {
    UChar32 c;
    U8_NEXT(utf8.data(), i, n, c);
    if (c < 0) throw ValidationError("invalid UTF-8 sequence");
    out.push_back(static_cast<char32_t>(c));
  }
  return out;
}

inline void append_utf8(std::string& out, char32_t c) {
  char buf[U8_MAX_LENGTH];
  int32_t len = 0;
  UBool err = false;
  U8_APPEND(buf, len, U8_MAX_LENGTH, static_cast<UChar32>(c), err);
  if (err) throw ValidationError("code point cannot be encoded as UTF-8");
  out.append(buf, static_cast<std::size_t>(len));
}

inline std::string from_codepoints(std::u32string_view cps) {
  std::string out;
  out.reserve(cps.size());
  for (char32_t c : cps) append_utf8(out, c);
  return out;
}

inline std::size_t codepoint_length(std::string_view utf8) { return to_codepoints(utf8).size(); }

// [start, end) in Unicode scalar values.
inline std::string substr_codepoints(std::string_view utf8, std::size_t start, std::size_t end) {
  const std::u32string cps = to_codepoints(utf8);
  if (start > end || end > cps.size()) throw ValidationError("codepoint range out of bounds");
  return from_codepoints(std::u32string_view(cps).substr(start, end - start));
}

inline bool is_space(char32_t c) { return u_isUWhiteSpace(static_cast<UChar32>(c)); }
inline bool is_punct(char32_t c) { return u_ispunct(static_cast<UChar32>(c)); }
inline bool is_word_char(char32_t c) {
  return u_isalnum(static_cast<UChar32>(c)) || u_hasBinaryProperty(static_cast<UChar32>(c), UCHAR_ALPHABETIC);
}

inline std::vector<std::string> split_whitespace(std::string_view utf8) {
  std::vector<std::string> out;
  std::string cur;
  for (char32_t c : to_codepoints(utf8)) {
    if (is_space(c)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      append_utf8(cur, c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// BLEU tokenization: NFC, whitespace split, then leading and trailing
// punctuation characters each become their own token. No case folding.
inline std::vector<std::string> bleu_tokenize(std::string_view utf8) {
  std::vector<std::string> out;
  for (const std::string& chunk : split_whitespace(nfc(utf8))) {
    const std::u32string cps = to_codepoints(chunk);
    std::size_t lo = 0;
    std::size_t hi = cps.size();
    while (lo < hi && is_punct(cps[lo])) ++lo;
    while (hi > lo && is_punct(cps[hi - 1])) --hi;
    for (std::size_t i = 0; i < lo; ++i) out.push_back(from_codepoints(cps.substr(i, 1)));
    if (lo < hi) out.push_back(from_codepoints(std::u32string_view(cps).substr(lo, hi - lo)));
    for (std::size_t i = hi; i < cps.size(); ++i) out.push_back(from_codepoints(cps.substr(i, 1)));
  }
  return out;
}

// Lowercased runs of letters/digits; used for keyword triggers.
inline std::vector<std::string> word_tokens(std::string_view utf8) {
  std::vector<std::string> out;
  std::string cur;
  for (char32_t c : to_codepoints(lower_nfc(utf8))) {
    if (is_word_char(c)) {
      append_utf8(cur, c);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace persuade::text
