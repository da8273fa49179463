#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mgtd/error.hpp"

namespace mgtd::tok {

/// One word-level token. Spans are byte offsets into the original UTF-8
/// string, so slicing text[begin, end) reproduces the surface exactly.
struct Word {
  std::string surface;
  size_t begin = 0;
  size_t end = 0;
  int sentence_index = 0;
};

struct TokenizedDoc {
  std::vector<Word> words;
  int sentence_count = 0;
};

namespace detail {

struct Codepoint {
  uint32_t value = 0;
  size_t begin = 0;
  size_t end = 0;
};

inline std::vector<Codepoint> decode_utf8(std::string_view text) {
  std::vector<Codepoint> out;
  out.reserve(text.size());
  size_t i = 0;
  while (i < text.size()) {
    unsigned char b0 = static_cast<unsigned char>(text[i]);
    uint32_t cp = b0;
    size_t len = 1;
    if (b0 >= 0xF0)      len = 4;
    else if (b0 >= 0xE0) len = 3;
    else if (b0 >= 0xC0) len = 2;
    if (len > 1 && i + len <= text.size()) {
      cp = b0 & (0xFFu >> (len + 1));
      bool ok = true;
      for (size_t k = 1; k < len; ++k) {
        unsigned char bk = static_cast<unsigned char>(text[i + k]);
        if ((bk & 0xC0) != 0x80) { ok = false; break; }
        cp = (cp << 6) | (bk & 0x3F);
      }
      if (!ok) { cp = b0; len = 1; }
    } else if (len > 1) {
      // truncated sequence: fall back to a single byte
      cp = b0;
      len = 1;
    }
    out.push_back({cp, i, i + len});
    i += len;
  }
  return out;
}

inline bool is_space_cp(uint32_t c) {
  if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') return true;
  if (c == 0x00A0 || c == 0x1680 || c == 0x2028 || c == 0x2029 || c == 0x202F ||
      c == 0x205F || c == 0x3000 || c == 0xFEFF)
    return true;
  return c >= 0x2000 && c <= 0x200B;
}

inline bool is_digit_cp(uint32_t c) { return c >= '0' && c <= '9'; }

inline bool is_punct_cp(uint32_t c) {
  if (c < 0x80) {
    return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') ||
           (c >= '[' && c <= '`') || (c >= '{' && c <= '~');
  }
  if (c >= 0x2010 && c <= 0x2027) return true;  // dashes, curly quotes, ellipsis
  if (c >= 0x2030 && c <= 0x205E) return true;
  switch (c) {
    case 0x00A1: case 0x00A7: case 0x00AB: case 0x00B6: case 0x00B7:
    case 0x00BB: case 0x00BF:
    case 0x3001: case 0x3002: case 0x300C: case 0x300D:
    case 0xFF01: case 0xFF0C: case 0xFF0E: case 0xFF1A: case 0xFF1B:
    case 0xFF1F:
      return true;
    default:
      return false;
  }
}

// Everything that is neither space, digit nor punctuation is treated as a
// letter; this keeps arbitrary scripts inside word tokens.
inline bool is_letter_cp(uint32_t c) {
  return !is_space_cp(c) && !is_digit_cp(c) && !is_punct_cp(c);
}

inline bool is_word_cp(uint32_t c) { return is_letter_cp(c) || is_digit_cp(c); }

inline bool is_sentence_terminal(uint32_t c) {
  return c == '.' || c == '!' || c == '?' || c == 0x2026 /* … */ ||
         c == 0x3002 || c == 0xFF01 || c == 0xFF1F;
}

inline bool is_apostrophe(uint32_t c) { return c == '\'' || c == 0x2019; }

}  // namespace detail

/// Splits UTF-8 text into word tokens with punctuation as separate tokens.
///
/// Apostrophes between letters stay inside the word ("don't" is one token);
/// '.' and ',' between digits stay inside a number token ("3.14"). Sentence
/// indices advance after terminal punctuation (. ! ? and friends).
inline TokenizedDoc tokenize_words(std::string_view text) {
  if (text.empty()) throw DataError("tokenize_words: empty text");
  auto cps = detail::decode_utf8(text);
  TokenizedDoc doc;
  int sentence = 0;
  bool pending_break = false;   // terminal punct seen, sentence break pending
  bool any_token = false;

  size_t i = 0;
  const size_t n = cps.size();

  while (i < n) {
    if (detail::is_space_cp(cps[i].value)) { ++i; continue; }

    size_t start = i;
    if (detail::is_word_cp(cps[i].value)) {
      // trailing punctuation stays with the previous sentence; a new
      // sentence starts at the first word after a terminal mark
      if (pending_break && any_token) {
        ++sentence;
        pending_break = false;
      }
      while (i < n) {
        if (detail::is_word_cp(cps[i].value)) { ++i; continue; }
        // apostrophe flanked by letters
        if (detail::is_apostrophe(cps[i].value) && i + 1 < n && i > start &&
            detail::is_letter_cp(cps[i - 1].value) && detail::is_letter_cp(cps[i + 1].value)) {
          ++i;
          continue;
        }
        // decimal point / thousands separator inside a number
        if ((cps[i].value == '.' || cps[i].value == ',') && i + 1 < n && i > start &&
            detail::is_digit_cp(cps[i - 1].value) && detail::is_digit_cp(cps[i + 1].value)) {
          ++i;
          continue;
        }
        break;
      }
    } else {
      // punctuation: one codepoint per token
      if (detail::is_sentence_terminal(cps[i].value)) pending_break = true;
      ++i;
    }

    Word w;
    w.begin = cps[start].begin;
    w.end = cps[i - 1].end;
    w.surface.assign(text.substr(w.begin, w.end - w.begin));
    w.sentence_index = sentence;
    doc.words.push_back(std::move(w));
    any_token = true;
  }

  doc.sentence_count = doc.words.empty() ? 0 : sentence + 1;
  return doc;
}

/// ASCII-only case folding; non-ASCII codepoints pass through unchanged.
inline std::string fold_case(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

inline bool is_ascii_upper(char c) { return c >= 'A' && c <= 'Z'; }

/// True when the token is alphabetic, at least two codepoints long, and every
/// ASCII letter in it is uppercase (acronym-style).
inline bool is_all_caps(std::string_view surface) {
  auto cps = detail::decode_utf8(surface);
  if (cps.size() < 2) return false;
  bool saw_upper = false;
  for (const auto& cp : cps) {
    if (cp.value < 0x80) {
      char c = static_cast<char>(cp.value);
      if (c >= 'a' && c <= 'z') return false;
      if (!is_ascii_upper(c)) return false;
      saw_upper = true;
    } else if (!detail::is_letter_cp(cp.value)) {
      return false;
    }
  }
  return saw_upper;
}

inline bool starts_uppercase(std::string_view surface) {
  return !surface.empty() && is_ascii_upper(surface[0]);
}

}  // namespace mgtd::tok
