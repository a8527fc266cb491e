#include "text.hpp"

#include <array>
#include <stdexcept>

namespace ocor {

namespace {

// 26 lowercase + 10 digits + underscore + 31 punctuation characters, mapped
// to indices 2..69. Indices 70..99 are reserved so the table stays at 100.
constexpr char kChars[] =
    "abcdefghijklmnopqrstuvwxyz"
    "0123456789"
    "_"
    "!\"#$%&'()*+,-./:;<=>?@[\\]^`{|}~";

std::array<int, 256> build_index_table() {
  std::array<int, 256> table{};
  table.fill(kUnknownIndex);
  int next = 2;
  for (const char *p = kChars; *p; ++p) {
    table[static_cast<unsigned char>(*p)] = next++;
  }
  return table;
}

const std::array<int, 256> kIndexTable = build_index_table();

inline bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
}

inline bool is_space_byte(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

inline unsigned char lower_ascii(unsigned char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<unsigned char>(c + 32) : c;
}

// Length of the UTF-8 sequence starting at s[i], 1 for invalid lead bytes.
int utf8_len(const std::string &s, size_t i) {
  unsigned char c = static_cast<unsigned char>(s[i]);
  int len = 1;
  if ((c & 0xE0) == 0xC0) len = 2;
  else if ((c & 0xF0) == 0xE0) len = 3;
  else if ((c & 0xF8) == 0xF0) len = 4;
  for (int k = 1; k < len; ++k) {
    if (i + k >= s.size() ||
        (static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) {
      return 1;
    }
  }
  return len;
}

}  // namespace

int char_index(unsigned char c) { return kIndexTable[c]; }

std::vector<std::string> tokenize(const std::string &text, TextKind /*kind*/) {
  std::vector<std::string> tokens;
  size_t i = 0;
  while (i < text.size()) {
    unsigned char c = lower_ascii(static_cast<unsigned char>(text[i]));
    if (is_space_byte(c)) {
      ++i;
      continue;
    }
    if (is_word_byte(c)) {
      std::string run;
      while (i < text.size()) {
        unsigned char w = lower_ascii(static_cast<unsigned char>(text[i]));
        if (!is_word_byte(w)) break;
        run.push_back(static_cast<char>(w));
        ++i;
      }
      tokens.push_back(std::move(run));
    } else {
      int len = utf8_len(text, i);
      tokens.push_back(text.substr(i, len));
      i += len;
    }
  }
  return tokens;
}

TokenSeq to_token_seq(std::vector<std::string> tokens, TextKind kind,
                      int char_len) {
  if (char_len <= 0) {
    throw std::invalid_argument("to_token_seq: char_len must be positive");
  }
  TokenSeq seq;
  seq.kind = kind;
  seq.char_len = char_len;
  seq.chars.reserve(tokens.size());
  for (const std::string &tok : tokens) {
    if (tok.empty()) {
      throw std::invalid_argument("to_token_seq: empty token");
    }
    std::vector<int> row(static_cast<size_t>(char_len), kPadIndex);
    int n = std::min<int>(char_len, static_cast<int>(tok.size()));
    for (int k = 0; k < n; ++k) {
      row[k] = char_index(static_cast<unsigned char>(tok[k]));
    }
    seq.chars.push_back(std::move(row));
  }
  seq.tokens = std::move(tokens);
  return seq;
}

TokenSeq tokenize_to_seq(const std::string &text, TextKind kind,
                         int char_len) {
  return to_token_seq(tokenize(text, kind), kind, char_len);
}

TokenSeq truncate_seq(const TokenSeq &seq, int max_tokens) {
  if (seq.size() <= max_tokens) return seq;
  TokenSeq out;
  out.kind = seq.kind;
  out.char_len = seq.char_len;
  out.tokens.assign(seq.tokens.begin(), seq.tokens.begin() + max_tokens);
  out.chars.assign(seq.chars.begin(), seq.chars.begin() + max_tokens);
  return out;
}

}  // namespace ocor
