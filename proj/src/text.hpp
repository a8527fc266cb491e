#pragma once

#include <string>
#include <vector>

namespace ocor {

// Character alphabet for token character rows. Index 0 is the pad symbol,
// index 1 the unknown symbol, then lowercase letters, digits, underscore and
// ASCII punctuation. The table is sized 100 with the tail indices reserved.
inline constexpr int kAlphabetSize = 100;
inline constexpr int kPadIndex = 0;
inline constexpr int kUnknownIndex = 1;

// Alphabet index of a byte, kUnknownIndex if the byte is not in the alphabet.
int char_index(unsigned char c);

enum class TextKind { kNaturalLanguage, kCode };

struct TokenSeq {
  std::vector<std::string> tokens;
  std::vector<std::vector<int>> chars;  // one row per token, exactly char_len
  TextKind kind = TextKind::kNaturalLanguage;
  int char_len = 0;

  int size() const { return static_cast<int>(tokens.size()); }
  bool empty() const { return tokens.empty(); }
};

// Splits text into lowercase tokens: maximal runs of [a-z0-9_], plus every
// other non-space character as its own single-character token. Multi-byte
// UTF-8 sequences count as one character; invalid bytes stand alone.
std::vector<std::string> tokenize(const std::string &text, TextKind kind);

// Builds the fixed-width character rows: tokens longer than char_len keep
// their first char_len characters, shorter ones are padded at the tail.
TokenSeq to_token_seq(std::vector<std::string> tokens, TextKind kind,
                      int char_len);

TokenSeq tokenize_to_seq(const std::string &text, TextKind kind, int char_len);

// First max_tokens tokens of seq (returns seq unchanged when short enough).
TokenSeq truncate_seq(const TokenSeq &seq, int max_tokens);

}  // namespace ocor
