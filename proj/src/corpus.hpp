#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "text.hpp"

namespace ocor {

// One question-code pair from a corpus file.
struct RawPair {
  std::string id;
  std::string question;
  std::string code;
};

// One evaluation unit: a query plus an ordered candidate pool with exactly
// one positive, all referenced by corpus id.
struct RetrievalCase {
  std::string query_id;
  std::vector<std::string> candidate_ids;
  int positive_index = 0;
};

// Loads a UTF-8 JSON-lines corpus: one object per line with string fields
// "id", "question", "code". Throws std::runtime_error carrying the line
// number for a malformed line and naming the id for a duplicate.
// allow_empty_question: candidate pools carry code only.
std::vector<RawPair> load_corpus(const std::string &path,
                                 bool allow_empty_question = false);

// One case per pair: `negatives` distractor snippets drawn uniformly without
// replacement from the other pairs, the positive at a seed-determined
// position. Reproducible from seed. Requires |pairs| > negatives.
std::vector<RetrievalCase> build_cases(const std::vector<RawPair> &pairs,
                                       int negatives, uint64_t seed);

// Case file: one JSON object per line with "query_id", "candidate_ids",
// "positive_index".
void write_cases(const std::string &path,
                 const std::vector<RetrievalCase> &cases);
std::vector<RetrievalCase> load_cases(const std::string &path);

// Token-count statistics over both sides, serialized as JSON.
std::string corpus_stats_json(const std::vector<RawPair> &pairs);

// Tokenized corpus file: {"id":..., "question_tokens":[...],
// "code_tokens":[...]} per line, in corpus order.
void write_tokenized(const std::string &path,
                     const std::vector<RawPair> &pairs);

}  // namespace ocor
