#include "corpus.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "rng.hpp"

namespace ocor {

namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

bool all_whitespace(const std::string &s) {
  return s.find_first_not_of(" \t\r\n") == std::string::npos;
}

std::string require_string_field(const json &obj, const char *field,
                                 const std::string &where) {
  if (!obj.contains(field)) {
    throw std::runtime_error(where + ": missing field \"" + field + "\"");
  }
  if (!obj[field].is_string()) {
    throw std::runtime_error(where + ": field \"" + field +
                             "\" is not a string");
  }
  return obj[field].get<std::string>();
}

}  // namespace

std::vector<RawPair> load_corpus(const std::string &path,
                                 bool allow_empty_question) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("corpus: cannot open " + path);
  std::vector<RawPair> pairs;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (all_whitespace(line)) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error &e) {
      throw std::runtime_error(where + ": malformed record: " + e.what());
    }
    if (!obj.is_object()) {
      throw std::runtime_error(where + ": record is not a JSON object");
    }
    RawPair pair;
    pair.id = require_string_field(obj, "id", where);
    pair.code = require_string_field(obj, "code", where);
    if (allow_empty_question) {
      pair.question = obj.contains("question") && obj["question"].is_string()
                          ? obj["question"].get<std::string>()
                          : "";
    } else {
      pair.question = require_string_field(obj, "question", where);
      if (all_whitespace(pair.question)) {
        throw std::runtime_error(where + ": empty question");
      }
    }
    if (pair.id.empty()) throw std::runtime_error(where + ": empty id");
    if (all_whitespace(pair.code)) {
      throw std::runtime_error(where + ": empty code");
    }
    if (!seen_ids.insert(pair.id).second) {
      throw std::runtime_error(where + ": duplicate id \"" + pair.id + "\"");
    }
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

std::vector<RetrievalCase> build_cases(const std::vector<RawPair> &pairs,
                                       int negatives, uint64_t seed) {
  const int n = static_cast<int>(pairs.size());
  if (negatives < 1) {
    throw std::invalid_argument("build_cases: negatives must be >= 1");
  }
  if (n <= negatives) {
    throw std::invalid_argument(
        "build_cases: corpus of " + std::to_string(n) + " pairs needs at least " +
        std::to_string(negatives + 1) + " to draw " + std::to_string(negatives) +
        " distractors");
  }
  std::vector<RetrievalCase> cases;
  cases.reserve(static_cast<size_t>(n));
  for (int qi = 0; qi < n; ++qi) {
    Rng rng(mix_seed(seed, static_cast<uint64_t>(qi)));
    std::unordered_set<int> chosen;
    std::vector<int> distractors;
    distractors.reserve(static_cast<size_t>(negatives));
    while (static_cast<int>(distractors.size()) < negatives) {
      const int pick = static_cast<int>(rng.below(static_cast<uint64_t>(n)));
      if (pick == qi || !chosen.insert(pick).second) continue;
      distractors.push_back(pick);
    }
    const int pos =
        static_cast<int>(rng.below(static_cast<uint64_t>(negatives + 1)));
    RetrievalCase c;
    c.query_id = pairs[static_cast<size_t>(qi)].id;
    c.positive_index = pos;
    int next_distractor = 0;
    for (int slot = 0; slot <= negatives; ++slot) {
      const int src = slot == pos
                          ? qi
                          : distractors[static_cast<size_t>(next_distractor++)];
      c.candidate_ids.push_back(pairs[static_cast<size_t>(src)].id);
    }
    cases.push_back(std::move(c));
  }
  return cases;
}

void write_cases(const std::string &path,
                 const std::vector<RetrievalCase> &cases) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cases: cannot write " + path);
  for (const RetrievalCase &c : cases) {
    ordered_json obj;
    obj["query_id"] = c.query_id;
    obj["candidate_ids"] = c.candidate_ids;
    obj["positive_index"] = c.positive_index;
    out << obj.dump() << "\n";
  }
  if (!out) throw std::runtime_error("cases: write failed for " + path);
}

std::vector<RetrievalCase> load_cases(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cases: cannot open " + path);
  std::vector<RetrievalCase> cases;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (all_whitespace(line)) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error &e) {
      throw std::runtime_error(where + ": malformed record: " + e.what());
    }
    RetrievalCase c;
    c.query_id = require_string_field(obj, "query_id", where);
    if (!obj.contains("candidate_ids") || !obj["candidate_ids"].is_array()) {
      throw std::runtime_error(where + ": missing candidate_ids array");
    }
    for (const auto &id : obj["candidate_ids"]) {
      if (!id.is_string()) {
        throw std::runtime_error(where + ": candidate_ids entries must be strings");
      }
      c.candidate_ids.push_back(id.get<std::string>());
    }
    if (!obj.contains("positive_index") ||
        !obj["positive_index"].is_number_integer()) {
      throw std::runtime_error(where + ": missing integer positive_index");
    }
    c.positive_index = obj["positive_index"].get<int>();
    if (c.candidate_ids.size() < 2) {
      throw std::runtime_error(where + ": a case needs at least 2 candidates");
    }
    if (c.positive_index < 0 ||
        c.positive_index >= static_cast<int>(c.candidate_ids.size())) {
      throw std::runtime_error(where + ": positive_index out of range");
    }
    cases.push_back(std::move(c));
  }
  return cases;
}

namespace {

struct SideStats {
  int64_t total_tokens = 0;
  int max_tokens = 0;

  void add(int count) {
    total_tokens += count;
    max_tokens = std::max(max_tokens, count);
  }
};

}  // namespace

std::string corpus_stats_json(const std::vector<RawPair> &pairs) {
  SideStats question_stats, code_stats;
  for (const RawPair &p : pairs) {
    question_stats.add(static_cast<int>(
        tokenize(p.question, TextKind::kNaturalLanguage).size()));
    code_stats.add(static_cast<int>(tokenize(p.code, TextKind::kCode).size()));
  }
  const double n = pairs.empty() ? 1.0 : static_cast<double>(pairs.size());
  ordered_json obj;
  obj["pairs"] = pairs.size();
  obj["avg_question_tokens"] = static_cast<double>(question_stats.total_tokens) / n;
  obj["max_question_tokens"] = question_stats.max_tokens;
  obj["avg_code_tokens"] = static_cast<double>(code_stats.total_tokens) / n;
  obj["max_code_tokens"] = code_stats.max_tokens;
  return obj.dump(2);
}

void write_tokenized(const std::string &path,
                     const std::vector<RawPair> &pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("corpus: cannot write " + path);
  for (const RawPair &p : pairs) {
    ordered_json obj;
    obj["id"] = p.id;
    obj["question_tokens"] = tokenize(p.question, TextKind::kNaturalLanguage);
    obj["code_tokens"] = tokenize(p.code, TextKind::kCode);
    out << obj.dump() << "\n";
  }
  if (!out) throw std::runtime_error("corpus: write failed for " + path);
}

}  // namespace ocor
