#include <doctest.h>

#include <algorithm>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "testutil.hpp"
#include "text.hpp"

using namespace ocor;
using testutil::TempDir;
using testutil::read_file;
using testutil::write_file;

TEST_SUITE("corpus") {

TEST_CASE("tokenizer splits word runs and punctuation") {
  CHECK(tokenize("Select * FROM joint_table_b", TextKind::kCode) ==
        std::vector<std::string>{"select", "*", "from", "joint_table_b"});
  CHECK(tokenize("", TextKind::kNaturalLanguage).empty());
  CHECK(tokenize("a.b", TextKind::kCode) ==
        std::vector<std::string>{"a", ".", "b"});
  CHECK(tokenize("x  +=1", TextKind::kCode) ==
        std::vector<std::string>{"x", "+", "=", "1"});
}

TEST_CASE("character rows pad, truncate and map unknowns") {
  TokenSeq seq = to_token_seq({"abc"}, TextKind::kCode, 5);
  REQUIRE(seq.chars.size() == 1);
  CHECK(seq.chars[0] == std::vector<int>{char_index('a'), char_index('b'),
                                         char_index('c'), kPadIndex,
                                         kPadIndex});

  seq = to_token_seq({"abcdefgh"}, TextKind::kCode, 5);
  CHECK(seq.chars[0] == std::vector<int>{char_index('a'), char_index('b'),
                                         char_index('c'), char_index('d'),
                                         char_index('e')});

  // Bytes outside the alphabet (the two-byte UTF-8 sequence) map to the
  // unknown index.
  std::string accented = "donn";
  accented += static_cast<char>(0xC3);
  accented += static_cast<char>(0xA9);
  accented += "es";
  seq = to_token_seq({accented}, TextKind::kNaturalLanguage, 8);
  CHECK(seq.chars[0] == std::vector<int>{char_index('d'), char_index('o'),
                                         char_index('n'), char_index('n'),
                                         kUnknownIndex, kUnknownIndex,
                                         char_index('e'), char_index('s')});
}

TEST_CASE("corpus loads records in file order") {
  TempDir dir;
  const std::string path = dir.file("corpus.jsonl");
  write_file(path,
             "{\"id\":\"a\",\"question\":\"sort a list\",\"code\":\"sorted(x)\"}\n"
             "{\"id\":\"b\",\"question\":\"read a file\",\"code\":\"open(p)\"}\n");
  const std::vector<RawPair> pairs = load_corpus(path);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].id == "a");
  CHECK(pairs[0].question == "sort a list");
  CHECK(pairs[1].code == "open(p)");
}

TEST_CASE("corpus errors carry the failing line") {
  TempDir dir;
  const std::string path = dir.file("bad.jsonl");
  write_file(path,
             "{\"id\":\"a\",\"question\":\"q\",\"code\":\"c\"}\n"
             "{\"id\":\"b\",\"question\":\"q\"}\n");
  try {
    load_corpus(path);
    FAIL("expected an error");
  } catch (const std::runtime_error &e) {
    const std::string msg = e.what();
    CHECK(msg.find(":2") != std::string::npos);
    CHECK(msg.find("code") != std::string::npos);
  }
}

TEST_CASE("empty corpus file is empty, not an error") {
  TempDir dir;
  const std::string path = dir.file("empty.jsonl");
  write_file(path, "");
  CHECK(load_corpus(path).empty());
}

TEST_CASE("duplicate ids and empty fields are rejected") {
  TempDir dir;
  const std::string dup = dir.file("dup.jsonl");
  write_file(dup,
             "{\"id\":\"a\",\"question\":\"q\",\"code\":\"c\"}\n"
             "{\"id\":\"a\",\"question\":\"r\",\"code\":\"d\"}\n");
  CHECK_THROWS_WITH_AS(load_corpus(dup), doctest::Contains("duplicate"),
                       std::runtime_error);

  const std::string blank = dir.file("blank.jsonl");
  write_file(blank, "{\"id\":\"a\",\"question\":\"  \",\"code\":\"c\"}\n");
  CHECK_THROWS_AS(load_corpus(blank), std::runtime_error);
  // Candidate pools may omit the question.
  CHECK(load_corpus(blank, /*allow_empty_question=*/true).size() == 1);

  const std::string noq = dir.file("noq.jsonl");
  write_file(noq, "{\"id\":\"a\",\"code\":\"c\"}\n");
  CHECK(load_corpus(noq, /*allow_empty_question=*/true).size() == 1);
}

TEST_CASE("missing corpus file names the path") {
  try {
    load_corpus("/nonexistent/x.jsonl");
    FAIL("expected an error");
  } catch (const std::runtime_error &e) {
    CHECK(std::string(e.what()).find("/nonexistent/x.jsonl") !=
          std::string::npos);
  }
}

TEST_CASE("case building draws distinct negatives around one positive") {
  std::vector<RawPair> pairs;
  for (int i = 0; i < 51; ++i) {
    pairs.push_back({"id" + std::to_string(i), "q" + std::to_string(i),
                     "c" + std::to_string(i)});
  }
  const std::vector<RetrievalCase> cases = build_cases(pairs, 49, 7);
  REQUIRE(cases.size() == 51);
  for (size_t i = 0; i < cases.size(); ++i) {
    const RetrievalCase &c = cases[i];
    REQUIRE(c.candidate_ids.size() == 50);
    // All candidates distinct; the query's own snippet appears exactly once,
    // at positive_index.
    std::set<std::string> distinct(c.candidate_ids.begin(),
                                   c.candidate_ids.end());
    CHECK(distinct.size() == 50);
    REQUIRE(c.positive_index >= 0);
    REQUIRE(c.positive_index < 50);
    CHECK(c.candidate_ids[static_cast<size_t>(c.positive_index)] ==
          pairs[i].id);
    CHECK(std::count(c.candidate_ids.begin(), c.candidate_ids.end(),
                     pairs[i].id) == 1);
  }
}

TEST_CASE("minimal case pools and determinism") {
  std::vector<RawPair> pairs = {{"a", "qa", "ca"}, {"b", "qb", "cb"},
                                {"c", "qc", "cc"}};
  const std::vector<RetrievalCase> first = build_cases(pairs, 1, 3);
  REQUIRE(first.size() == 3);
  for (const RetrievalCase &c : first) CHECK(c.candidate_ids.size() == 2);

  const std::vector<RetrievalCase> second = build_cases(pairs, 1, 3);
  REQUIRE(second.size() == first.size());
  for (size_t i = 0; i < first.size(); ++i) {
    CHECK(first[i].query_id == second[i].query_id);
    CHECK(first[i].candidate_ids == second[i].candidate_ids);
    CHECK(first[i].positive_index == second[i].positive_index);
  }

  CHECK_THROWS_AS(build_cases(pairs, 3, 1), std::invalid_argument);
}

TEST_CASE("case files round-trip") {
  TempDir dir;
  std::vector<RawPair> pairs = testutil::synthetic_corpus();
  const std::vector<RetrievalCase> cases = build_cases(pairs, 9, 11);
  const std::string path = dir.file("cases.jsonl");
  write_cases(path, cases);
  const std::vector<RetrievalCase> loaded = load_cases(path);
  REQUIRE(loaded.size() == cases.size());
  for (size_t i = 0; i < cases.size(); ++i) {
    CHECK(loaded[i].query_id == cases[i].query_id);
    CHECK(loaded[i].candidate_ids == cases[i].candidate_ids);
    CHECK(loaded[i].positive_index == cases[i].positive_index);
  }
}

TEST_CASE("tokenized output is deterministic") {
  TempDir dir;
  const std::vector<RawPair> pairs = testutil::synthetic_corpus();
  const std::string p1 = dir.file("tok1.jsonl");
  const std::string p2 = dir.file("tok2.jsonl");
  write_tokenized(p1, pairs);
  write_tokenized(p2, pairs);
  const std::string c1 = read_file(p1);
  CHECK(!c1.empty());
  CHECK(c1 == read_file(p2));
}

}  // TEST_SUITE
