#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "config.hpp"
#include "corpus.hpp"
#include "eval.hpp"
#include "model.hpp"
#include "rng.hpp"
#include "testutil.hpp"

using namespace ocor;
using testutil::TempDir;
using testutil::write_file;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.depth = 1;
  cfg.embed_dim = 16;
  cfg.heads = 2;
  cfg.char_len = 4;
  cfg.conv_width_first = 24;
  cfg.conv_kernel = 3;
  cfg.mlp_hidden = 12;
  cfg.dropout = 0.0;
  return cfg;
}

// Score-file lines for one case over candidate ids c0..c{n-1}.
std::string score_lines(const std::string &case_id,
                        const std::vector<std::string> &candidates,
                        const std::vector<double> &scores) {
  std::string out;
  for (size_t i = 0; i < candidates.size(); ++i) {
    out += "{\"case_id\":\"" + case_id + "\",\"candidate_id\":\"" +
           candidates[i] + "\",\"score\":" + std::to_string(scores[i]) + "}\n";
  }
  return out;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("ranking orders by score with index ties") {
  ScoredRanking two = rank_scores("c", {0.2, 0.9}, 1);
  CHECK(two.positive_rank == 1);
  CHECK(two.order == std::vector<int>{1, 0});

  // All scores equal: stable order, rank = positive_index + 1.
  ScoredRanking flat = rank_scores("c", {0.5, 0.5, 0.5, 0.5}, 2);
  CHECK(flat.order == std::vector<int>{0, 1, 2, 3});
  CHECK(flat.positive_rank == 3);

  std::vector<double> fifty(50);
  Rng rng(3);
  for (double &s : fifty) s = rng.uniform();
  ScoredRanking big = rank_scores("c", fifty, 7);
  std::set<int> distinct(big.order.begin(), big.order.end());
  CHECK(distinct.size() == 50);
  CHECK(big.order.size() == 50);

  CHECK_THROWS_AS(rank_scores("c", {0.1, std::nan("")}, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(rank_scores("c", {0.1}, 5), std::invalid_argument);
}

TEST_CASE("ranking is invariant under monotone score maps") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> scores(20);
    for (double &s : scores) s = rng.uniform();
    std::vector<double> mapped(20);
    for (size_t i = 0; i < scores.size(); ++i) mapped[i] = 5.0 + 2.0 * scores[i];
    const ScoredRanking a = rank_scores("t", scores, 3);
    const ScoredRanking b = rank_scores("t", mapped, 3);
    CHECK(a.order == b.order);
    CHECK(a.positive_rank == b.positive_rank);
  }
}

TEST_CASE("mean reciprocal rank arithmetic") {
  auto ranked = [](std::vector<int> ranks) {
    std::vector<ScoredRanking> rs;
    for (int r : ranks) {
      ScoredRanking s;
      s.positive_rank = r;
      rs.push_back(s);
    }
    return rs;
  };
  CHECK(mrr(ranked({1, 1, 1})) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::fabs(mrr(ranked({1, 2, 4})) - 7.0 / 12.0) < 1e-9);
  CHECK(mrr(ranked({50})) == doctest::Approx(0.02).epsilon(1e-12));
  CHECK_THROWS_AS(mrr({}), std::invalid_argument);
}

TEST_CASE("ensemble endpoints and arithmetic") {
  CHECK(ensemble(0.8, 0.5, 1.0) == 0.8);
  CHECK(ensemble(0.8, 0.5, 0.0) == 0.5);
  CHECK(ensemble(0.8, 0.5, 0.1) == doctest::Approx(0.53).epsilon(1e-12));
  CHECK(ensemble(0.4, 0.4, 0.5) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK_THROWS_AS(ensemble(0.5, 0.5, 1.5), std::invalid_argument);
}

TEST_CASE("score files load and validate") {
  TempDir dir;
  const std::string good = dir.file("good.jsonl");
  write_file(good, score_lines("case1", {"a", "b"}, {0.9, 0.2}) +
                       score_lines("case2", {"a", "b"}, {0.1, 0.8}));
  const ScoreFile file = load_score_file(good);
  CHECK(file.by_case.at("case1").at("a") == doctest::Approx(0.9));
  CHECK(file.by_case.at("case2").at("b") == doctest::Approx(0.8));

  const std::string bad = dir.file("bad.jsonl");
  write_file(bad, "{\"case_id\":\"x\",\"candidate_id\":\"a\"}\n");
  CHECK_THROWS_WITH_AS(load_score_file(bad), doctest::Contains(":1"),
                       std::runtime_error);

  CHECK_THROWS_AS(load_score_file(dir.file("missing.jsonl")),
                  std::runtime_error);
}

TEST_CASE("case scores demand complete entries") {
  TempDir dir;
  const std::string path = dir.file("partial.jsonl");
  write_file(path, score_lines("case1", {"a"}, {0.5}));
  const ScoreFile file = load_score_file(path);
  RetrievalCase c;
  c.query_id = "case1";
  c.candidate_ids = {"a", "b"};
  c.positive_index = 0;
  CHECK_THROWS_WITH_AS(case_scores(file, c, nullptr), doctest::Contains("b"),
                       std::runtime_error);
}

TEST_CASE("out-of-range external scores are normalized per case") {
  TempDir dir;
  const std::string path = dir.file("wide.jsonl");
  write_file(path, score_lines("case1", {"a", "b", "c"}, {2.0, 8.0, 4.0}) +
                       score_lines("case2", {"a", "b"}, {0.25, 0.75}));
  const ScoreFile file = load_score_file(path);

  RetrievalCase wide;
  wide.query_id = "case1";
  wide.candidate_ids = {"a", "b", "c"};
  wide.positive_index = 0;
  std::vector<std::string> warnings;
  const std::vector<double> scaled = case_scores(file, wide, &warnings);
  CHECK(scaled[0] == doctest::Approx(0.0));
  CHECK(scaled[1] == doctest::Approx(1.0));
  CHECK(scaled[2] == doctest::Approx(1.0 / 3.0));
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("case1") != std::string::npos);

  // Values already inside (0,1) pass through untouched, no warning.
  RetrievalCase narrow;
  narrow.query_id = "case2";
  narrow.candidate_ids = {"a", "b"};
  narrow.positive_index = 1;
  warnings.clear();
  const std::vector<double> kept = case_scores(file, narrow, &warnings);
  CHECK(kept == std::vector<double>{0.25, 0.75});
  CHECK(warnings.empty());
}

TEST_CASE("constant out-of-range scores collapse to the midpoint") {
  TempDir dir;
  const std::string path = dir.file("flat.jsonl");
  write_file(path, score_lines("case1", {"a", "b"}, {3.0, 3.0}));
  const ScoreFile file = load_score_file(path);
  RetrievalCase c;
  c.query_id = "case1";
  c.candidate_ids = {"a", "b"};
  c.positive_index = 0;
  std::vector<std::string> warnings;
  const std::vector<double> scores = case_scores(file, c, &warnings);
  CHECK(scores == std::vector<double>{0.5, 0.5});
}

TEST_CASE("threaded case scoring matches serial scoring") {
  const std::vector<RawPair> pairs = testutil::synthetic_corpus();
  const std::vector<RetrievalCase> cases = build_cases(pairs, 4, 5);
  const Model model(tiny_config(), 50);

  const std::vector<ScoredRanking> serial = score_cases(model, pairs, cases, 1);
  const std::vector<ScoredRanking> threaded =
      score_cases(model, pairs, cases, 4);
  REQUIRE(serial.size() == threaded.size());
  for (size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i].case_id == threaded[i].case_id);
    CHECK(serial[i].order == threaded[i].order);
    CHECK(serial[i].scores == threaded[i].scores);
  }
  CHECK(model_mrr(model, pairs, cases, 2) == doctest::Approx(mrr(serial)));
}

TEST_CASE("cases referencing unknown ids are rejected") {
  const std::vector<RawPair> pairs = testutil::synthetic_corpus();
  const Model model(tiny_config(), 51);
  RetrievalCase c;
  c.query_id = "ghost";
  c.candidate_ids = {pairs[0].id, pairs[1].id};
  c.positive_index = 0;
  CHECK_THROWS_WITH_AS(score_cases(model, pairs, {c}, 1),
                       doctest::Contains("ghost"), std::runtime_error);
}

TEST_CASE("evaluation report carries cases, ranks and externals") {
  TempDir dir;
  const std::vector<RawPair> pairs = testutil::synthetic_corpus();
  const std::vector<RetrievalCase> cases = build_cases(pairs, 3, 13);
  const Model model(tiny_config(), 52);

  // External file that scores the positive on top for the first two cases
  // and bottom elsewhere.
  std::string lines;
  for (size_t i = 0; i < cases.size(); ++i) {
    std::vector<double> scores(cases[i].candidate_ids.size(), 0.5);
    scores[static_cast<size_t>(cases[i].positive_index)] =
        i < 2 ? 0.9 : 0.1;
    lines += score_lines(cases[i].query_id, cases[i].candidate_ids, scores);
  }
  const std::string ext_path = dir.file("external.jsonl");
  write_file(ext_path, lines);

  const std::string report_text =
      evaluate(model, pairs, cases, {ext_path}, 0.0, true, 1);
  const auto report = nlohmann::json::parse(report_text);
  CHECK(report.at("cases").get<int>() == 30);
  CHECK(report.at("per_case").size() == 30);
  CHECK(report.at("mrr").is_number());
  CHECK(report.at("lambda").get<double>() == 0.0);
  REQUIRE(report.at("externals").size() == 1);

  const auto &ext = report.at("externals").at(0);
  CHECK(ext.at("path").get<std::string>() == ext_path);
  // The constructed file ranks the positive first in exactly 2 of 30 cases;
  // ties put the positive at its own index + 1 elsewhere.
  const double expected_ext_mrr = ext.at("mrr").get<double>();
  CHECK(expected_ext_mrr > 0.0);
  // lambda = 0 reproduces the external ranking exactly.
  CHECK(ext.at("ensemble_mrr").get<double>() == expected_ext_mrr);

  const auto &ps = report.at("perfect_sets");
  REQUIRE(ps.at("models").size() == 2);
  CHECK(ps.at("sizes").size() == 2);
  CHECK(ps.at("sets").at(1).size() == 2);  // the two constructed top-1 cases
  CHECK(ps.at("pairwise_intersections").size() == 1);
  CHECK(ps.at("union_size").is_number());
  CHECK(report.at("warnings").is_array());
}

TEST_CASE("perfect set algebra over identical and disjoint files") {
  TempDir dir;
  const std::vector<RawPair> pairs = testutil::synthetic_corpus();
  std::vector<RetrievalCase> cases = build_cases(pairs, 3, 19);
  cases.resize(10);
  const Model model(tiny_config(), 53);

  auto make_file = [&](const std::string &name, int perfect_from,
                       int perfect_to) {
    std::string lines;
    for (size_t i = 0; i < cases.size(); ++i) {
      std::vector<double> scores(cases[i].candidate_ids.size(), 0.5);
      const bool top = static_cast<int>(i) >= perfect_from &&
                       static_cast<int>(i) < perfect_to;
      scores[static_cast<size_t>(cases[i].positive_index)] = top ? 0.9 : 0.1;
      lines += score_lines(cases[i].query_id, cases[i].candidate_ids, scores);
    }
    const std::string path = dir.file(name);
    write_file(path, lines);
    return path;
  };
  const std::string first = make_file("first.jsonl", 0, 3);   // cases 0,1,2
  const std::string twin = make_file("twin.jsonl", 0, 3);     // identical set
  const std::string other = make_file("other.jsonl", 3, 7);   // disjoint, 4

  const std::string report_text =
      evaluate(model, pairs, cases, {first, twin, other}, 0.1, true, 1);
  const auto report = nlohmann::json::parse(report_text);
  const auto &ps = report.at("perfect_sets");
  REQUIRE(ps.at("models").size() == 4);
  CHECK(ps.at("sizes").at(1).get<int>() == 3);
  CHECK(ps.at("sizes").at(2).get<int>() == 3);
  CHECK(ps.at("sizes").at(3).get<int>() == 4);

  // Pairwise intersections: identical files share everything, the disjoint
  // file shares nothing.
  for (const auto &entry : ps.at("pairwise_intersections")) {
    const std::string a = entry.at("a").get<std::string>();
    const std::string b = entry.at("b").get<std::string>();
    if (a == first && b == twin) CHECK(entry.at("size").get<int>() == 3);
    if (a == first && b == other) CHECK(entry.at("size").get<int>() == 0);
    if (a == twin && b == other) CHECK(entry.at("size").get<int>() == 0);
  }
  CHECK(ps.contains("triple_intersections"));
}

}  // TEST_SUITE
