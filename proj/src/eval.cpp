#include "eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace ocor {

namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

}  // namespace

ScoredRanking rank_scores(const std::string &case_id,
                          const std::vector<double> &scores,
                          int positive_index) {
  const int n = static_cast<int>(scores.size());
  if (n < 1) throw std::invalid_argument("rank_scores: no candidates");
  if (positive_index < 0 || positive_index >= n) {
    throw std::invalid_argument("rank_scores: positive index out of range");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) {
      throw std::invalid_argument("rank_scores: non-finite score in case " +
                                  case_id);
    }
  }
  ScoredRanking r;
  r.case_id = case_id;
  r.scores = scores;
  r.order.resize(static_cast<size_t>(n));
  std::iota(r.order.begin(), r.order.end(), 0);
  std::stable_sort(r.order.begin(), r.order.end(),
                   [&](int a, int b) { return scores[static_cast<size_t>(a)] >
                                              scores[static_cast<size_t>(b)]; });
  for (int pos = 0; pos < n; ++pos) {
    if (r.order[static_cast<size_t>(pos)] == positive_index) {
      r.positive_rank = pos + 1;
      break;
    }
  }
  return r;
}

double mrr(const std::vector<ScoredRanking> &rankings) {
  if (rankings.empty()) {
    throw std::invalid_argument("mrr: empty ranking list");
  }
  double sum = 0.0;
  for (const ScoredRanking &r : rankings) {
    sum += 1.0 / static_cast<double>(r.positive_rank);
  }
  return sum / static_cast<double>(rankings.size());
}

double ensemble(double s1, double s2, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("ensemble: lambda must be in [0,1]");
  }
  return lambda * s1 + (1.0 - lambda) * s2;
}

ScoreFile load_score_file(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("scores: cannot open " + path);
  ScoreFile file;
  file.path = path;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error &e) {
      throw std::runtime_error(where + ": malformed record: " + e.what());
    }
    if (!obj.contains("case_id") || !obj["case_id"].is_string() ||
        !obj.contains("candidate_id") || !obj["candidate_id"].is_string() ||
        !obj.contains("score") || !obj["score"].is_number()) {
      throw std::runtime_error(
          where + ": expected string case_id, string candidate_id, numeric score");
    }
    const double score = obj["score"].get<double>();
    if (!std::isfinite(score)) {
      throw std::runtime_error(where + ": non-finite score");
    }
    file.by_case[obj["case_id"].get<std::string>()]
                [obj["candidate_id"].get<std::string>()] = score;
  }
  return file;
}

std::vector<double> case_scores(const ScoreFile &file, const RetrievalCase &c,
                                std::vector<std::string> *warnings) {
  auto case_it = file.by_case.find(c.query_id);
  if (case_it == file.by_case.end()) {
    throw std::runtime_error("scores: " + file.path + " has no entries for case " +
                             c.query_id);
  }
  std::vector<double> scores;
  scores.reserve(c.candidate_ids.size());
  for (const std::string &cid : c.candidate_ids) {
    auto it = case_it->second.find(cid);
    if (it == case_it->second.end()) {
      throw std::runtime_error("scores: " + file.path + " is missing case " +
                               c.query_id + " candidate " + cid);
    }
    scores.push_back(it->second);
  }
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  if (*lo <= 0.0 || *hi >= 1.0) {
    const double span = *hi - *lo;
    const double min = *lo;
    for (double &s : scores) {
      s = span > 0.0 ? (s - min) / span : 0.5;
    }
    if (warnings != nullptr) {
      warnings->push_back("score file " + file.path + ": case " + c.query_id +
                          " scores outside (0,1); min-max normalized");
    }
  }
  return scores;
}

std::vector<ScoredRanking> score_cases(const Model &model,
                                       const std::vector<RawPair> &corpus,
                                       const std::vector<RetrievalCase> &cases,
                                       int threads) {
  std::unordered_map<std::string, const RawPair *> by_id;
  for (const RawPair &p : corpus) by_id[p.id] = &p;
  auto find_pair = [&](const std::string &id) -> const RawPair & {
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw std::runtime_error("eval: case references unknown id \"" + id +
                               "\"");
    }
    return *it->second;
  };
  // Tokenize each referenced pair once, up front.
  std::unordered_map<std::string, TokenSeq> query_seqs, code_seqs;
  for (const RetrievalCase &c : cases) {
    if (!query_seqs.count(c.query_id)) {
      query_seqs.emplace(c.query_id,
                         model.prepare_nl(find_pair(c.query_id).question));
    }
    for (const std::string &cid : c.candidate_ids) {
      if (!code_seqs.count(cid)) {
        code_seqs.emplace(cid, model.prepare_code(find_pair(cid).code));
      }
    }
  }
  std::vector<ScoredRanking> rankings(cases.size());
  auto worker = [&](size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i) {
      const RetrievalCase &c = cases[i];
      const TokenSeq &query = query_seqs.at(c.query_id);
      std::vector<double> scores;
      scores.reserve(c.candidate_ids.size());
      for (const std::string &cid : c.candidate_ids) {
        scores.push_back(model.score_pair(query, code_seqs.at(cid)));
      }
      rankings[i] = rank_scores(c.query_id, scores, c.positive_index);
    }
  };
  const int n_threads =
      std::max(1, std::min(threads, static_cast<int>(cases.size())));
  if (n_threads <= 1) {
    worker(0, cases.size());
  } else {
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const size_t chunk =
        (cases.size() + static_cast<size_t>(n_threads) - 1) /
        static_cast<size_t>(n_threads);
    for (int t = 0; t < n_threads; ++t) {
      const size_t begin = static_cast<size_t>(t) * chunk;
      const size_t end = std::min(cases.size(), begin + chunk);
      if (begin >= end) break;
      pool.emplace_back([&, begin, end]() {
        try {
          worker(begin, end);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      });
    }
    for (std::thread &t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }
  return rankings;
}

double model_mrr(const Model &model, const std::vector<RawPair> &corpus,
                 const std::vector<RetrievalCase> &cases, int threads) {
  return mrr(score_cases(model, corpus, cases, threads));
}

std::string evaluate(const Model &model, const std::vector<RawPair> &corpus,
                     const std::vector<RetrievalCase> &cases,
                     const std::vector<std::string> &score_file_paths,
                     double lambda, bool perfect_sets, int threads) {
  if (cases.empty()) throw std::invalid_argument("eval: no cases");
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("eval: lambda must be in [0,1]");
  }
  std::vector<std::string> warnings;
  const std::vector<ScoredRanking> model_rankings =
      score_cases(model, corpus, cases, threads);

  ordered_json report;
  report["cases"] = cases.size();
  report["mrr"] = mrr(model_rankings);
  ordered_json per_case = ordered_json::array();
  for (const ScoredRanking &r : model_rankings) {
    ordered_json entry;
    entry["case_id"] = r.case_id;
    entry["positive_rank"] = r.positive_rank;
    entry["reciprocal_rank"] = 1.0 / r.positive_rank;
    per_case.push_back(std::move(entry));
  }
  report["per_case"] = std::move(per_case);

  // Rankings per model, for the perfect-set analysis: this model first.
  std::vector<std::string> model_names = {"model"};
  std::vector<const std::vector<ScoredRanking> *> all_rankings;
  std::vector<std::vector<ScoredRanking>> external_rankings;
  std::vector<std::vector<ScoredRanking>> ensembled_rankings;

  if (!score_file_paths.empty()) {
    report["lambda"] = lambda;
    ordered_json externals = ordered_json::array();
    for (const std::string &path : score_file_paths) {
      const ScoreFile file = load_score_file(path);
      std::vector<ScoredRanking> ext, mixed;
      ext.reserve(cases.size());
      mixed.reserve(cases.size());
      for (size_t i = 0; i < cases.size(); ++i) {
        const std::vector<double> ext_scores =
            case_scores(file, cases[i], &warnings);
        ext.push_back(rank_scores(cases[i].query_id, ext_scores,
                                  cases[i].positive_index));
        std::vector<double> mixed_scores(ext_scores.size());
        for (size_t j = 0; j < ext_scores.size(); ++j) {
          mixed_scores[j] =
              ensemble(model_rankings[i].scores[j], ext_scores[j], lambda);
        }
        mixed.push_back(rank_scores(cases[i].query_id, mixed_scores,
                                    cases[i].positive_index));
      }
      ordered_json entry;
      entry["path"] = path;
      entry["mrr"] = mrr(ext);
      entry["ensemble_mrr"] = mrr(mixed);
      externals.push_back(std::move(entry));
      external_rankings.push_back(std::move(ext));
      ensembled_rankings.push_back(std::move(mixed));
      model_names.push_back(path);
    }
    report["externals"] = std::move(externals);
  }

  if (perfect_sets) {
    all_rankings.push_back(&model_rankings);
    for (const auto &ext : external_rankings) all_rankings.push_back(&ext);
    std::vector<std::set<std::string>> top1(all_rankings.size());
    for (size_t m = 0; m < all_rankings.size(); ++m) {
      for (const ScoredRanking &r : *all_rankings[m]) {
        if (r.positive_rank == 1) top1[m].insert(r.case_id);
      }
    }
    ordered_json ps;
    ps["models"] = model_names;
    ordered_json sizes = ordered_json::array();
    ordered_json sets = ordered_json::array();
    std::set<std::string> all_union;
    for (const auto &s : top1) {
      sizes.push_back(s.size());
      sets.push_back(std::vector<std::string>(s.begin(), s.end()));
      all_union.insert(s.begin(), s.end());
    }
    ps["sizes"] = std::move(sizes);
    ps["sets"] = std::move(sets);
    auto intersection_size = [](const std::set<std::string> &a,
                                const std::set<std::string> &b) {
      size_t n = 0;
      for (const std::string &x : a) n += b.count(x);
      return n;
    };
    ordered_json pairwise = ordered_json::array();
    for (size_t a = 0; a < top1.size(); ++a) {
      for (size_t b = a + 1; b < top1.size(); ++b) {
        ordered_json entry;
        entry["a"] = model_names[a];
        entry["b"] = model_names[b];
        entry["size"] = intersection_size(top1[a], top1[b]);
        pairwise.push_back(std::move(entry));
      }
    }
    ps["pairwise_intersections"] = std::move(pairwise);
    if (top1.size() >= 3) {
      ordered_json triples = ordered_json::array();
      for (size_t a = 0; a < top1.size(); ++a) {
        for (size_t b = a + 1; b < top1.size(); ++b) {
          for (size_t c = b + 1; c < top1.size(); ++c) {
            size_t n = 0;
            for (const std::string &x : top1[a]) {
              if (top1[b].count(x) && top1[c].count(x)) ++n;
            }
            ordered_json entry;
            entry["a"] = model_names[a];
            entry["b"] = model_names[b];
            entry["c"] = model_names[c];
            entry["size"] = n;
            triples.push_back(std::move(entry));
          }
        }
      }
      ps["triple_intersections"] = std::move(triples);
    }
    ps["union_size"] = all_union.size();
    report["perfect_sets"] = std::move(ps);
  }

  report["warnings"] = warnings;
  return report.dump(2);
}

}  // namespace ocor
