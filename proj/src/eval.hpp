#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "corpus.hpp"
#include "model.hpp"

namespace ocor {

// One evaluated case: candidate scores, the descending-score order (ties
// broken by ascending candidate index), and the 1-based rank of the positive.
struct ScoredRanking {
  std::string case_id;
  std::vector<double> scores;
  std::vector<int> order;
  int positive_rank = 0;
};

ScoredRanking rank_scores(const std::string &case_id,
                          const std::vector<double> &scores,
                          int positive_index);

// Mean reciprocal rank over a non-empty ranking list.
double mrr(const std::vector<ScoredRanking> &rankings);

// lambda * s1 + (1 - lambda) * s2, lambda in [0,1].
double ensemble(double s1, double s2, double lambda);

// External per-(case, candidate) scores loaded from a JSON-lines file with
// fields "case_id", "candidate_id", "score".
struct ScoreFile {
  std::string path;
  std::unordered_map<std::string, std::unordered_map<std::string, double>>
      by_case;
};

ScoreFile load_score_file(const std::string &path);

// Scores for one case in candidate order. A missing entry is an error. When
// any value falls outside (0,1) the case is min-max normalized and a warning
// is appended to *warnings.
std::vector<double> case_scores(const ScoreFile &file, const RetrievalCase &c,
                                std::vector<std::string> *warnings);

// Scores every case with the model; `threads` > 1 evaluates cases in
// parallel against the read-only parameters. Results are ordered like
// `cases` regardless of thread count.
std::vector<ScoredRanking> score_cases(const Model &model,
                                       const std::vector<RawPair> &corpus,
                                       const std::vector<RetrievalCase> &cases,
                                       int threads);

// Convenience: MRR of the model over the given cases.
double model_mrr(const Model &model, const std::vector<RawPair> &corpus,
                 const std::vector<RetrievalCase> &cases, int threads);

// Full evaluation report as JSON text: per-case ranks and aggregate MRR, one
// block per external score file (its own MRR plus the lambda-ensembled MRR),
// and optionally the perfect-ranking (top-1) sets with their intersections.
std::string evaluate(const Model &model, const std::vector<RawPair> &corpus,
                     const std::vector<RetrievalCase> &cases,
                     const std::vector<std::string> &score_file_paths,
                     double lambda, bool perfect_sets, int threads);

}  // namespace ocor
