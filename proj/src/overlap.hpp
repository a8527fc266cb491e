#pragma once

#include <string>
#include <utility>
#include <vector>

#include "text.hpp"

namespace ocor {

// Directional token-pair overlap scores between two sequences. values[i][j]
// is the overlap of T1's token i against T2's token j, normalized by the
// length of T2's token, so A(T1,T2) is generally not A(T2,T1) transposed.
struct OverlapMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;  // row-major, rows*cols, each in [0,1]
  TextKind row_kind = TextKind::kNaturalLanguage;
  TextKind col_kind = TextKind::kCode;

  double at(int i, int j) const { return values[static_cast<size_t>(i) * cols + j]; }
};

// Length of the longest contiguous substring common to s1 and s2.
int lcs_substring_len(const std::string &s1, const std::string &s2);

// lcs_substring_len(t1,t2) / len(t2). Directional: normalized by the second
// argument. t2 must be non-empty.
double overlap_score(const std::string &t1, const std::string &t2);

OverlapMatrix overlap_matrix(const TokenSeq &t1, const TokenSeq &t2);

// Row maxima of the matrix: one score per token of the first sequence.
std::vector<double> pool_overlap_vector(const OverlapMatrix &m);

// Bucket index in [0,100) for a score in [0,1]; width 0.01, 1.0 lands in 99.
int bucketize(double score);

// Ablation metric: p = max(common prefix length, common suffix length),
// returned as (p/len(t1), p/len(t2)). Both tokens must be non-empty.
std::pair<double, double> lcp_score(const std::string &t1,
                                    const std::string &t2);

}  // namespace ocor
