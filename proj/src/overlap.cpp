#include "overlap.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ocor {

int lcs_substring_len(const std::string &s1, const std::string &s2) {
  if (s1.empty() || s2.empty()) return 0;
  const size_t n = s2.size();
  // One DP row: best[j] = longest common run ending at s1[i-1], s2[j-1].
  std::vector<int> prev(n + 1, 0), cur(n + 1, 0);
  int best = 0;
  for (size_t i = 1; i <= s1.size(); ++i) {
    for (size_t j = 1; j <= n; ++j) {
      if (s1[i - 1] == s2[j - 1]) {
        cur[j] = prev[j - 1] + 1;
        best = std::max(best, cur[j]);
      } else {
        cur[j] = 0;
      }
    }
    std::swap(prev, cur);
  }
  return best;
}

double overlap_score(const std::string &t1, const std::string &t2) {
  if (t2.empty()) {
    throw std::invalid_argument("overlap_score: empty second token");
  }
  return static_cast<double>(lcs_substring_len(t1, t2)) /
         static_cast<double>(t2.size());
}

OverlapMatrix overlap_matrix(const TokenSeq &t1, const TokenSeq &t2) {
  if (t1.empty() || t2.empty()) {
    throw std::invalid_argument("overlap_matrix: empty token sequence");
  }
  OverlapMatrix m;
  m.rows = t1.size();
  m.cols = t2.size();
  m.row_kind = t1.kind;
  m.col_kind = t2.kind;
  m.values.resize(static_cast<size_t>(m.rows) * m.cols);
  for (int i = 0; i < m.rows; ++i) {
    for (int j = 0; j < m.cols; ++j) {
      m.values[static_cast<size_t>(i) * m.cols + j] =
          overlap_score(t1.tokens[i], t2.tokens[j]);
    }
  }
  return m;
}

std::vector<double> pool_overlap_vector(const OverlapMatrix &m) {
  std::vector<double> pooled(static_cast<size_t>(m.rows));
  for (int i = 0; i < m.rows; ++i) {
    double mx = m.at(i, 0);
    for (int j = 1; j < m.cols; ++j) mx = std::max(mx, m.at(i, j));
    pooled[i] = mx;
  }
  return pooled;
}

int bucketize(double score) {
  if (!(score >= 0.0 && score <= 1.0)) {
    throw std::invalid_argument("bucketize: score outside [0,1]");
  }
  // Scores are ratios of small integers; the nudge keeps exact bucket
  // boundaries like 0.75 from falling one bucket low in floating point.
  int bucket = static_cast<int>(std::floor(score * 100.0 + 1e-9));
  return std::min(bucket, 99);
}

namespace {

int common_prefix_len(const std::string &a, const std::string &b) {
  size_t n = std::min(a.size(), b.size());
  size_t k = 0;
  while (k < n && a[k] == b[k]) ++k;
  return static_cast<int>(k);
}

int common_suffix_len(const std::string &a, const std::string &b) {
  size_t n = std::min(a.size(), b.size());
  size_t k = 0;
  while (k < n && a[a.size() - 1 - k] == b[b.size() - 1 - k]) ++k;
  return static_cast<int>(k);
}

}  // namespace

std::pair<double, double> lcp_score(const std::string &t1,
                                    const std::string &t2) {
  if (t1.empty() || t2.empty()) {
    throw std::invalid_argument("lcp_score: empty token");
  }
  int p = std::max(common_prefix_len(t1, t2), common_suffix_len(t1, t2));
  return {static_cast<double>(p) / static_cast<double>(t1.size()),
          static_cast<double>(p) / static_cast<double>(t2.size())};
}

}  // namespace ocor
