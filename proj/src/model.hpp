#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "config.hpp"
#include "overlap.hpp"
#include "rng.hpp"
#include "tensor.hpp"
#include "text.hpp"

namespace ocor {

// Encoder side / cross-attention direction selectors used to pick parameter
// groups. The two sides share the embedding tables and the character conv
// stack; attention, gating, conv and normalization weights are per side.
enum class Side { kNl, kCode };

// Bucket indices of the pooled overlap vector of `first` against `second`
// (row maxima of the directional overlap matrix, bucketized).
std::vector<int> overlap_buckets(const TokenSeq &first,
                                 const TokenSeq &second);

// The overlap-aware retrieval network. Scoring is a pure function of the
// parameters, so concurrent scoring against a frozen model is safe; training
// mutates parameters and must be single-writer.
class Model {
 public:
  Model(const ModelConfig &cfg, uint64_t seed);

  Model(const Model &) = delete;
  Model &operator=(const Model &) = delete;
  Model(Model &&) = default;

  static Model load_from(const std::string &checkpoint_path);
  void save_to(const std::string &checkpoint_path) const;

  const ModelConfig &config() const { return config_; }
  ParamStore &params() { return params_; }
  const ParamStore &params() const { return params_; }
  int64_t step_count() const { return step_count_; }
  void set_step_count(int64_t steps) { step_count_ = steps; }

  // Tokenizes and truncates to the configured caps.
  TokenSeq prepare_nl(const std::string &text) const;
  TokenSeq prepare_code(const std::string &text) const;

  // Class probabilities [1,2] for a (query, code) pair; class index 0 is
  // "related" and its probability is the relevance score. `dropout_rng`
  // drives the dropout masks and is required when training.
  Tensor forward_pair(const TokenSeq &query, const TokenSeq &code,
                      bool training, Rng *dropout_rng) const;
  // Same, with precomputed overlap bucket indices for both directions.
  Tensor forward_pair_buckets(const TokenSeq &query, const TokenSeq &code,
                              const std::vector<int> &query_buckets,
                              const std::vector<int> &code_buckets,
                              bool training, Rng *dropout_rng) const;

  // Relevance score in (0,1); inference mode, no gradient graph.
  double score_pair(const TokenSeq &query, const TokenSeq &code) const;
  double score_text(const std::string &question, const std::string &code) const;

  // Parameter names, shapes, and element counts, one line each, plus totals.
  std::string describe() const;

  // ---- stages, exposed so properties can be exercised in isolation ----

  // Per-token embeddings from the character conv stack: [L, d].
  Tensor char_embed(const TokenSeq &seq) const;
  // Bucket-embedding rows for a pooled overlap vector: [L, d].
  Tensor embed_overlap(const std::vector<double> &pooled_scores) const;
  Tensor embed_overlap_buckets(const std::vector<int> &buckets) const;
  // Adds the fixed sinusoidal position vectors to each row.
  Tensor position_encode(const Tensor &x) const;
  // Multi-head attention with this model's weights under `prefix`
  // (e.g. "enc.nl.m0.attn"); self-attention is q_in == kv_in.
  Tensor multi_head_attention(const Tensor &q_in, const Tensor &kv_in,
                              const std::string &prefix) const;
  // Attention-weighted convex blend of two per-position value streams; the
  // blend weight per row is derived from q against the two keys. Pure.
  static Tensor gating_blend(const Tensor &q, const Tensor &k_ctrl,
                             const Tensor &v_ctrl, const Tensor &k_sem,
                             const Tensor &v_sem);
  // Full gating layer: control stream vs. character-level semantic stream.
  Tensor gating(const Tensor &control, const Tensor &semantic,
                const std::string &prefix) const;
  // The N-mechanism encoder over one side.
  Tensor encoder_forward(const TokenSeq &seq, const std::vector<int> &buckets,
                         Side side, bool training, Rng *dropout_rng) const;
  // Final conv (learned-pad) + elementwise max over positions: [1, d].
  Tensor pool_encoder(const Tensor &x, Side side) const;
  // One cross-attention direction: attention, two convs, max pool: [1, d].
  Tensor cross_block(const Tensor &q_enc, const Tensor &kv_enc,
                     Side query_side) const;
  // Two-layer prediction head over the concatenated [1, 4d] features.
  Tensor predict(const Tensor &features, bool training,
                 Rng *dropout_rng) const;

 private:
  void build_params(uint64_t seed);

  ModelConfig config_;
  ParamStore params_;
  int64_t step_count_ = 0;
};

}  // namespace ocor
