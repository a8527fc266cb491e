#include "model.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "checkpoint.hpp"

namespace ocor {

namespace {

const char *side_name(Side side) {
  return side == Side::kNl ? "nl" : "code";
}

std::string cross_prefix(Side query_side) {
  return query_side == Side::kNl ? "cross.nl2code" : "cross.code2nl";
}

}  // namespace

std::vector<int> overlap_buckets(const TokenSeq &first,
                                 const TokenSeq &second) {
  const std::vector<double> pooled =
      pool_overlap_vector(overlap_matrix(first, second));
  std::vector<int> buckets;
  buckets.reserve(pooled.size());
  for (double s : pooled) buckets.push_back(bucketize(s));
  return buckets;
}

Model::Model(const ModelConfig &cfg, uint64_t seed) : config_(cfg) {
  config_.validate();
  build_params(seed);
}

void Model::build_params(uint64_t seed) {
  const int d = config_.embed_dim;
  const int dk = d / config_.heads;
  const int k = config_.conv_kernel;
  const int cw = config_.conv_width_first;
  Rng rng(seed);

  auto add_normal = [&](const std::string &name, std::vector<int> shape,
                        double stddev) {
    Tensor t = Tensor::zeros(std::move(shape));
    init_normal(t, stddev, rng);
    params_.add(name, t);
  };
  auto add_fanin = [&](const std::string &name, std::vector<int> shape,
                       int fan_in) {
    Tensor t = Tensor::zeros(std::move(shape));
    init_uniform_fanin(t, fan_in, rng);
    params_.add(name, t);
  };
  auto add_const = [&](const std::string &name, std::vector<int> shape,
                       double value) {
    params_.add(name, Tensor::full(std::move(shape), value));
  };
  auto add_heads = [&](const std::string &prefix, const char *role) {
    for (int h = 0; h < config_.heads; ++h) {
      add_fanin(prefix + "." + role + std::to_string(h), {d, dk}, d);
    }
  };

  // Embedding tables and the character conv stack are shared between the
  // natural-language and code sides.
  add_normal("embed.char", {kAlphabetSize, d}, 0.02);
  add_normal("embed.bucket", {kAlphabetSize, d}, 0.02);
  add_fanin("char_conv1", {3, d, d}, 3 * d);
  add_fanin("char_conv2", {5, d, d}, 5 * d);
  add_fanin("char_conv3", {config_.char_len, d, d}, config_.char_len * d);

  for (Side side : {Side::kNl, Side::kCode}) {
    for (int m = 0; m < config_.depth; ++m) {
      const std::string mech = std::string("enc.") + side_name(side) + ".m" +
                               std::to_string(m);
      add_heads(mech + ".attn", "q");
      add_heads(mech + ".attn", "k");
      add_heads(mech + ".attn", "v");
      add_fanin(mech + ".attn.out", {d, d}, d);
      add_heads(mech + ".gate", "q");
      add_heads(mech + ".gate", "ko");
      add_heads(mech + ".gate", "vo");
      add_heads(mech + ".gate", "kc");
      add_heads(mech + ".gate", "vc");
      add_fanin(mech + ".gate.out", {d, d}, d);
      add_fanin(mech + ".conv1", {k, d, cw}, k * d);
      add_fanin(mech + ".conv2", {k, cw, d}, k * cw);
      add_const(mech + ".ln.gain", {d}, 1.0);
      add_const(mech + ".ln.bias", {d}, 0.0);
    }
    const std::string pool = std::string("pool.") + side_name(side);
    add_fanin(pool + ".conv", {k, d, d}, k * d);
    add_normal(pool + ".pad", {d}, 0.02);
  }

  for (Side side : {Side::kNl, Side::kCode}) {
    const std::string cx = cross_prefix(side);
    add_heads(cx + ".attn", "q");
    add_heads(cx + ".attn", "k");
    add_heads(cx + ".attn", "v");
    add_fanin(cx + ".attn.out", {d, d}, d);
    add_fanin(cx + ".conv1", {k, d, d}, k * d);
    add_fanin(cx + ".conv2", {k, d, d}, k * d);
  }

  add_fanin("mlp.w1", {4 * d, config_.mlp_hidden}, 4 * d);
  add_const("mlp.b1", {config_.mlp_hidden}, 0.0);
  add_fanin("mlp.w2", {config_.mlp_hidden, 2}, config_.mlp_hidden);
  add_const("mlp.b2", {2}, 0.0);
}

Model Model::load_from(const std::string &checkpoint_path) {
  const CheckpointHeader header = load_checkpoint_header(checkpoint_path);
  Model model(ModelConfig::from_text(header.config_text), /*seed=*/0);
  const CheckpointHeader loaded =
      load_checkpoint(checkpoint_path, model.params_);
  model.step_count_ = loaded.step_count;
  return model;
}

void Model::save_to(const std::string &checkpoint_path) const {
  save_checkpoint(checkpoint_path, config_, params_, step_count_);
}

TokenSeq Model::prepare_nl(const std::string &text) const {
  return truncate_seq(
      tokenize_to_seq(text, TextKind::kNaturalLanguage, config_.char_len),
      config_.max_len_nl);
}

TokenSeq Model::prepare_code(const std::string &text) const {
  return truncate_seq(tokenize_to_seq(text, TextKind::kCode, config_.char_len),
                      config_.max_len_code);
}

Tensor Model::char_embed(const TokenSeq &seq) const {
  if (seq.empty()) throw std::invalid_argument("char_embed: empty sequence");
  if (seq.char_len != config_.char_len) {
    throw std::invalid_argument("char_embed: sequence char length " +
                                std::to_string(seq.char_len) +
                                " does not match the model");
  }
  const Tensor &table = params_.get("embed.char");
  const Tensor &conv1 = params_.get("char_conv1");
  const Tensor &conv2 = params_.get("char_conv2");
  const Tensor &conv3 = params_.get("char_conv3");
  // Repeated tokens (common for punctuation in code) are embedded once and
  // their rows shared; gradients accumulate through the shared subgraph.
  std::unordered_map<std::string, Tensor> unique;
  std::vector<Tensor> rows;
  rows.reserve(static_cast<size_t>(seq.size()));
  for (int i = 0; i < seq.size(); ++i) {
    auto it = unique.find(seq.tokens[static_cast<size_t>(i)]);
    if (it == unique.end()) {
      Tensor chars =
          embedding_lookup(table, seq.chars[static_cast<size_t>(i)]);
      Tensor h = gelu(conv1d(chars, conv1, ConvPadding::kZero));
      h = gelu(conv1d(h, conv2, ConvPadding::kZero));
      Tensor row = conv1d(h, conv3, ConvPadding::kNone);  // [1, d]
      it = unique.emplace(seq.tokens[static_cast<size_t>(i)], row).first;
    }
    rows.push_back(it->second);
  }
  return concat_rows(rows);
}

Tensor Model::embed_overlap(const std::vector<double> &pooled_scores) const {
  std::vector<int> buckets;
  buckets.reserve(pooled_scores.size());
  for (double s : pooled_scores) buckets.push_back(bucketize(s));
  return embed_overlap_buckets(buckets);
}

Tensor Model::embed_overlap_buckets(const std::vector<int> &buckets) const {
  if (buckets.empty()) {
    throw std::invalid_argument("embed_overlap: empty overlap vector");
  }
  return embedding_lookup(params_.get("embed.bucket"), buckets);
}

Tensor Model::position_encode(const Tensor &x) const {
  const int len = x.dim(0), d = x.dim(1);
  if (d % 2 != 0) {
    throw std::invalid_argument("position_encode: odd embedding size");
  }
  Tensor pos = Tensor::zeros({len, d});
  for (int i = 0; i < len; ++i) {
    double *row = pos.data() + static_cast<size_t>(i) * d;
    for (int j = 0; j < d / 2; ++j) {
      const double denom = std::pow(10000.0, (2.0 * j) / d);
      row[2 * j] = std::sin(i / denom);
      row[2 * j + 1] = std::cos(i / denom);
    }
  }
  return add(x, pos);
}

Tensor Model::multi_head_attention(const Tensor &q_in, const Tensor &kv_in,
                                   const std::string &prefix) const {
  const int dk = config_.embed_dim / config_.heads;
  std::vector<Tensor> heads;
  heads.reserve(static_cast<size_t>(config_.heads));
  for (int h = 0; h < config_.heads; ++h) {
    const std::string idx = std::to_string(h);
    Tensor q = matmul(q_in, params_.get(prefix + ".q" + idx));
    Tensor k = matmul(kv_in, params_.get(prefix + ".k" + idx));
    Tensor v = matmul(kv_in, params_.get(prefix + ".v" + idx));
    Tensor weights =
        softmax(scale(matmul(q, transpose(k)), 1.0 / std::sqrt(double(dk))));
    heads.push_back(matmul(weights, v));
  }
  return matmul(concat_cols(heads), params_.get(prefix + ".out"));
}

Tensor Model::gating_blend(const Tensor &q, const Tensor &k_ctrl,
                           const Tensor &v_ctrl, const Tensor &k_sem,
                           const Tensor &v_sem) {
  // The blend weight exp(q.k_ctrl) / (exp(q.k_ctrl) + exp(q.k_sem)) is the
  // sigmoid of the logit difference; computing it that way cannot overflow.
  Tensor w = sigmoid(sub(rowdot(q, k_ctrl), rowdot(q, k_sem)));
  Tensor one = Tensor::full({w.dim(0), 1}, 1.0);
  return add(mul_colvec(v_ctrl, w), mul_colvec(v_sem, sub(one, w)));
}

Tensor Model::gating(const Tensor &control, const Tensor &semantic,
                     const std::string &prefix) const {
  std::vector<Tensor> heads;
  heads.reserve(static_cast<size_t>(config_.heads));
  for (int h = 0; h < config_.heads; ++h) {
    const std::string idx = std::to_string(h);
    Tensor q = matmul(control, params_.get(prefix + ".q" + idx));
    Tensor ko = matmul(control, params_.get(prefix + ".ko" + idx));
    Tensor vo = matmul(control, params_.get(prefix + ".vo" + idx));
    Tensor kc = matmul(semantic, params_.get(prefix + ".kc" + idx));
    Tensor vc = matmul(semantic, params_.get(prefix + ".vc" + idx));
    heads.push_back(gating_blend(q, ko, vo, kc, vc));
  }
  return matmul(concat_cols(heads), params_.get(prefix + ".out"));
}

Tensor Model::encoder_forward(const TokenSeq &seq,
                              const std::vector<int> &buckets, Side side,
                              bool training, Rng *dropout_rng) const {
  if (seq.size() != static_cast<int>(buckets.size())) {
    throw std::invalid_argument(
        "encoder_forward: overlap vector length does not match the sequence");
  }
  const Tensor semantic = char_embed(seq);
  Tensor x = embed_overlap_buckets(buckets);
  for (int m = 0; m < config_.depth; ++m) {
    const std::string mech = std::string("enc.") + side_name(side) + ".m" +
                             std::to_string(m);
    Tensor positioned = position_encode(x);
    Tensor attended =
        multi_head_attention(positioned, positioned, mech + ".attn");
    Tensor gated = gating(attended, semantic, mech + ".gate");
    Tensor local = gelu(conv1d(gated, params_.get(mech + ".conv1"),
                               ConvPadding::kZero));
    local = conv1d(local, params_.get(mech + ".conv2"), ConvPadding::kZero);
    if (training) {
      local = dropout(local, config_.dropout, true, *dropout_rng);
    }
    x = layer_norm(add(x, local), params_.get(mech + ".ln.gain"),
                   params_.get(mech + ".ln.bias"));
  }
  return x;
}

Tensor Model::pool_encoder(const Tensor &x, Side side) const {
  const std::string pool = std::string("pool.") + side_name(side);
  Tensor c = conv1d(x, params_.get(pool + ".conv"),
                    ConvPadding::kSpecialVector, params_.get(pool + ".pad"));
  return max_over_rows(c);
}

Tensor Model::cross_block(const Tensor &q_enc, const Tensor &kv_enc,
                          Side query_side) const {
  const std::string cx = cross_prefix(query_side);
  Tensor a = multi_head_attention(q_enc, kv_enc, cx + ".attn");
  Tensor c = gelu(conv1d(a, params_.get(cx + ".conv1"), ConvPadding::kZero));
  c = conv1d(c, params_.get(cx + ".conv2"), ConvPadding::kZero);
  return max_over_rows(c);
}

Tensor Model::predict(const Tensor &features, bool training,
                      Rng *dropout_rng) const {
  Tensor hidden = gelu(add_rowvec(matmul(features, params_.get("mlp.w1")),
                                  params_.get("mlp.b1")));
  if (training) {
    hidden = dropout(hidden, config_.dropout, true, *dropout_rng);
  }
  Tensor logits =
      add_rowvec(matmul(hidden, params_.get("mlp.w2")), params_.get("mlp.b2"));
  return softmax(logits);
}

Tensor Model::forward_pair(const TokenSeq &query, const TokenSeq &code,
                           bool training, Rng *dropout_rng) const {
  return forward_pair_buckets(query, code, overlap_buckets(query, code),
                              overlap_buckets(code, query), training,
                              dropout_rng);
}

Tensor Model::forward_pair_buckets(const TokenSeq &query, const TokenSeq &code,
                                   const std::vector<int> &query_buckets,
                                   const std::vector<int> &code_buckets,
                                   bool training, Rng *dropout_rng) const {
  if (training && dropout_rng == nullptr) {
    throw std::invalid_argument("forward_pair: training requires an RNG");
  }
  Tensor enc_nl =
      encoder_forward(query, query_buckets, Side::kNl, training, dropout_rng);
  Tensor enc_code =
      encoder_forward(code, code_buckets, Side::kCode, training, dropout_rng);
  Tensor features = concat_cols({
      pool_encoder(enc_nl, Side::kNl),
      pool_encoder(enc_code, Side::kCode),
      cross_block(enc_nl, enc_code, Side::kNl),
      cross_block(enc_code, enc_nl, Side::kCode),
  });
  return predict(features, training, dropout_rng);
}

double Model::score_pair(const TokenSeq &query, const TokenSeq &code) const {
  NoGradGuard guard;
  Tensor probs = forward_pair(query, code, /*training=*/false, nullptr);
  return probs.data()[0];
}

double Model::score_text(const std::string &question,
                         const std::string &code) const {
  return score_pair(prepare_nl(question), prepare_code(code));
}

std::string Model::describe() const {
  std::ostringstream os;
  for (const auto &[name, t] : params_.items()) {
    os << name << "  [";
    for (size_t i = 0; i < t.shape().size(); ++i) {
      if (i) os << ",";
      os << t.shape()[i];
    }
    os << "]  " << t.numel() << "\n";
  }
  os << "parameters: " << params_.items().size()
     << "  total elements: " << params_.total_params() << "\n";
  return os.str();
}

}  // namespace ocor
