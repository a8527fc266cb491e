#include <doctest.h>

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "config.hpp"
#include "model.hpp"
#include "overlap.hpp"
#include "testutil.hpp"
#include "text.hpp"
#include "train.hpp"

using namespace ocor;
using testutil::TempDir;
using testutil::random_tensor;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.depth = 2;
  cfg.embed_dim = 16;
  cfg.heads = 2;
  cfg.char_len = 4;
  cfg.conv_width_first = 24;
  cfg.conv_kernel = 3;
  cfg.mlp_hidden = 12;
  cfg.dropout = 0.2;
  return cfg;
}

double cosine(const double *a, const double *b, int n) {
  double dot = 0, na = 0, nb = 0;
  for (int i = 0; i < n; ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::sqrt(na * nb);
}

bool tensors_close(const Tensor &a, const Tensor &b, double tol) {
  if (a.shape() != b.shape()) return false;
  for (int64_t i = 0; i < a.numel(); ++i) {
    if (std::fabs(a.data()[i] - b.data()[i]) > tol) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("overlap embedding rows follow the buckets") {
  const Model model(tiny_config(), 1);
  const int d = model.config().embed_dim;

  // Equal scores land in equal buckets and produce identical rows.
  const Tensor zeros = model.embed_overlap({0.0, 0.0});
  REQUIRE(zeros.shape() == std::vector<int>{2, d});
  CHECK(tensors_close(model.embed_overlap({0.0}), model.embed_overlap({0.0}),
                      0.0));
  for (int c = 0; c < d; ++c) {
    CHECK(zeros.data()[c] == zeros.data()[d + c]);
  }

  const std::vector<double> pooled = {0.3, 0.75, 0.4, 0.3};
  std::vector<int> idx;
  for (double s : pooled) idx.push_back(bucketize(s));
  CHECK(idx == std::vector<int>{30, 75, 40, 30});
  const Tensor rows = model.embed_overlap(pooled);
  REQUIRE(rows.shape() == std::vector<int>{4, d});
  for (int c = 0; c < d; ++c) {
    CHECK(rows.data()[c] == rows.data()[3 * d + c]);  // first row == last row
  }
  const Tensor direct = model.embed_overlap_buckets({30, 75, 40, 30});
  CHECK(tensors_close(rows, direct, 0.0));

  // Scores inside one bucket share a row.
  const Tensor same_bucket = model.embed_overlap({0.301, 0.309});
  for (int c = 0; c < d; ++c) {
    CHECK(same_bucket.data()[c] == same_bucket.data()[d + c]);
  }
}

TEST_CASE("position encoding starts at the identity row pattern") {
  const Model model(tiny_config(), 2);
  const int d = model.config().embed_dim;
  const Tensor table = model.position_encode(Tensor::zeros({3, d}));
  for (int c = 0; c < d; c += 2) CHECK(table.data()[c] == doctest::Approx(0.0));
  for (int c = 1; c < d; c += 2) CHECK(table.data()[c] == doctest::Approx(1.0));
  CHECK(table.data()[d] - table.data()[0] ==
        doctest::Approx(std::sin(1.0)).epsilon(1e-9));

  // Added, not concatenated: nonzero input rows shift by the same table.
  const Tensor x = Tensor::full({3, d}, 0.25);
  const Tensor moved = model.position_encode(x);
  for (int64_t i = 0; i < moved.numel(); ++i) {
    CHECK(moved.data()[i] == doctest::Approx(table.data()[i] + 0.25));
  }
}

TEST_CASE("attention against a single key copies the projected value") {
  const Model model(tiny_config(), 3);
  const int d = model.config().embed_dim;
  Rng rng(10);
  const Tensor q = random_tensor({4, d}, rng, -1, 1, false);
  const Tensor kv1 = random_tensor({1, d}, rng, -1, 1, false);

  const Tensor out1 = model.multi_head_attention(q, kv1, "enc.nl.m0.attn");
  REQUIRE(out1.shape() == std::vector<int>{4, d});
  // Every query row attends to the only key with weight exactly 1.
  for (int r = 1; r < 4; ++r) {
    for (int c = 0; c < d; ++c) {
      CHECK(out1.data()[r * d + c] == doctest::Approx(out1.data()[c]));
    }
  }

  // Identical key rows give uniform weights, matching the single-key output.
  Tensor kv3 = Tensor::zeros({3, d});
  for (int r = 0; r < 3; ++r) {
    std::memcpy(kv3.data() + r * d, kv1.data(), sizeof(double) * d);
  }
  const Tensor out3 = model.multi_head_attention(q, kv3, "enc.nl.m0.attn");
  CHECK(tensors_close(out1, out3, 1e-9));
}

TEST_CASE("character embedding is deterministic with one row per token") {
  ModelConfig cfg = tiny_config();
  const Model model(cfg, 4);
  const TokenSeq two = to_token_seq({"msg", "msg"}, TextKind::kCode,
                                    cfg.char_len);
  const Tensor rows = model.char_embed(two);
  REQUIRE(rows.shape() == std::vector<int>{2, cfg.embed_dim});
  for (int c = 0; c < cfg.embed_dim; ++c) {
    CHECK(rows.data()[c] == rows.data()[cfg.embed_dim + c]);
  }

  const TokenSeq seven = to_token_seq(
      {"a", "b", "c", "d", "e", "f", "g"}, TextKind::kCode, cfg.char_len);
  CHECK(model.char_embed(seven).shape() ==
        std::vector<int>{7, cfg.embed_dim});
}

TEST_CASE("near-identical identifiers embed nearby after training") {
  ModelConfig cfg = tiny_config();
  cfg.char_len = 16;  // keep the full identifiers, they differ at the tail
  Model model(cfg, 5);

  const std::vector<RawPair> pairs = {
      {"a", "update the joint table b", "UPDATE joint_table_b SET x = 1"},
      {"b", "update the joint table c", "UPDATE joint_table_c SET x = 1"},
      {"c", "sort the results", "SELECT * FROM t ORDER BY x"},
  };
  TrainConfig tc;
  tc.epochs = 2;
  tc.negatives = 1;
  tc.batch_size = 4;
  tc.seed = 9;
  train(model, pairs, tc, nullptr, nullptr);

  const TokenSeq probes = to_token_seq(
      {"joint_table_b", "joint_table_c", "zqxwvukmhgfdy"}, TextKind::kCode,
      cfg.char_len);
  const Tensor rows = model.char_embed(probes);
  const int d = cfg.embed_dim;
  const double near = cosine(rows.data(), rows.data() + d, d);
  const double far = cosine(rows.data(), rows.data() + 2 * d, d);
  CHECK(near > far);
}

TEST_CASE("gating blends are convex per element") {
  Rng rng(20);
  const int d = 8;
  for (int trial = 0; trial < 1000; ++trial) {
    const Tensor q = random_tensor({3, d}, rng, -2, 2, false);
    const Tensor ko = random_tensor({3, d}, rng, -2, 2, false);
    const Tensor vo = random_tensor({3, d}, rng, -2, 2, false);
    const Tensor kc = random_tensor({3, d}, rng, -2, 2, false);
    const Tensor vc = random_tensor({3, d}, rng, -2, 2, false);
    const Tensor h = Model::gating_blend(q, ko, vo, kc, vc);
    for (int64_t i = 0; i < h.numel(); ++i) {
      const double lo = std::min(vo.data()[i], vc.data()[i]);
      const double hi = std::max(vo.data()[i], vc.data()[i]);
      CHECK(h.data()[i] >= lo - 1e-12);
      CHECK(h.data()[i] <= hi + 1e-12);
    }
  }
}

TEST_CASE("equal gate attention yields the midpoint of both streams") {
  Rng rng(21);
  const int d = 6;
  const Tensor q = random_tensor({2, d}, rng, -1, 1, false);
  const Tensor k = random_tensor({2, d}, rng, -1, 1, false);
  const Tensor vo = random_tensor({2, d}, rng, -1, 1, false);
  const Tensor vc = random_tensor({2, d}, rng, -1, 1, false);
  // Identical keys on both streams make the two attention terms equal.
  const Tensor h = Model::gating_blend(q, k, vo, k, vc);
  for (int64_t i = 0; i < h.numel(); ++i) {
    CHECK(h.data()[i] ==
          doctest::Approx((vo.data()[i] + vc.data()[i]) / 2.0));
  }
}

TEST_CASE("gating responds to the semantic stream") {
  const Model model(tiny_config(), 6);
  const int d = model.config().embed_dim;
  Rng rng(22);
  const Tensor control = random_tensor({3, d}, rng, -1, 1, false);
  const Tensor semantic = random_tensor({3, d}, rng, -1, 1, false);
  const Tensor base = model.gating(control, semantic, "enc.nl.m0.gate");

  Tensor shifted = Tensor::zeros({3, d});
  std::memcpy(shifted.data(), semantic.data(), sizeof(double) * 3 * d);
  shifted.data()[0] += 0.5;
  const Tensor moved = model.gating(control, shifted, "enc.nl.m0.gate");
  CHECK(!tensors_close(base, moved, 1e-9));
}

TEST_CASE("encoder output shape and depth sensitivity") {
  ModelConfig cfg = tiny_config();
  const Model deep(cfg, 7);
  ModelConfig shallow_cfg = cfg;
  shallow_cfg.depth = 1;
  const Model shallow(shallow_cfg, 7);

  const TokenSeq seq = tokenize_to_seq("open the file", TextKind::kNaturalLanguage,
                                       cfg.char_len);
  const std::vector<int> buckets = {10, 55, 90};
  const Tensor a = deep.encoder_forward(seq, buckets, Side::kNl, false, nullptr);
  const Tensor b =
      shallow.encoder_forward(seq, buckets, Side::kNl, false, nullptr);
  REQUIRE(a.shape() == std::vector<int>{3, cfg.embed_dim});
  REQUIRE(b.shape() == std::vector<int>{3, cfg.embed_dim});
  CHECK(!tensors_close(a, b, 1e-9));
}

TEST_CASE("zeroed mechanisms collapse the encoder to layer-normed embeddings") {
  ModelConfig cfg = tiny_config();
  // One mechanism: its normalization is the only thing left after zeroing,
  // so the encoder must reduce to a single layer norm of the embeddings.
  cfg.depth = 1;
  Model model(cfg, 8);
  for (const auto &[name, tensor] : model.params().items()) {
    if (name.rfind("enc.", 0) == 0 && name.find(".ln.") == std::string::npos) {
      Tensor t = tensor;
      std::fill(t.data(), t.data() + t.numel(), 0.0);
    }
  }
  const TokenSeq seq = tokenize_to_seq("sort numbers quickly",
                                       TextKind::kNaturalLanguage, cfg.char_len);
  const std::vector<int> buckets = {5, 42, 77};
  const Tensor out =
      model.encoder_forward(seq, buckets, Side::kNl, false, nullptr);

  const Tensor embedded = model.embed_overlap_buckets(buckets);
  const Tensor expected =
      layer_norm(embedded, Tensor::full({cfg.embed_dim}, 1.0),
                 Tensor::zeros({cfg.embed_dim}));
  CHECK(tensors_close(out, expected, 1e-4));
}

TEST_CASE("pooling keeps the row maxima of the padded convolution") {
  ModelConfig cfg = tiny_config();
  const Model model(cfg, 9);
  const int d = cfg.embed_dim;
  Rng rng(30);

  // A single row pools to itself.
  const Tensor one = random_tensor({1, d}, rng, -1, 1, false);
  const Tensor pooled_one = model.pool_encoder(one, Side::kNl);
  const Tensor conv_one =
      conv1d(one, model.params().get("pool.nl.conv"),
             ConvPadding::kSpecialVector, model.params().get("pool.nl.pad"));
  CHECK(tensors_close(pooled_one, conv_one, 1e-12));

  // The pooled value dominates every convolution row, dimension-wise.
  const Tensor x = random_tensor({5, d}, rng, -1, 1, false);
  const Tensor pooled = model.pool_encoder(x, Side::kNl);
  const Tensor conv =
      conv1d(x, model.params().get("pool.nl.conv"),
             ConvPadding::kSpecialVector, model.params().get("pool.nl.pad"));
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < d; ++c) {
      CHECK(pooled.data()[c] >= conv.data()[r * d + c] - 1e-12);
    }
  }
}

TEST_CASE("pointwise pooling ignores duplicated rows") {
  ModelConfig cfg = tiny_config();
  cfg.conv_kernel = 1;  // pointwise: each conv row depends on its input row only
  const Model model(cfg, 10);
  const int d = cfg.embed_dim;
  Rng rng(31);
  const Tensor two = random_tensor({2, d}, rng, -1, 1, false);
  Tensor three = Tensor::zeros({3, d});
  std::memcpy(three.data(), two.data(), sizeof(double) * 2 * d);
  std::memcpy(three.data() + 2 * d, two.data() + d, sizeof(double) * d);

  const Tensor a = model.pool_encoder(two, Side::kCode);
  const Tensor b = model.pool_encoder(three, Side::kCode);
  CHECK(tensors_close(a, b, 1e-12));
}

TEST_CASE("cross blocks swap outputs when inputs and weights swap") {
  ModelConfig cfg = tiny_config();
  Model model(cfg, 11);
  // Tie the two directions together so the structural swap is observable.
  for (const auto &[name, tensor] : model.params().items()) {
    const std::string from = "cross.nl2code";
    if (name.rfind(from, 0) == 0) {
      const std::string to = "cross.code2nl" + name.substr(from.size());
      Tensor dst = model.params().get(to);
      Tensor src = tensor;
      std::memcpy(dst.data(), src.data(), sizeof(double) * src.numel());
    }
  }
  Rng rng(32);
  const int d = cfg.embed_dim;
  const Tensor a = random_tensor({3, d}, rng, -1, 1, false);
  const Tensor b = random_tensor({4, d}, rng, -1, 1, false);

  const Tensor v1 = model.cross_block(a, b, Side::kNl);
  const Tensor v2 = model.cross_block(b, a, Side::kCode);
  const Tensor v1_swapped = model.cross_block(b, a, Side::kNl);
  const Tensor v2_swapped = model.cross_block(a, b, Side::kCode);
  REQUIRE(v1.shape() == std::vector<int>{1, d});
  CHECK(tensors_close(v1_swapped, v2, 1e-12));
  CHECK(tensors_close(v2_swapped, v1, 1e-12));
}

TEST_CASE("prediction head softmax endpoints") {
  ModelConfig cfg = tiny_config();
  Model model(cfg, 12);
  const int d = cfg.embed_dim;

  // Zero both layers: equal logits, score exactly one half.
  for (const std::string name : {"mlp.w1", "mlp.b1", "mlp.w2", "mlp.b2"}) {
    Tensor t = model.params().get(name);
    std::fill(t.data(), t.data() + t.numel(), 0.0);
  }
  Rng rng(33);
  const Tensor features = random_tensor({1, 4 * d}, rng, -1, 1, false);
  Tensor probs = model.predict(features, false, nullptr);
  REQUIRE(probs.shape() == std::vector<int>{1, 2});
  CHECK(probs.data()[0] == doctest::Approx(0.5));

  // Bias the output layer to logits [ln 3, 0]: score 0.75.
  Tensor b2 = model.params().get("mlp.b2");
  b2.data()[0] = std::log(3.0);
  b2.data()[1] = 0.0;
  probs = model.predict(features, false, nullptr);
  CHECK(probs.data()[0] == doctest::Approx(0.75));
}

TEST_CASE("pair scores are probabilities and deterministic") {
  ModelConfig cfg = tiny_config();
  const Model model(cfg, 13);
  const TokenSeq q = model.prepare_nl("how to parse json quickly");
  const TokenSeq c = model.prepare_code("json.loads(text)");

  const Tensor probs = model.forward_pair(q, c, false, nullptr);
  REQUIRE(probs.shape() == std::vector<int>{1, 2});
  CHECK(probs.data()[0] + probs.data()[1] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(probs.data()[0] > 0.0);
  CHECK(probs.data()[0] < 1.0);

  const double s1 = model.score_pair(q, c);
  const double s2 = model.score_pair(q, c);
  CHECK(s1 == s2);
  CHECK(s1 == doctest::Approx(probs.data()[0]).epsilon(1e-12));

  // Different seeds give different functions.
  const Model other(cfg, 14);
  CHECK(other.score_pair(q, c) != s1);
}

TEST_CASE("sequence caps truncate long inputs") {
  ModelConfig cfg = tiny_config();
  cfg.max_len_nl = 4;
  cfg.max_len_code = 6;
  const Model model(cfg, 15);
  std::string text;
  for (int i = 0; i < 30; ++i) text += "tok" + std::to_string(i) + " ";
  CHECK(model.prepare_nl(text).size() == 4);
  CHECK(model.prepare_code(text).size() == 6);
}

TEST_CASE("describe lists parameters and totals") {
  const Model model(tiny_config(), 16);
  const std::string text = model.describe();
  CHECK(text.find("embed.char") != std::string::npos);
  CHECK(text.find("embed.bucket") != std::string::npos);
  CHECK(text.find("mlp.w2") != std::string::npos);
  CHECK(text.find("parameters:") != std::string::npos);
  CHECK(text.find("total elements:") != std::string::npos);
  // Both encoder sides share one embedding table and one char conv stack.
  CHECK(text.find("enc.nl.m0.attn.q0") != std::string::npos);
  CHECK(text.find("enc.code.m0.attn.q0") != std::string::npos);
}

TEST_CASE("checkpoints round-trip the configuration and weights") {
  TempDir dir;
  ModelConfig cfg = tiny_config();
  const Model model(cfg, 17);
  const std::string path = dir.file("model.ckpt");
  model.save_to(path);

  const Model loaded = Model::load_from(path);
  CHECK(loaded.config().to_text() == cfg.to_text());
  const TokenSeq q = model.prepare_nl("find the maximum value");
  const TokenSeq c = model.prepare_code("max(values)");
  // Stored weights are 32-bit; scores agree to float precision.
  CHECK(loaded.score_pair(q, c) ==
        doctest::Approx(model.score_pair(q, c)).epsilon(1e-5));

  // Two saves of the same model are byte-identical.
  const std::string path2 = dir.file("model2.ckpt");
  model.save_to(path2);
  CHECK(testutil::read_file(path) == testutil::read_file(path2));
}

TEST_CASE("corrupt checkpoints are rejected") {
  TempDir dir;
  const std::string bad = dir.file("bad.ckpt");
  testutil::write_file(bad, "definitely not a checkpoint");
  CHECK_THROWS_AS(Model::load_from(bad), std::runtime_error);

  const Model model(tiny_config(), 18);
  const std::string path = dir.file("model.ckpt");
  model.save_to(path);
  std::string bytes = testutil::read_file(path);
  bytes.resize(bytes.size() / 2);  // truncate
  testutil::write_file(bad, bytes);
  CHECK_THROWS_AS(Model::load_from(bad), std::runtime_error);
}

}  // TEST_SUITE
