#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace ocor {

// Flat "key = value" configuration text: one pair per line, '#' comments,
// blank lines ignored. Throws std::runtime_error with a line number on a
// malformed line and names any key outside the known set.
std::map<std::string, std::string> parse_config_text(const std::string &text);
std::map<std::string, std::string> parse_config_file(const std::string &path);

// Network architecture. Defaults are the full-scale configuration.
struct ModelConfig {
  int depth = 3;             // encoder mechanism count N
  int embed_dim = 256;       // hidden/embedding size d
  int heads = 8;             // attention head count H
  int char_len = 16;         // fixed per-token character length CL
  int conv_width_first = 1024;  // width of the first encoder conv layer
  int conv_kernel = 3;       // window size of the local conv layers
  int mlp_hidden = 1024;     // width of the first prediction layer
  int max_len_nl = 50;       // question token cap
  int max_len_code = 200;    // code token cap
  double dropout = 0.2;

  void validate() const;  // throws std::invalid_argument on a bad field
  // Canonical one-key-per-line form; embedded in checkpoints.
  std::string to_text() const;
  static ModelConfig from_text(const std::string &text);
  // Applies the model keys present in kv on top of *this.
  void apply(const std::map<std::string, std::string> &kv);
  uint64_t hash() const;  // FNV-1a over the canonical text
};

// Optimization loop settings.
struct TrainConfig {
  int epochs = 50;
  int negatives = 5;          // negative examples per query per epoch
  double learning_rate = 1e-4;
  int batch_size = 32;
  uint64_t seed = 1;
  int checkpoint_interval = 0;  // epochs between checkpoints; 0 = final only
  int patience = 5;             // dev-MRR early-stopping patience
  std::string out_dir;          // checkpoint/log directory; empty = no files
  std::string dev_corpus;       // optional dev corpus path
  std::string dev_cases;        // optional dev case file path

  void validate() const;
  void apply(const std::map<std::string, std::string> &kv);
};

// Whole-run view used by the command-line driver.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  double lambda = 0.1;  // ensemble mixing weight

  void apply(const std::map<std::string, std::string> &kv);
  // Every effective key, defaults included, one per line; empty paths are
  // omitted.
  std::string to_text() const;
};

}  // namespace ocor
