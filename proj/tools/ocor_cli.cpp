// Command-line driver for the overlap-aware code retriever. Talks to the
// core exclusively through the public C API.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ocor/ocor.h"

namespace {

constexpr const char *kConfigEnvVar = "OCOR_CONFIG";

int fail(const char *context) {
  std::cerr << "error: " << context << ": " << ocor_last_error() << "\n";
  return 1;
}

// Owned C string from the API.
struct ApiString {
  char *value = nullptr;
  ~ApiString() { ocor_string_free(value); }
};

struct CorpusHandle {
  ocor_corpus *corpus = nullptr;
  ~CorpusHandle() { ocor_corpus_free(corpus); }
};

struct ModelHandle {
  ocor_model *model = nullptr;
  ~ModelHandle() { ocor_model_free(model); }
};

std::string trim(const std::string &s) {
  const size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

// Minimal key=value reader for precedence handling; full validation happens
// inside the library.
std::map<std::string, std::string> read_config_file(const std::string &path,
                                                    bool &ok) {
  std::map<std::string, std::string> kv;
  std::ifstream in(path);
  if (!in) {
    ok = false;
    return kv;
  }
  ok = true;
  std::string line;
  while (std::getline(in, line)) {
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const size_t eq = stripped.find('=');
    if (eq == std::string::npos) continue;  // library reports malformed lines
    kv[trim(stripped.substr(0, eq))] = trim(stripped.substr(eq + 1));
  }
  return kv;
}

// Configuration assembled from an optional file plus explicit flags;
// flag > file > default, with overrides logged.
class ConfigBuilder {
 public:
  // Returns false (after printing) when the config file cannot be read.
  bool load_file(const std::string &flag_path) {
    std::string path = flag_path;
    if (path.empty()) {
      if (const char *env = std::getenv(kConfigEnvVar); env && env[0]) {
        path = env;
      }
    }
    if (path.empty()) return true;
    bool ok = false;
    file_kv_ = read_config_file(path, ok);
    if (!ok) {
      std::cerr << "error: cannot open config file " << path << "\n";
      return false;
    }
    source_path_ = path;
    return true;
  }

  void set_flag(const std::string &key, const std::string &value) {
    auto it = file_kv_.find(key);
    if (it != file_kv_.end() && it->second != value) {
      std::cerr << "config: flag value " << key << " = " << value
                << " overrides file value " << it->second << "\n";
    }
    flag_kv_[key] = value;
  }

  std::map<std::string, std::string> merged() const {
    std::map<std::string, std::string> kv = file_kv_;
    for (const auto &[k, v] : flag_kv_) kv[k] = v;
    return kv;
  }

  std::string merged_text() const {
    std::ostringstream os;
    for (const auto &[k, v] : merged()) os << k << " = " << v << "\n";
    return os.str();
  }

  uint64_t seed_or(uint64_t fallback) const {
    const auto kv = merged();
    auto it = kv.find("seed");
    if (it == kv.end()) return fallback;
    try {
      return std::stoull(it->second);
    } catch (const std::exception &) {
      return fallback;
    }
  }

 private:
  std::map<std::string, std::string> file_kv_;
  std::map<std::string, std::string> flag_kv_;
  std::string source_path_;
};

// Shared model/train/eval flag set; each entry lands in the config builder
// only when the user actually passed the flag.
struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> values;

  void attach(CLI::App *cmd) {
    cmd->add_option("--config", config_path,
                    "flat key = value configuration file (default: $" +
                        std::string(kConfigEnvVar) + ")");
    add(cmd, "--depth", "depth", "encoder mechanism count");
    add(cmd, "--embed-dim", "embed_dim", "embedding size");
    add(cmd, "--heads", "heads", "attention head count");
    add(cmd, "--char-len", "char_len", "per-token character length");
    add(cmd, "--conv-width-first", "conv_width_first",
        "width of the first encoder conv layer");
    add(cmd, "--conv-kernel", "conv_kernel", "local conv window size");
    add(cmd, "--mlp-hidden", "mlp_hidden", "prediction hidden width");
    add(cmd, "--max-len-nl", "max_len_nl", "question token cap");
    add(cmd, "--max-len-code", "max_len_code", "code token cap");
    add(cmd, "--dropout", "dropout", "dropout rate");
    add(cmd, "--epochs", "epochs", "training epochs");
    add(cmd, "--negatives", "negatives", "negatives per query per epoch");
    add(cmd, "--learning-rate", "learning_rate", "optimizer learning rate");
    add(cmd, "--batch-size", "batch_size", "minibatch size");
    add(cmd, "--seed", "seed", "run seed");
    add(cmd, "--checkpoint-interval", "checkpoint_interval",
        "epochs between checkpoints (0 = final only)");
    add(cmd, "--patience", "patience", "dev-MRR early-stopping patience");
    add(cmd, "--dev-corpus", "dev_corpus", "dev corpus for early stopping");
    add(cmd, "--dev-cases", "dev_cases", "dev case file for early stopping");
    add(cmd, "--lambda", "lambda", "ensemble mixing weight");
  }

  bool fill(ConfigBuilder &builder) const {
    if (!builder.load_file(config_path)) return false;
    for (const auto &[key, value] : values) builder.set_flag(key, value);
    return true;
  }

 private:
  void add(CLI::App *cmd, const std::string &flag, const std::string &key,
           const std::string &help) {
    cmd->add_option_function<std::string>(
        flag, [this, key](const std::string &v) { values[key] = v; }, help);
  }
};

int cmd_preprocess(const std::string &corpus_path, const std::string &out_path,
                   const std::string &cases_out, int negatives,
                   uint64_t cases_seed) {
  CorpusHandle corpus;
  if (ocor_corpus_load(corpus_path.c_str(), &corpus.corpus) != OCOR_OK) {
    return fail("preprocess");
  }
  if (!out_path.empty() &&
      ocor_corpus_write_tokenized(corpus.corpus, out_path.c_str()) != OCOR_OK) {
    return fail("preprocess");
  }
  ApiString stats;
  if (ocor_corpus_stats_json(corpus.corpus, &stats.value) != OCOR_OK) {
    return fail("preprocess");
  }
  std::cout << stats.value << "\n";
  if (!cases_out.empty()) {
    if (ocor_corpus_build_cases(corpus.corpus, negatives, cases_seed,
                                cases_out.c_str()) != OCOR_OK) {
      return fail("preprocess");
    }
    std::cout << "cases written to " << cases_out << "\n";
  }
  return 0;
}

void print_log_line(const char *line, void *) { std::cout << line << "\n"; }

int cmd_train(const ConfigFlags &flags, const std::string &corpus_path,
              const std::string &out_dir) {
  ConfigBuilder builder;
  if (!flags.fill(builder)) return 1;
  builder.set_flag("out_dir", out_dir);
  const std::string config_text = builder.merged_text();
  ApiString rendered;
  if (ocor_config_render(config_text.c_str(), &rendered.value) != OCOR_OK) {
    return fail("train");
  }
  std::cout << "effective configuration:\n" << rendered.value;

  CorpusHandle corpus;
  if (ocor_corpus_load(corpus_path.c_str(), &corpus.corpus) != OCOR_OK) {
    return fail("train");
  }
  ModelHandle model;
  if (ocor_model_create(config_text.c_str(), builder.seed_or(1),
                        &model.model) != OCOR_OK) {
    return fail("train");
  }
  if (ocor_train(model.model, corpus.corpus, config_text.c_str(),
                 print_log_line, nullptr) != OCOR_OK) {
    return fail("train");
  }
  std::cout << "final checkpoint: " << out_dir << "/model.ckpt\n";
  return 0;
}

int cmd_eval(const ConfigFlags &flags, const std::string &checkpoint,
             const std::string &corpus_path, const std::string &cases_path,
             const std::vector<std::string> &score_files, bool perfect_sets,
             int threads, const std::string &report_out) {
  ConfigBuilder builder;
  if (!flags.fill(builder)) return 1;
  double lambda = 0.1;
  {
    const auto kv = builder.merged();
    if (auto it = kv.find("lambda"); it != kv.end()) {
      try {
        lambda = std::stod(it->second);
      } catch (const std::exception &) {
        std::cerr << "error: lambda is not a number: " << it->second << "\n";
        return 1;
      }
    }
  }
  ModelHandle model;
  if (ocor_model_load(checkpoint.c_str(), &model.model) != OCOR_OK) {
    return fail("eval");
  }
  CorpusHandle corpus;
  if (ocor_corpus_load(corpus_path.c_str(), &corpus.corpus) != OCOR_OK) {
    return fail("eval");
  }
  std::vector<const char *> score_ptrs;
  score_ptrs.reserve(score_files.size());
  for (const std::string &s : score_files) score_ptrs.push_back(s.c_str());
  ApiString report;
  if (ocor_eval(model.model, corpus.corpus, cases_path.c_str(),
                score_ptrs.data(), static_cast<int>(score_ptrs.size()), lambda,
                perfect_sets ? 1 : 0, threads, &report.value) != OCOR_OK) {
    return fail("eval");
  }
  if (report_out.empty()) {
    std::cout << report.value << "\n";
  } else {
    std::ofstream out(report_out, std::ios::binary);
    out << report.value << "\n";
    if (!out) {
      std::cerr << "error: cannot write report to " << report_out << "\n";
      return 1;
    }
    std::cout << "report written to " << report_out << "\n";
  }
  return 0;
}

int cmd_retrieve(const std::string &checkpoint, const std::string &query,
                 const std::string &candidates_path, int top_k) {
  ModelHandle model;
  if (ocor_model_load(checkpoint.c_str(), &model.model) != OCOR_OK) {
    return fail("retrieve");
  }
  CorpusHandle candidates;
  if (ocor_corpus_load_candidates(candidates_path.c_str(),
                                  &candidates.corpus) != OCOR_OK) {
    return fail("retrieve");
  }
  ApiString ranked;
  if (ocor_retrieve(model.model, query.c_str(), candidates.corpus, top_k,
                    &ranked.value) != OCOR_OK) {
    return fail("retrieve");
  }
  std::cout << ranked.value << "\n";
  return 0;
}

int cmd_overlap(const std::string &text1, const std::string &kind1,
                const std::string &text2, const std::string &kind2) {
  const auto to_kind = [](const std::string &k) { return k == "code" ? 1 : 0; };
  ApiString tsv;
  if (ocor_overlap_tsv(text1.c_str(), to_kind(kind1), text2.c_str(),
                       to_kind(kind2), &tsv.value) != OCOR_OK) {
    return fail("overlap");
  }
  std::cout << tsv.value;
  return 0;
}

int cmd_describe(const ConfigFlags &flags, const std::string &checkpoint) {
  ModelHandle model;
  if (!checkpoint.empty()) {
    if (ocor_model_load(checkpoint.c_str(), &model.model) != OCOR_OK) {
      return fail("describe");
    }
  } else {
    ConfigBuilder builder;
    if (!flags.fill(builder)) return 1;
    if (ocor_model_create(builder.merged_text().c_str(), builder.seed_or(1),
                          &model.model) != OCOR_OK) {
      return fail("describe");
    }
  }
  ApiString text;
  if (ocor_model_describe(model.model, &text.value) != OCOR_OK) {
    return fail("describe");
  }
  std::cout << text.value;
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"overlap-aware code retriever"};
  app.require_subcommand(1);
  app.set_version_flag("--version", []() { return ocor_version(); });

  // preprocess
  auto *preprocess = app.add_subcommand(
      "preprocess", "tokenize a corpus, report statistics, optionally build cases");
  std::string pre_corpus, pre_out, pre_cases_out;
  int pre_negatives = 49;
  uint64_t pre_cases_seed = 1;
  preprocess->add_option("--corpus", pre_corpus, "corpus JSON-lines file")
      ->required();
  preprocess->add_option("--out", pre_out, "tokenized output file");
  preprocess->add_option("--cases-out", pre_cases_out,
                         "also write retrieval cases to this file");
  preprocess->add_option("--negatives", pre_negatives,
                         "distractors per case (with --cases-out)");
  preprocess->add_option("--cases-seed", pre_cases_seed,
                         "seed for case construction");

  // train
  auto *train = app.add_subcommand("train", "train a model");
  std::string train_corpus, train_out;
  ConfigFlags train_flags;
  train->add_option("--corpus", train_corpus, "training corpus")->required();
  train->add_option("--out", train_out, "output directory for checkpoints")
      ->required();
  train_flags.attach(train);

  // eval
  auto *eval = app.add_subcommand("eval", "rank cases and report MRR");
  std::string eval_checkpoint, eval_corpus, eval_cases, eval_report;
  std::vector<std::string> eval_scores;
  bool eval_perfect = false;
  int eval_threads = 1;
  ConfigFlags eval_flags;
  eval->add_option("--checkpoint", eval_checkpoint, "model checkpoint")
      ->required();
  eval->add_option("--corpus", eval_corpus, "corpus the cases reference")
      ->required();
  eval->add_option("--cases", eval_cases, "retrieval case file")->required();
  eval->add_option("--scores", eval_scores,
                   "external score file (repeatable; enables ensembling)");
  eval->add_flag("--perfect-sets", eval_perfect,
                 "report top-1 sets and their intersections");
  eval->add_option("--threads", eval_threads, "parallel case evaluation");
  eval->add_option("--out", eval_report, "write the JSON report here");
  eval_flags.attach(eval);

  // retrieve
  auto *retrieve =
      app.add_subcommand("retrieve", "rank candidate snippets for a query");
  std::string ret_checkpoint, ret_query, ret_candidates;
  int ret_top_k = 10;
  retrieve->add_option("--checkpoint", ret_checkpoint, "model checkpoint")
      ->required();
  retrieve->add_option("--query", ret_query, "natural-language query")
      ->required();
  retrieve->add_option("--candidates", ret_candidates,
                       "candidate JSON-lines file (id, code)")
      ->required();
  retrieve->add_option("--top-k", ret_top_k, "number of results");

  // overlap
  auto *overlap =
      app.add_subcommand("overlap", "print the token-overlap matrix as TSV");
  std::string ov_text1, ov_text2, ov_kind1 = "nl", ov_kind2 = "code";
  overlap->add_option("--text1", ov_text1, "first text (matrix rows)")
      ->required();
  overlap->add_option("--kind1", ov_kind1, "nl or code")
      ->check(CLI::IsMember({"nl", "code"}));
  overlap->add_option("--text2", ov_text2, "second text (matrix columns)")
      ->required();
  overlap->add_option("--kind2", ov_kind2, "nl or code")
      ->check(CLI::IsMember({"nl", "code"}));

  // describe
  auto *describe = app.add_subcommand(
      "describe", "print parameter names, shapes and totals");
  std::string desc_checkpoint;
  ConfigFlags describe_flags;
  describe->add_option("--checkpoint", desc_checkpoint,
                       "checkpoint to describe (otherwise a fresh model)");
  describe_flags.attach(describe);

  CLI11_PARSE(app, argc, argv);

  if (preprocess->parsed()) {
    return cmd_preprocess(pre_corpus, pre_out, pre_cases_out, pre_negatives,
                          pre_cases_seed);
  }
  if (train->parsed()) return cmd_train(train_flags, train_corpus, train_out);
  if (eval->parsed()) {
    return cmd_eval(eval_flags, eval_checkpoint, eval_corpus, eval_cases,
                    eval_scores, eval_perfect, eval_threads, eval_report);
  }
  if (retrieve->parsed()) {
    return cmd_retrieve(ret_checkpoint, ret_query, ret_candidates, ret_top_k);
  }
  if (overlap->parsed()) {
    return cmd_overlap(ov_text1, ov_kind1, ov_text2, ov_kind2);
  }
  if (describe->parsed()) return cmd_describe(describe_flags, desc_checkpoint);
  return 1;
}
