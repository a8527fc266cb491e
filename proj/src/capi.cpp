#include "ocor/ocor.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "config.hpp"
#include "corpus.hpp"
#include "eval.hpp"
#include "model.hpp"
#include "overlap.hpp"
#include "train.hpp"

struct ocor_corpus {
  std::vector<ocor::RawPair> pairs;
};

struct ocor_model {
  ocor::Model model;
};

namespace {

thread_local std::string g_last_error = "no error";

char *dup_string(const std::string &s) {
  char *out = static_cast<char *>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

ocor_status fail(ocor_status status, const char *fallback) {
  if (g_last_error.empty()) g_last_error = fallback;
  return status;
}

// Runs `fn`, translating exceptions into status codes and the thread-local
// error message.
template <typename Fn>
ocor_status guarded(Fn &&fn) {
  try {
    fn();
    return OCOR_OK;
  } catch (const std::invalid_argument &e) {
    g_last_error = e.what();
    return fail(OCOR_ERR_INVALID_ARGUMENT, "invalid argument");
  } catch (const std::ios_base::failure &e) {
    g_last_error = e.what();
    return fail(OCOR_ERR_IO, "i/o error");
  } catch (const std::runtime_error &e) {
    g_last_error = e.what();
    // Classify by message origin: parser and file errors both surface as
    // runtime_error in the core; pick the closest status.
    const std::string what = e.what();
    if (what.find("cannot open") != std::string::npos ||
        what.find("cannot write") != std::string::npos ||
        what.find("write failed") != std::string::npos ||
        what.find("truncated file") != std::string::npos) {
      return OCOR_ERR_IO;
    }
    if (what.find("malformed") != std::string::npos ||
        what.find("missing") != std::string::npos ||
        what.find("config") != std::string::npos ||
        what.find("duplicate id") != std::string::npos) {
      return OCOR_ERR_PARSE;
    }
    if (what.find("non-finite") != std::string::npos) {
      return OCOR_ERR_NUMERIC;
    }
    return OCOR_ERR_INTERNAL;
  } catch (const std::exception &e) {
    g_last_error = e.what();
    return fail(OCOR_ERR_INTERNAL, "internal error");
  }
}

ocor_status require(bool condition, const char *message) {
  if (condition) return OCOR_OK;
  g_last_error = message;
  return OCOR_ERR_INVALID_ARGUMENT;
}

}  // namespace

extern "C" {

const char *ocor_version(void) { return "1.0.0"; }

const char *ocor_last_error(void) { return g_last_error.c_str(); }

void ocor_string_free(char *s) { std::free(s); }

ocor_status ocor_corpus_load(const char *path, ocor_corpus **out) {
  if (ocor_status s = require(path && out, "corpus_load: NULL argument");
      s != OCOR_OK) {
    return s;
  }
  return guarded([&]() {
    auto corpus = std::make_unique<ocor_corpus>();
    corpus->pairs = ocor::load_corpus(path);
    *out = corpus.release();
  });
}

ocor_status ocor_corpus_load_candidates(const char *path, ocor_corpus **out) {
  if (ocor_status s = require(path && out, "corpus_load: NULL argument");
      s != OCOR_OK) {
    return s;
  }
  return guarded([&]() {
    auto corpus = std::make_unique<ocor_corpus>();
    corpus->pairs = ocor::load_corpus(path, /*allow_empty_question=*/true);
    *out = corpus.release();
  });
}

void ocor_corpus_free(ocor_corpus *corpus) { delete corpus; }

int64_t ocor_corpus_size(const ocor_corpus *corpus) {
  return corpus == nullptr ? 0
                           : static_cast<int64_t>(corpus->pairs.size());
}

ocor_status ocor_corpus_stats_json(const ocor_corpus *corpus,
                                   char **out_json) {
  if (ocor_status s = require(corpus && out_json, "stats: NULL argument");
      s != OCOR_OK) {
    return s;
  }
  return guarded(
      [&]() { *out_json = dup_string(ocor::corpus_stats_json(corpus->pairs)); });
}

ocor_status ocor_corpus_write_tokenized(const ocor_corpus *corpus,
                                        const char *out_path) {
  if (ocor_status s =
          require(corpus && out_path, "write_tokenized: NULL argument");
      s != OCOR_OK) {
    return s;
  }
  return guarded([&]() { ocor::write_tokenized(out_path, corpus->pairs); });
}

ocor_status ocor_corpus_build_cases(const ocor_corpus *corpus, int negatives,
                                    uint64_t seed, const char *out_path) {
  if (ocor_status s =
          require(corpus && out_path, "build_cases: NULL argument");
      s != OCOR_OK) {
    return s;
  }
  return guarded([&]() {
    ocor::write_cases(out_path,
                      ocor::build_cases(corpus->pairs, negatives, seed));
  });
}

ocor_status ocor_overlap_tsv(const char *text1, int kind1, const char *text2,
                             int kind2, char **out_tsv) {
  if (ocor_status s =
          require(text1 && text2 && out_tsv, "overlap: NULL argument");
      s != OCOR_OK) {
    return s;
  }
  if (ocor_status s = require((kind1 == 0 || kind1 == 1) &&
                                  (kind2 == 0 || kind2 == 1),
                              "overlap: kind must be 0 (nl) or 1 (code)");
      s != OCOR_OK) {
    return s;
  }
  return guarded([&]() {
    using ocor::TextKind;
    const auto to_kind = [](int k) {
      return k == 0 ? TextKind::kNaturalLanguage : TextKind::kCode;
    };
    // Character rows are not needed to compute overlaps; char_len 1 suffices.
    const ocor::TokenSeq t1 = ocor::tokenize_to_seq(text1, to_kind(kind1), 1);
    const ocor::TokenSeq t2 = ocor::tokenize_to_seq(text2, to_kind(kind2), 1);
    const ocor::OverlapMatrix m = ocor::overlap_matrix(t1, t2);
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(4);
    for (int i = 0; i < m.rows; ++i) {
      for (int j = 0; j < m.cols; ++j) {
        if (j) os << "\t";
        os << m.at(i, j);
      }
      os << "\n";
    }
    *out_tsv = dup_string(os.str());
  });
}

ocor_status ocor_config_render(const char *config_text, char **out_text) {
  if (ocor_status s = require(out_text != nullptr, "config_render: NULL output");
      s != OCOR_OK) {
    return s;
  }
  return guarded([&]() {
    ocor::RunConfig run;
    if (config_text != nullptr && config_text[0] != '\0') {
      run.apply(ocor::parse_config_text(config_text));
    }
    run.model.validate();
    run.train.validate();
    *out_text = dup_string(run.to_text());
  });
}

ocor_status ocor_model_create(const char *config_text, uint64_t seed,
                              ocor_model **out) {
  if (ocor_status s = require(out != nullptr, "model_create: NULL output");
      s != OCOR_OK) {
    return s;
  }
  return guarded([&]() {
    ocor::ModelConfig cfg;
    if (config_text != nullptr && config_text[0] != '\0') {
      cfg.apply(ocor::parse_config_text(config_text));
    }
    cfg.validate();
    *out = new ocor_model{ocor::Model(cfg, seed)};
  });
}

ocor_status ocor_model_load(const char *checkpoint_path, ocor_model **out) {
  if (ocor_status s =
          require(checkpoint_path && out, "model_load: NULL argument");
      s != OCOR_OK) {
    return s;
  }
  return guarded(
      [&]() { *out = new ocor_model{ocor::Model::load_from(checkpoint_path)}; });
}

ocor_status ocor_model_save(const ocor_model *model,
                            const char *checkpoint_path) {
  if (ocor_status s =
          require(model && checkpoint_path, "model_save: NULL argument");
      s != OCOR_OK) {
    return s;
  }
  return guarded([&]() { model->model.save_to(checkpoint_path); });
}

void ocor_model_free(ocor_model *model) { delete model; }

ocor_status ocor_model_describe(const ocor_model *model, char **out_text) {
  if (ocor_status s = require(model && out_text, "describe: NULL argument");
      s != OCOR_OK) {
    return s;
  }
  return guarded([&]() { *out_text = dup_string(model->model.describe()); });
}

ocor_status ocor_model_score(const ocor_model *model, const char *question,
                             const char *code, double *out_score) {
  if (ocor_status s = require(model && question && code && out_score,
                              "score: NULL argument");
      s != OCOR_OK) {
    return s;
  }
  return guarded(
      [&]() { *out_score = model->model.score_text(question, code); });
}

ocor_status ocor_train(ocor_model *model, const ocor_corpus *corpus,
                       const char *config_text, ocor_log_fn log,
                       void *log_user) {
  if (ocor_status s = require(model && corpus, "train: NULL argument");
      s != OCOR_OK) {
    return s;
  }
  return guarded([&]() {
    ocor::TrainConfig cfg;
    if (config_text != nullptr && config_text[0] != '\0') {
      cfg.apply(ocor::parse_config_text(config_text));
    }
    cfg.validate();
    std::vector<ocor::RawPair> dev_pairs;
    std::vector<ocor::RetrievalCase> dev_cases;
    const bool has_dev = !cfg.dev_corpus.empty() && !cfg.dev_cases.empty();
    if (has_dev) {
      dev_pairs = ocor::load_corpus(cfg.dev_corpus);
      dev_cases = ocor::load_cases(cfg.dev_cases);
    }
    ocor::TrainLogFn log_fn;
    if (log != nullptr) {
      log_fn = [log, log_user](const std::string &line) {
        log(line.c_str(), log_user);
      };
    }
    ocor::train(model->model, corpus->pairs, cfg,
                has_dev ? &dev_pairs : nullptr,
                has_dev ? &dev_cases : nullptr, log_fn);
  });
}

ocor_status ocor_eval(const ocor_model *model, const ocor_corpus *corpus,
                      const char *cases_path, const char *const *score_files,
                      int n_score_files, double lambda, int perfect_sets,
                      int threads, char **out_report_json) {
  if (ocor_status s = require(model && corpus && cases_path && out_report_json,
                              "eval: NULL argument");
      s != OCOR_OK) {
    return s;
  }
  if (ocor_status s = require(n_score_files == 0 || score_files != nullptr,
                              "eval: NULL score_files with nonzero count");
      s != OCOR_OK) {
    return s;
  }
  return guarded([&]() {
    std::vector<std::string> paths;
    for (int i = 0; i < n_score_files; ++i) {
      paths.emplace_back(score_files[i]);
    }
    const std::vector<ocor::RetrievalCase> cases = ocor::load_cases(cases_path);
    *out_report_json = dup_string(
        ocor::evaluate(model->model, corpus->pairs, cases, paths, lambda,
                       perfect_sets != 0, threads));
  });
}

ocor_status ocor_retrieve(const ocor_model *model, const char *query,
                          const ocor_corpus *candidates, int top_k,
                          char **out_json) {
  if (ocor_status s = require(model && query && candidates && out_json,
                              "retrieve: NULL argument");
      s != OCOR_OK) {
    return s;
  }
  if (ocor_status s = require(top_k >= 1, "retrieve: top_k must be >= 1");
      s != OCOR_OK) {
    return s;
  }
  return guarded([&]() {
    if (candidates->pairs.empty()) {
      throw std::invalid_argument("retrieve: empty candidate pool");
    }
    const ocor::TokenSeq query_seq = model->model.prepare_nl(query);
    std::vector<double> scores;
    scores.reserve(candidates->pairs.size());
    for (const ocor::RawPair &p : candidates->pairs) {
      scores.push_back(
          model->model.score_pair(query_seq, model->model.prepare_code(p.code)));
    }
    const ocor::ScoredRanking ranking = ocor::rank_scores("query", scores, 0);
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    const int k = std::min<int>(top_k, static_cast<int>(scores.size()));
    for (int r = 0; r < k; ++r) {
      const int idx = ranking.order[static_cast<size_t>(r)];
      const ocor::RawPair &p = candidates->pairs[static_cast<size_t>(idx)];
      nlohmann::ordered_json entry;
      entry["id"] = p.id;
      entry["score"] = scores[static_cast<size_t>(idx)];
      entry["code"] = p.code;
      out.push_back(std::move(entry));
    }
    *out_json = dup_string(out.dump(2));
  });
}

}  // extern "C"
