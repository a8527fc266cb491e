/* ocor.h - C API for the OCoR overlap-aware code retriever.
 *
 * All objects are opaque handles created and destroyed through this API.
 * Every fallible call returns an ocor_status; on failure a human-readable
 * message is available from ocor_last_error() until the next call on the
 * same thread. Strings returned through char** out-parameters are owned
 * by the caller and must be released with ocor_string_free().
 */
#ifndef OCOR_H
#define OCOR_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ocor_status {
  OCOR_OK = 0,
  OCOR_ERR_INVALID_ARGUMENT = 1,
  OCOR_ERR_IO = 2,
  OCOR_ERR_PARSE = 3,
  OCOR_ERR_NUMERIC = 4,
  OCOR_ERR_INTERNAL = 5
} ocor_status;

typedef struct ocor_corpus ocor_corpus;
typedef struct ocor_model ocor_model;

const char *ocor_version(void);

/* Message for the most recent failure on this thread. Never NULL. */
const char *ocor_last_error(void);

void ocor_string_free(char *s);

/* ---- corpus ------------------------------------------------------------ */

/* Loads a UTF-8 JSON-lines corpus file: one object per line with string
 * fields "id", "question", "code". */
ocor_status ocor_corpus_load(const char *path, ocor_corpus **out);

/* Same format, but "question" may be missing or empty (candidate pools
 * for retrieval only carry code). */
ocor_status ocor_corpus_load_candidates(const char *path, ocor_corpus **out);

void ocor_corpus_free(ocor_corpus *corpus);

int64_t ocor_corpus_size(const ocor_corpus *corpus);

/* Token-count statistics as a JSON object (pair count, avg/max tokens per
 * side). */
ocor_status ocor_corpus_stats_json(const ocor_corpus *corpus, char **out_json);

/* Writes the tokenized corpus, one JSON object per line:
 * {"id":..., "question_tokens":[...], "code_tokens":[...]}. Deterministic. */
ocor_status ocor_corpus_write_tokenized(const ocor_corpus *corpus,
                                        const char *out_path);

/* Builds retrieval cases (one per pair, `negatives` distractors drawn from
 * the other pairs, seeded) and writes them as JSON lines:
 * {"query_id":..., "candidate_ids":[...], "positive_index":...}. */
ocor_status ocor_corpus_build_cases(const ocor_corpus *corpus, int negatives,
                                    uint64_t seed, const char *out_path);

/* ---- overlap debugging -------------------------------------------------- */

/* kind: 0 = natural language, 1 = code. Renders the token-overlap matrix
 * of the two texts as TSV, 4 decimal places, rows = first text. */
ocor_status ocor_overlap_tsv(const char *text1, int kind1, const char *text2,
                             int kind2, char **out_tsv);

/* ---- configuration ------------------------------------------------------- */

/* Expands flat "key = value" configuration text (possibly empty) to the
 * full effective configuration with defaults filled in, validated, one key
 * per line. Unknown keys and invalid values are errors. */
ocor_status ocor_config_render(const char *config_text, char **out_text);

/* ---- model -------------------------------------------------------------- */

/* config_text: flat "key = value" lines (empty string for all defaults).
 * Unknown keys are an error. Weights are freshly initialized from seed. */
ocor_status ocor_model_create(const char *config_text, uint64_t seed,
                              ocor_model **out);

ocor_status ocor_model_load(const char *checkpoint_path, ocor_model **out);

ocor_status ocor_model_save(const ocor_model *model,
                            const char *checkpoint_path);

void ocor_model_free(ocor_model *model);

/* Parameter names, shapes and total count, one per line. */
ocor_status ocor_model_describe(const ocor_model *model, char **out_text);

/* Relevance score R(question, code) in (0,1). */
ocor_status ocor_model_score(const ocor_model *model, const char *question,
                             const char *code, double *out_score);

/* ---- training ------------------------------------------------------------ */

typedef void (*ocor_log_fn)(const char *line, void *user);

/* Trains in place. config_text holds the flat training configuration
 * (epochs, negatives, learning_rate, batch_size, seed, checkpoint_interval,
 * out_dir, optional dev_corpus/dev_cases/patience). Per-epoch log records
 * are emitted through `log` when non-NULL. */
ocor_status ocor_train(ocor_model *model, const ocor_corpus *corpus,
                       const char *config_text, ocor_log_fn log,
                       void *log_user);

/* ---- evaluation ----------------------------------------------------------- */

/* Ranks every case in cases_path over `corpus`, reporting per-case positive
 * ranks and the aggregate MRR as JSON. Each entry of score_files names an
 * external model's per-(case,candidate) score file; the report then also
 * carries that model's own MRR and the lambda-ensembled MRR. perfect_sets
 * non-zero adds top-1 set sizes and intersections. threads caps parallel
 * case evaluation (<=1 means serial). */
ocor_status ocor_eval(const ocor_model *model, const ocor_corpus *corpus,
                      const char *cases_path, const char *const *score_files,
                      int n_score_files, double lambda, int perfect_sets,
                      int threads, char **out_report_json);

/* ---- retrieval ------------------------------------------------------------ */

/* Scores `query` against every candidate and returns the top_k ranked
 * candidates as JSON: [{"id":..., "score":..., "code":...}, ...]. */
ocor_status ocor_retrieve(const ocor_model *model, const char *query,
                          const ocor_corpus *candidates, int top_k,
                          char **out_json);

#ifdef __cplusplus
}
#endif

#endif /* OCOR_H */
