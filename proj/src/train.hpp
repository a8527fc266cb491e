#pragma once

#include <functional>
#include <string>
#include <vector>

#include "config.hpp"
#include "corpus.hpp"
#include "model.hpp"

namespace ocor {

// One supervised example: a query paired with either its own code (related,
// class 1) or a sampled distractor (unrelated, class 2), by corpus index.
struct TrainExample {
  int query_index = 0;
  int code_index = 0;
  int label = 1;  // 1 = related, 2 = unrelated
};

// One related example per query plus `negatives_per_query` distractors drawn
// uniformly from the other pairs, resampled per epoch from epoch_seed.
// Requires n_pairs > negatives_per_query.
std::vector<TrainExample> sample_epoch(int n_pairs, int negatives_per_query,
                                       uint64_t epoch_seed);

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double dev_mrr = -1.0;  // < 0 when no dev set is configured
  double seconds = 0.0;
};

using TrainLogFn = std::function<void(const std::string &line)>;
// Invoked after each epoch; returning true stops training.
using EpochCallback = std::function<bool(const EpochStats &)>;

struct TrainResult {
  std::vector<EpochStats> curve;
  int epochs_run = 0;
  bool stopped_early = false;
  std::string stop_reason;
};

// Optimizes the model in place. Per epoch: resample negatives, shuffle,
// minibatch forward/backward with mean-reduced cross-entropy, one optimizer
// step per batch. When cfg.out_dir is set, writes periodic checkpoints,
// the dev-best checkpoint, a final model.ckpt, and train_log.jsonl. A
// non-finite loss or gradient aborts with the last written checkpoint
// retained on disk. Fully reproducible from cfg.seed.
TrainResult train(Model &model, const std::vector<RawPair> &pairs,
                  const TrainConfig &cfg,
                  const std::vector<RawPair> *dev_pairs,
                  const std::vector<RetrievalCase> *dev_cases,
                  const TrainLogFn &log = nullptr,
                  const EpochCallback &on_epoch = nullptr);

}  // namespace ocor
