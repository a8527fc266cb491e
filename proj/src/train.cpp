#include "train.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "eval.hpp"
#include "rng.hpp"

namespace ocor {

namespace {

using ordered_json = nlohmann::ordered_json;

// Per-epoch seed streams, kept disjoint by construction.
enum SeedStream : uint64_t {
  kSampleStream = 0,
  kShuffleStream = 1,
  kDropoutStream = 2,
};

// Overlap bucket vectors are pure functions of a (query, code) index pair;
// caching them across epochs removes the repeated LCS dynamic programs.
// Bounded by corpus size so it only applies at desk scale.
class BucketCache {
 public:
  BucketCache(const std::vector<TokenSeq> &queries,
              const std::vector<TokenSeq> &codes)
      : queries_(queries), codes_(codes) {}

  const std::pair<std::vector<int>, std::vector<int>> &get(int qi, int ci) {
    const uint64_t key =
        static_cast<uint64_t>(qi) * codes_.size() + static_cast<uint64_t>(ci);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    std::pair<std::vector<int>, std::vector<int>> entry = {
        overlap_buckets(queries_[static_cast<size_t>(qi)],
                        codes_[static_cast<size_t>(ci)]),
        overlap_buckets(codes_[static_cast<size_t>(ci)],
                        queries_[static_cast<size_t>(qi)])};
    if (cache_.size() >= kMaxEntries) {
      scratch_ = std::move(entry);
      return scratch_;
    }
    return cache_.emplace(key, std::move(entry)).first->second;
  }

 private:
  static constexpr size_t kMaxEntries = 2'000'000;

  const std::vector<TokenSeq> &queries_;
  const std::vector<TokenSeq> &codes_;
  std::unordered_map<uint64_t, std::pair<std::vector<int>, std::vector<int>>>
      cache_;
  std::pair<std::vector<int>, std::vector<int>> scratch_;
};

std::string epoch_record(const EpochStats &stats) {
  ordered_json obj;
  obj["epoch"] = stats.epoch;
  obj["mean_loss"] = stats.mean_loss;
  if (stats.dev_mrr >= 0.0) {
    obj["dev_mrr"] = stats.dev_mrr;
  } else {
    obj["dev_mrr"] = nullptr;
  }
  obj["seconds"] = stats.seconds;
  return obj.dump();
}

}  // namespace

std::vector<TrainExample> sample_epoch(int n_pairs, int negatives_per_query,
                                       uint64_t epoch_seed) {
  if (negatives_per_query < 1) {
    throw std::invalid_argument("sample_epoch: negatives must be >= 1");
  }
  if (n_pairs <= negatives_per_query) {
    throw std::invalid_argument(
        "sample_epoch: corpus of " + std::to_string(n_pairs) +
        " pairs needs at least " + std::to_string(negatives_per_query + 1) +
        " to draw " + std::to_string(negatives_per_query) + " negatives");
  }
  const uint64_t sample_seed = mix_seed(epoch_seed, kSampleStream);
  std::vector<TrainExample> examples;
  examples.reserve(static_cast<size_t>(n_pairs) *
                   (1 + static_cast<size_t>(negatives_per_query)));
  for (int qi = 0; qi < n_pairs; ++qi) {
    examples.push_back({qi, qi, 1});
    Rng rng(mix_seed(sample_seed, static_cast<uint64_t>(qi)));
    std::unordered_set<int> chosen;
    while (static_cast<int>(chosen.size()) < negatives_per_query) {
      const int pick =
          static_cast<int>(rng.below(static_cast<uint64_t>(n_pairs)));
      if (pick == qi || !chosen.insert(pick).second) continue;
      examples.push_back({qi, pick, 2});
    }
  }
  return examples;
}

TrainResult train(Model &model, const std::vector<RawPair> &pairs,
                  const TrainConfig &cfg,
                  const std::vector<RawPair> *dev_pairs,
                  const std::vector<RetrievalCase> *dev_cases,
                  const TrainLogFn &log, const EpochCallback &on_epoch) {
  cfg.validate();
  const bool has_dev = dev_pairs != nullptr && dev_cases != nullptr &&
                       !dev_cases->empty();
  const bool write_files = !cfg.out_dir.empty();
  if (write_files) {
    std::filesystem::create_directories(cfg.out_dir);
  }
  const auto out_path = [&](const std::string &name) {
    return (std::filesystem::path(cfg.out_dir) / name).string();
  };

  std::ofstream log_file;
  if (write_files) {
    log_file.open(out_path("train_log.jsonl"), std::ios::binary);
    if (!log_file) {
      throw std::runtime_error("train: cannot write log in " + cfg.out_dir);
    }
  }
  const auto emit = [&](const std::string &line) {
    if (log_file.is_open()) log_file << line << "\n" << std::flush;
    if (log) log(line);
  };

  const int n = static_cast<int>(pairs.size());
  std::vector<TokenSeq> queries, codes;
  queries.reserve(pairs.size());
  codes.reserve(pairs.size());
  for (const RawPair &p : pairs) {
    queries.push_back(model.prepare_nl(p.question));
    codes.push_back(model.prepare_code(p.code));
  }
  BucketCache buckets(queries, codes);

  AdamConfig adam_cfg;
  adam_cfg.learning_rate = cfg.learning_rate;
  Adam adam(model.params(), adam_cfg);
  const int64_t initial_steps = model.step_count();

  TrainResult result;
  double best_dev = -1.0;
  int epochs_without_improvement = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    const uint64_t epoch_seed =
        mix_seed(cfg.seed, static_cast<uint64_t>(epoch));
    std::vector<TrainExample> examples =
        sample_epoch(n, cfg.negatives, epoch_seed);
    Rng shuffle_rng(mix_seed(epoch_seed, kShuffleStream));
    shuffle_rng.shuffle(examples);

    double loss_sum = 0.0;
    uint64_t example_counter = 0;
    const uint64_t dropout_base = mix_seed(epoch_seed, kDropoutStream);
    try {
      for (size_t batch_start = 0; batch_start < examples.size();
           batch_start += static_cast<size_t>(cfg.batch_size)) {
        const size_t batch_end =
            std::min(examples.size(),
                     batch_start + static_cast<size_t>(cfg.batch_size));
        const double batch_count =
            static_cast<double>(batch_end - batch_start);
        model.params().zero_grad();
        for (size_t e = batch_start; e < batch_end; ++e) {
          const TrainExample &ex = examples[e];
          Rng dropout_rng(mix_seed(dropout_base, example_counter++));
          const auto &[qb, cb] = buckets.get(ex.query_index, ex.code_index);
          Tensor probs = model.forward_pair_buckets(
              queries[static_cast<size_t>(ex.query_index)],
              codes[static_cast<size_t>(ex.code_index)], qb, cb,
              /*training=*/true, &dropout_rng);
          Tensor loss = cross_entropy(probs, ex.label == 1 ? 0 : 1);
          loss_sum += loss.item();
          backward(scale(loss, 1.0 / batch_count));
        }
        adam.step();
      }
    } catch (const std::exception &e) {
      throw std::runtime_error(
          "train: aborted in epoch " + std::to_string(epoch) + ": " +
          e.what() + (write_files ? "; the last written checkpoint is retained"
                                  : ""));
    }
    model.set_step_count(initial_steps + adam.step_count());

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = loss_sum / static_cast<double>(examples.size());
    if (has_dev) {
      stats.dev_mrr = model_mrr(model, *dev_pairs, *dev_cases, /*threads=*/1);
    }
    stats.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      epoch_start)
            .count();
    result.curve.push_back(stats);
    result.epochs_run = epoch;
    emit(epoch_record(stats));

    if (write_files && cfg.checkpoint_interval > 0 &&
        epoch % cfg.checkpoint_interval == 0) {
      model.save_to(out_path("checkpoint_epoch_" + std::to_string(epoch) +
                             ".ckpt"));
    }
    if (has_dev) {
      if (stats.dev_mrr > best_dev) {
        best_dev = stats.dev_mrr;
        epochs_without_improvement = 0;
        if (write_files) model.save_to(out_path("model_best.ckpt"));
      } else if (++epochs_without_improvement >= cfg.patience) {
        result.stopped_early = true;
        result.stop_reason = "dev MRR did not improve for " +
                             std::to_string(cfg.patience) + " epochs";
        break;
      }
    }
    if (on_epoch && on_epoch(stats)) {
      result.stopped_early = true;
      result.stop_reason = "stopped by caller";
      break;
    }
  }

  if (write_files) {
    model.save_to(out_path("model.ckpt"));
  }
  return result;
}

}  // namespace ocor
