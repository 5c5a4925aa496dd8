#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mmp/checkpoint.hpp"
#include "mmp/config.hpp"
#include "mmp/corpus.hpp"
#include "mmp/objectives.hpp"
#include "mmp/optim.hpp"
#include "mmp/retrieval.hpp"

namespace mmp {

/// Randomness consumed by one optimizer step, keyed by (seed, step) so runs
/// that differ only in their language pool draw identical masks and dropout.
struct StepStreams {
  Rng mask;
  Rng dropout;

  static StepStreams for_step(std::uint64_t seed, std::uint64_t step);
};

/// Forward pass of every item: plain, masked (intra term) and conditioned
/// (cross term) encodings stacked into [B, D] matrices.
BatchEncodings encode_batch(const ModelParameters& params, const std::vector<TrainingItem>& batch,
                            const TrainConfig& config, StepStreams& streams, bool training);

/// Forward, loss, backward, gradient clipping and one Adam update of the
/// trainable parameters.
LossBreakdown train_step(ModelParameters& params, const std::vector<TrainingItem>& batch,
                         const TrainConfig& config, AdamState& adam, StepStreams& streams);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::size_t steps = 0;  // cumulative
  LossBreakdown mean_loss;
  std::vector<LanguageRecall> validation;
  double validation_score = 0.0;  // sum of R@1 + R@5 + R@10 over languages
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

using LogFn = std::function<void(const std::string&)>;
/// Observes each finished epoch; returning false ends the run after it.
using EpochHook = std::function<bool(const EpochRecord&)>;

/// Parameters drawn from the seed's "init" stream for the corpus dims.
ModelParameters initial_parameters(const CorpusManifest& manifest, const TrainConfig& config);

/// Clip-level contrastive pre-training over the pretrain split, one freshly
/// sampled clip per video per epoch.
TrainResult pretrain(const CorpusManifest& manifest, const TrainConfig& config,
                     const ModelParameters* init = nullptr, const LogFn& log = {},
                     const EpochHook& on_epoch = {});

/// Caption-level fine-tuning on the train split. A single-language pool
/// trains on (x, v) pairs, several languages on pivoted (x, v, y) triples.
/// Keeps the epoch with the best validation score.
TrainResult finetune(const CorpusManifest& manifest, const TrainConfig& config,
                     const Checkpoint* init = nullptr, const LogFn& log = {},
                     const EpochHook& on_epoch = {});

}  // namespace mmp
