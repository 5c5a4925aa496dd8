#include "mmp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "mmp/errors.hpp"
#include "mmp/ops.hpp"

namespace mmp {

namespace {

std::string step_key(const char* purpose, std::uint64_t step) {
  return std::string(purpose) + "/step" + std::to_string(step);
}

std::string describe(const LossBreakdown& l) {
  std::string s = "loss " + format_real(l.total) + " (inter " + format_real(l.inter) +
                  ", intra " + format_real(l.intra);
  if (l.cross) s += ", cross " + format_real(*l.cross);
  return s + ")";
}

std::filesystem::path dump_batch(const std::vector<TrainingItem>& batch, std::uint64_t step) {
  const auto path = std::filesystem::temp_directory_path() /
                    ("mmp-nonfinite-step" + std::to_string(step) + ".tsv");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << "video_id\tlanguage\ttokens\tvideo_rows\tpivot_language\tpivot_tokens\n";
  auto join = [](const std::vector<std::int64_t>& t) {
    std::string s;
    for (std::size_t i = 0; i < t.size(); ++i) s += (i ? " " : "") + std::to_string(t[i]);
    return s;
  };
  for (const TrainingItem& item : batch) {
    out << item.video_id << '\t' << item.text.language << '\t' << join(item.text.tokens) << '\t'
        << item.video.length << '\t' << (item.pivot ? item.pivot->language : "") << '\t'
        << (item.pivot ? join(item.pivot->tokens) : "") << '\n';
  }
  return path;
}

struct LossAccumulator {
  LossBreakdown sum;
  std::size_t count = 0;

  void add(const LossBreakdown& l) {
    sum.inter += l.inter;
    sum.intra += l.intra;
    if (l.cross) sum.cross = sum.cross.value_or(0.0) + *l.cross;
    sum.total += l.total;
    ++count;
  }

  LossBreakdown mean() const {
    LossBreakdown m = sum;
    if (count == 0) return m;
    const double n = static_cast<double>(count);
    m.inter /= n;
    m.intra /= n;
    if (m.cross) *m.cross /= n;
    m.total /= n;
    return m;
  }
};

BatchRequest base_request(const TrainConfig& config) {
  BatchRequest r;
  r.batch_size = config.batch_size;
  r.min_clip_sec = config.min_clip_sec;
  r.max_clip_sec = config.max_clip_sec;
  r.max_text_len = config.max_text_len;
  r.max_video_len = config.max_video_len;
  return r;
}

void emit(const LogFn& log, const std::string& line) {
  if (log) log(line);
}

/// Epoch loop shared by both regimes. `after_epoch` returns false to end
/// the run.
template <typename AfterEpoch>
void run_epochs(ModelParameters& params, const CorpusManifest& manifest, const TrainConfig& config,
                const BatchRequest& request, std::uint64_t& step, const LogFn& log,
                AfterEpoch&& after_epoch) {
  const std::vector<std::string> videos = eligible_videos(manifest, request);
  if (videos.empty()) {
    throw SamplingError("split " + std::string(split_name(request.split)) +
                        " has no videos usable with the language pool");
  }
  AdamOptions adam_options;
  adam_options.learning_rate = config.learning_rate;
  AdamState adam = AdamState::for_parameters(params.trainable_parameters(), adam_options);

  const std::size_t epochs = config.epochs();
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    const std::string epoch_tag = "epoch" + std::to_string(epoch);
    Rng order = Rng::stream(config.seed, "order/" + epoch_tag);
    LossAccumulator losses;
    bool capped = false;
    for (const std::vector<std::string>& ids : epoch_batches(videos, config.batch_size, order)) {
      std::vector<TrainingItem> batch;
      batch.reserve(ids.size());
      for (const std::string& id : ids) {
        Rng item_rng = Rng::stream(config.seed, "item/" + epoch_tag + "/" + id);
        batch.push_back(build_item(manifest, id, request, item_rng));
      }
      StepStreams streams = StepStreams::for_step(config.seed, step);
      losses.add(train_step(params, batch, config, adam, streams));
      ++step;
      if (config.max_steps > 0 && step >= config.max_steps) {
        capped = true;
        break;
      }
    }
    EpochRecord record;
    record.epoch = epoch;
    record.steps = step;
    record.mean_loss = losses.mean();
    emit(log, std::string(train_mode_name(config.mode)) + " epoch " + std::to_string(epoch) + "/" +
                  std::to_string(epochs) + " step " + std::to_string(step) + " " +
                  describe(record.mean_loss));
    if (!after_epoch(std::move(record)) || capped) break;
  }
}

}  // namespace

StepStreams StepStreams::for_step(std::uint64_t seed, std::uint64_t step) {
  return {Rng::stream(seed, step_key("mask", step)), Rng::stream(seed, step_key("dropout", step))};
}

BatchEncodings encode_batch(const ModelParameters& params, const std::vector<TrainingItem>& batch,
                            const TrainConfig& config, StepStreams& streams, bool training) {
  if (batch.empty()) throw UsageError("encode_batch: empty batch");
  const bool pivoted = batch.front().pivot.has_value();
  for (const TrainingItem& item : batch) {
    if (item.pivot.has_value() != pivoted) throw UsageError("encode_batch: mixed batch modes");
  }
  if (config.cross && !pivoted) {
    throw ConfigError("cross-lingual objective requires pivoted (x, v, y) batches");
  }
  ForwardContext ctx{&streams.dropout, training, config.dropout};
  std::vector<Tensor> text, video, text_m, video_m, pivot, pivot_m, text_c, pivot_c;
  for (const TrainingItem& item : batch) {
    text.push_back(encode_text(item.text, params, ctx));
    video.push_back(encode_video(item.video, params, ctx));
    if (config.intra) {
      text_m.push_back(encode_text(mask_text_tokens(item.text, config.mask_rate, streams.mask), params, ctx));
      video_m.push_back(
          encode_video(mask_video_clips(item.video, config.mask_rate, streams.mask), params, ctx));
    }
    if (pivoted) {
      pivot.push_back(encode_text(*item.pivot, params, ctx));
      if (config.intra) {
        pivot_m.push_back(
            encode_text(mask_text_tokens(*item.pivot, config.mask_rate, streams.mask), params, ctx));
      }
      if (config.cross) {
        text_c.push_back(encode_text_conditioned(item.text, item.video, params, ctx));
        pivot_c.push_back(encode_text_conditioned(*item.pivot, item.video, params, ctx));
      }
    }
  }
  auto stack = [](const std::vector<Tensor>& rows) {
    return rows.empty() ? Tensor() : ops::stack_rows(rows);
  };
  BatchEncodings enc;
  enc.text = stack(text);
  enc.video = stack(video);
  enc.text_masked = stack(text_m);
  enc.video_masked = stack(video_m);
  enc.pivot = stack(pivot);
  enc.pivot_masked = stack(pivot_m);
  enc.text_conditioned = stack(text_c);
  enc.pivot_conditioned = stack(pivot_c);
  return enc;
}

LossBreakdown train_step(ModelParameters& params, const std::vector<TrainingItem>& batch,
                         const TrainConfig& config, AdamState& adam, StepStreams& streams) {
  params.zero_grad();
  TotalLoss loss;
  try {
    loss = total_loss(encode_batch(params, batch, config, streams, true), config.loss_options());
    loss.value.backward();
  } catch (const NumericError& e) {
    const auto path = dump_batch(batch, adam.step);
    throw NumericError(std::string(e.what()) + " (batch dumped to " + path.string() + ")");
  }
  std::vector<Tensor> trainable = params.trainable_parameters();
  clip_gradients(trainable, config.max_grad_norm);
  adam_step(trainable, adam);
  return loss.breakdown;
}

ModelParameters initial_parameters(const CorpusManifest& manifest, const TrainConfig& config) {
  Rng rng = Rng::stream(config.seed, "init");
  return ModelParameters::initialize(
      config.model_config(manifest.vocabulary.size(), manifest.feature_dim()), rng);
}

TrainResult pretrain(const CorpusManifest& manifest, const TrainConfig& config_in,
                     const ModelParameters* init, const LogFn& log, const EpochHook& on_epoch) {
  TrainConfig config = config_in;
  config.mode = TrainMode::kPretrain;
  config.validate();
  ModelParameters params = init ? init->clone() : initial_parameters(manifest, config);
  if (init) require_compatible(config.model_config(manifest.vocabulary.size(), manifest.feature_dim()), params.config);
  params.set_freeze_below(0);

  BatchRequest request = base_request(config);
  request.split = Split::kPretrain;
  request.mode = BatchMode::kPaired;
  request.source = ItemSource::kClip;
  request.language_pool = resolve_language_pool(manifest, config.language_pool);

  TrainResult result;
  std::uint64_t step = 0;
  run_epochs(params, manifest, config, request, step, log,
             [&](EpochRecord record) {
               result.history.push_back(std::move(record));
               return !on_epoch || on_epoch(result.history.back());
             });
  result.best_epoch = result.history.size();
  result.checkpoint = Checkpoint{config, std::move(params), step, config.seed};
  return result;
}

TrainResult finetune(const CorpusManifest& manifest, const TrainConfig& config_in,
                     const Checkpoint* init, const LogFn& log, const EpochHook& on_epoch) {
  TrainConfig config = config_in;
  config.mode = TrainMode::kFinetune;
  config.validate();
  const ModelConfig wanted =
      config.model_config(manifest.vocabulary.size(), manifest.feature_dim());
  ModelParameters params = init ? init->params.clone() : initial_parameters(manifest, config);
  if (init) require_compatible(wanted, params.config);
  params.set_freeze_below(config.freeze_below);

  BatchRequest request = base_request(config);
  request.split = Split::kTrain;
  request.source = ItemSource::kCaption;
  request.language_pool = resolve_language_pool(manifest, config.language_pool);
  request.mode = request.language_pool.size() >= 2 ? BatchMode::kPivoted : BatchMode::kPaired;
  if (config.cross && request.mode != BatchMode::kPivoted) {
    throw ConfigError("cross-lingual objective needs at least two languages in the pool");
  }

  const std::size_t val_videos = manifest.split_videos(config.validation_split).size();
  EvalOptions eval;
  eval.split = config.validation_split;
  eval.pool_size = std::min(config.validation_pool_size, val_videos);
  eval.max_text_len = config.max_text_len;
  eval.max_video_len = config.max_video_len;

  TrainResult result;
  std::optional<ModelParameters> best;
  double best_score = -1.0;
  std::uint64_t best_step = 0;
  std::uint64_t step = 0;
  run_epochs(params, manifest, config, request, step, log, [&](EpochRecord record) {
    if (eval.pool_size > 0) {
      ModelRetrievalEncoder encoder(params);
      RetrievalReport report = evaluate_all(encoder, manifest, request.language_pool, eval);
      record.validation = report.rows;
      for (const LanguageRecall& r : report.rows) record.validation_score += r.r1 + r.r5 + r.r10;
      emit(log, "finetune epoch " + std::to_string(record.epoch) + " validation " +
                    std::string(split_name(eval.split)) + " R@1+R@5+R@10 " +
                    format_real(record.validation_score));
    }
    if (record.validation_score > best_score) {
      best_score = record.validation_score;
      best = params.clone();
      best_step = step;
      result.best_epoch = record.epoch;
    }
    result.history.push_back(std::move(record));
    return !on_epoch || on_epoch(result.history.back());
  });
  emit(log, "finetune keeps epoch " + std::to_string(result.best_epoch));
  result.checkpoint = Checkpoint{config, std::move(*best), best_step, config.seed};
  return result;
}

}  // namespace mmp
