#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mmp/corpus.hpp"
#include "mmp/encoders.hpp"
#include "mmp/objectives.hpp"

namespace mmp {

enum class TrainMode { kPretrain, kFinetune };

std::string_view train_mode_name(TrainMode mode);

/// Flat training configuration. Its JSON form uses exactly these field
/// names; unknown keys are rejected.
struct TrainConfig {
  TrainMode mode = TrainMode::kPretrain;
  Objective objective = Objective::kNce;
  bool intra = true;
  bool cross = false;
  std::vector<std::string> language_pool;  // empty: every corpus language

  double learning_rate = 2e-4;
  double max_grad_norm = 0.2;
  double dropout = 0.3;
  double tau = 0.1;
  double margin = 0.2;
  double mask_rate = 0.05;
  std::size_t batch_size = 32;
  std::size_t pretrain_epochs = 8;
  std::size_t finetune_epochs = 10;
  std::size_t max_steps = 0;  // 0: no cap
  std::size_t freeze_below = 0;  // applied while fine-tuning
  std::uint64_t seed = 0;

  std::size_t max_text_len = 96;
  std::size_t max_video_len = 128;
  double min_clip_sec = 4.0;
  double max_clip_sec = 10.0;

  std::size_t dim = 64;
  std::size_t backbone_dim = 64;
  std::size_t backbone_layers = 2;
  std::size_t backbone_heads = 4;
  std::size_t output_layer = 2;
  std::size_t pool_layers = 2;
  std::size_t pool_heads = 4;
  std::size_t ffn_dim = 128;

  Split validation_split = Split::kVal;
  std::size_t validation_pool_size = 32;
  std::size_t eval_pool_size = 100;

  /// Throws ConfigError on any violated invariant.
  void validate() const;
  std::size_t epochs() const { return mode == TrainMode::kPretrain ? pretrain_epochs : finetune_epochs; }
  LossOptions loss_options() const;
  /// Architecture for a corpus; freeze_below applies only in fine-tuning.
  ModelConfig model_config(std::size_t vocab_size, std::size_t feature_dim) const;

  static TrainConfig from_json_text(const std::string& text);
  static TrainConfig from_file(const std::filesystem::path& path);
  /// Compact single-line JSON with every field.
  std::string to_json_text() const;

  bool operator==(const TrainConfig&) const = default;
};

/// Pool languages in corpus order; an empty pool selects all languages.
std::vector<std::string> resolve_language_pool(const CorpusManifest& manifest,
                                               const std::vector<std::string>& pool);

/// Parses "all" or a comma-separated list of language codes.
std::vector<std::string> parse_language_list(std::string_view text);

}  // namespace mmp
