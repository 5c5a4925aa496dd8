#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mmp/corpus.hpp"

namespace mmp {

/// Parameters of the synthetic multilingual corpus. Each language renders
/// concept c as its own token, so languages share no surface forms and can
/// only be aligned through the videos.
struct SyntheticSpec {
  std::size_t languages = 2;
  std::size_t concepts = 50;
  std::size_t pretrain_videos = 200;
  std::size_t train_videos = 64;
  std::size_t val_videos = 32;
  std::size_t test_videos = 100;
  std::size_t min_segments = 1;
  std::size_t max_segments = 3;
  std::size_t min_segment_sec = 3;
  std::size_t max_segment_sec = 6;
  std::size_t min_concepts_per_segment = 2;
  std::size_t max_concepts_per_segment = 3;
  std::size_t max_gap_sec = 1;
  std::size_t feature_dim = 32;
  double noise = 0.1;
  double distractor_prob = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
  /// Strict parse: unknown keys are an error, missing keys keep defaults.
  static SyntheticSpec from_json_text(const std::string& text);
  static SyntheticSpec from_file(const std::filesystem::path& path);
  std::string to_json_text() const;
};

/// Language code of the k-th synthetic language ("en" first).
std::string synthetic_language(std::size_t k);

/// Vocabulary id of concept c in language k (after the reserved ids).
std::int64_t synthetic_token_id(const SyntheticSpec& spec, std::size_t language,
                                std::size_t concept_id);

/// The concept feature matrix G [concepts, feature_dim] for a spec.
std::vector<double> synthetic_concept_features(const SyntheticSpec& spec);

/// Writes a complete corpus root and returns it as loaded back from disk.
CorpusManifest generate_synthetic_corpus(const SyntheticSpec& spec,
                                         const std::filesystem::path& out_root);

}  // namespace mmp
