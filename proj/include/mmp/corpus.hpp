#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mmp/encoders.hpp"
#include "mmp/rng.hpp"

namespace mmp {

enum class Split { kPretrain, kTrain, kVal, kTest };

std::string_view split_name(Split split);
Split parse_split(std::string_view name);

inline constexpr std::int64_t kMaskTokenId = 0;
inline constexpr std::int64_t kUnknownTokenId = 1;
inline constexpr std::string_view kMaskToken = "[MASK]";
inline constexpr std::string_view kUnknownToken = "[UNK]";
inline constexpr std::string_view kReservedLanguage = "*";

struct SubtitleSegment {
  std::string video_id;
  std::string language;
  double start_sec = 0.0;
  double end_sec = 0.0;
  std::vector<std::int64_t> tokens;

  double midpoint() const { return 0.5 * (start_sec + end_sec); }
};

struct VideoRecord {
  std::string video_id;
  double duration_sec = 0.0;
  std::string feature_path;  // relative to the corpus root
  Split split = Split::kPretrain;
};

class Vocabulary {
 public:
  /// Appends a token; ids must arrive densely in order 0, 1, 2, ...
  void add(std::string token, std::int64_t id, std::string language);

  std::size_t size() const { return tokens_.size(); }
  std::optional<std::int64_t> find(std::string_view token) const;
  const std::string& token(std::int64_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::string& language(std::int64_t id) const {
    return languages_.at(static_cast<std::size_t>(id));
  }
  /// Languages in order of first appearance, reserved marker excluded.
  const std::vector<std::string>& language_order() const { return language_order_; }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::string> languages_;
  std::vector<std::string> language_order_;
  std::unordered_map<std::string, std::int64_t> ids_;
};

/// Validated, immutable view of a corpus root. Video features are read
/// eagerly at load time.
class CorpusManifest {
 public:
  std::filesystem::path root;
  std::vector<std::string> languages;
  std::vector<VideoRecord> videos;
  Vocabulary vocabulary;

  const VideoRecord& video(std::string_view video_id) const;
  bool has_video(std::string_view video_id) const;
  /// Video ids of a split, sorted ascending.
  std::vector<std::string> split_videos(Split split) const;
  /// Segments of (video, language) sorted by start; empty when absent.
  const std::vector<SubtitleSegment>& segments(std::string_view video_id,
                                               std::string_view language) const;
  /// Manifest languages that have at least one segment for the video.
  std::vector<std::string> languages_for(std::string_view video_id) const;
  const VideoFeatureSequence& features(std::string_view video_id) const;
  std::size_t feature_dim() const;
  std::size_t segment_count() const;

  // Mutators used by loaders and generators; call index() afterwards.
  void add_segment(SubtitleSegment segment);
  void set_features(const std::string& video_id, VideoFeatureSequence features);
  void index();

 private:
  std::map<std::string, std::size_t, std::less<>> video_index_;
  std::map<std::pair<std::string, std::string>, std::vector<SubtitleSegment>, std::less<>>
      segments_;
  std::map<std::string, VideoFeatureSequence, std::less<>> features_;
};

/// Reads and validates manifest.tsv, vocab.tsv, subtitles.tsv and every
/// referenced feature file. Errors name the file and line.
CorpusManifest load_manifest(const std::filesystem::path& root);

/// Writes manifest.tsv, vocab.tsv and subtitles.tsv (not feature files).
void save_manifest_tables(const CorpusManifest& manifest, const std::filesystem::path& root);

/// VFEAT v1: header "VFEAT v1 M H", then M lines of H floats at 9
/// significant digits.
VideoFeatureSequence load_video_features(const std::filesystem::path& path);
void save_video_features(const VideoFeatureSequence& features, const std::filesystem::path& path);

/// %.9g formatting shared by every text format.
std::string format_real(double value);

// ---------------------------------------------------------------------------
// Sampling

struct ClipSample {
  std::string video_id;
  double t0 = 0.0;
  double t1 = 0.0;
  std::string language;
  std::vector<std::int64_t> tokens;
  VideoFeatureSequence features;  // rows floor(t0) .. ceil(t1) - 1
  std::vector<std::size_t> segment_indices;  // into segments(video, language)
};

/// Random window, one language drawn from the pool, transcript from the
/// segments overlapping the window or else the nearest-midpoint segment.
ClipSample sample_clip(const CorpusManifest& manifest, std::string_view video_id, Rng& rng,
                       double min_clip_sec, double max_clip_sec,
                       std::span<const std::string> language_pool);

/// Segment indices chosen for the window [t0, t1]: all overlapping segments
/// in time order, else the one whose midpoint is nearest (ties to earlier).
std::vector<std::size_t> select_transcript(std::span<const SubtitleSegment> segments, double t0,
                                           double t1);

/// Number of positions masked for a sequence of length n:
/// max(1, round-half-up(rate * n)).
std::size_t mask_count(std::size_t n, double rate);

TokenSequence mask_text_tokens(const TokenSequence& x, double rate, Rng& rng);
VideoFeatureSequence mask_video_clips(const VideoFeatureSequence& v, double rate, Rng& rng);

enum class BatchMode { kPaired, kPivoted };

/// kClip: random window of the video with its closest transcript.
/// kCaption: one caption paired with the whole video.
enum class ItemSource { kClip, kCaption };

struct BatchRequest {
  Split split = Split::kPretrain;
  std::size_t batch_size = 32;
  BatchMode mode = BatchMode::kPaired;
  ItemSource source = ItemSource::kClip;
  std::vector<std::string> language_pool;
  double min_clip_sec = 4.0;
  double max_clip_sec = 10.0;
  std::size_t max_text_len = 96;
  std::size_t max_video_len = 128;
};

struct TrainingItem {
  std::string video_id;
  TokenSequence text;
  VideoFeatureSequence video;
  std::optional<TokenSequence> pivot;  // pivoted batches only, language != text
};

/// Videos of the request's split usable under its mode and pool.
std::vector<std::string> eligible_videos(const CorpusManifest& manifest,
                                         const BatchRequest& request);

/// One item for a video. All randomness comes from `rng`.
TrainingItem build_item(const CorpusManifest& manifest, std::string_view video_id,
                        const BatchRequest& request, Rng& rng);

/// B distinct videos drawn without replacement, one item each.
std::vector<TrainingItem> assemble_batch(const CorpusManifest& manifest,
                                         const BatchRequest& request, Rng& rng);

/// Shuffled partition of `videos` into consecutive batches; the last batch
/// may be short. Every video appears exactly once.
std::vector<std::vector<std::string>> epoch_batches(std::vector<std::string> videos,
                                                    std::size_t batch_size, Rng& rng);

}  // namespace mmp
