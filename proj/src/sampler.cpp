#include <algorithm>
#include <cmath>

#include "mmp/corpus.hpp"
#include "mmp/errors.hpp"

namespace mmp {

namespace {

std::vector<std::string> pool_languages_present(const CorpusManifest& manifest,
                                                std::string_view video_id,
                                                std::span<const std::string> pool) {
  std::vector<std::string> out;
  for (const std::string& lang : pool) {
    if (!manifest.segments(video_id, lang).empty()) out.push_back(lang);
  }
  return out;
}

std::vector<std::int64_t> truncated(std::vector<std::int64_t> tokens, std::size_t max_len) {
  if (tokens.size() > max_len) tokens.resize(max_len);
  return tokens;
}

std::vector<std::int64_t> transcript_tokens(std::span<const SubtitleSegment> segments,
                                            std::span<const std::size_t> indices) {
  std::vector<std::int64_t> tokens;
  for (std::size_t i : indices)
    tokens.insert(tokens.end(), segments[i].tokens.begin(), segments[i].tokens.end());
  return tokens;
}

}  // namespace

std::vector<std::size_t> select_transcript(std::span<const SubtitleSegment> segments, double t0,
                                           double t1) {
  std::vector<std::size_t> overlapping;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (segments[i].start_sec < t1 && segments[i].end_sec > t0) overlapping.push_back(i);
  }
  if (!overlapping.empty() || segments.empty()) return overlapping;
  const double mid = 0.5 * (t0 + t1);
  std::size_t best = 0;
  double best_distance = std::abs(segments[0].midpoint() - mid);
  for (std::size_t i = 1; i < segments.size(); ++i) {
    const double d = std::abs(segments[i].midpoint() - mid);
    if (d < best_distance) {
      best = i;
      best_distance = d;
    }
  }
  return {best};
}

ClipSample sample_clip(const CorpusManifest& manifest, std::string_view video_id, Rng& rng,
                       double min_clip_sec, double max_clip_sec,
                       std::span<const std::string> language_pool) {
  if (!(min_clip_sec > 0.0) || max_clip_sec < min_clip_sec) {
    throw ParameterError("sample_clip: need 0 < min_clip_sec <= max_clip_sec");
  }
  const VideoRecord& record = manifest.video(video_id);
  const std::vector<std::string> present =
      pool_languages_present(manifest, video_id, language_pool);
  if (present.empty()) {
    throw SamplingError("video " + std::string(video_id) +
                        " has no subtitles in the requested language pool");
  }
  const double duration = record.duration_sec;

  ClipSample clip;
  clip.video_id = std::string(video_id);
  clip.t0 = rng.uniform(0.0, std::max(0.0, duration - min_clip_sec));
  const double span_hi = std::min(max_clip_sec, duration - clip.t0);
  const double span_lo = std::min(min_clip_sec, span_hi);
  clip.t1 = clip.t0 + rng.uniform(span_lo, span_hi);
  clip.language = present[static_cast<std::size_t>(rng.uniform_int(present.size()))];

  const auto& segments = manifest.segments(video_id, clip.language);
  clip.segment_indices = select_transcript(segments, clip.t0, clip.t1);
  clip.tokens = transcript_tokens(segments, clip.segment_indices);

  const VideoFeatureSequence& all = manifest.features(video_id);
  auto first = static_cast<std::size_t>(std::floor(clip.t0));
  auto last = static_cast<std::size_t>(std::ceil(clip.t1));  // exclusive
  first = std::min(first, all.length - 1);
  last = std::clamp(last, first + 1, all.length);
  clip.features = all.rows(first, last - first);
  return clip;
}

std::size_t mask_count(std::size_t n, double rate) {
  if (!(rate > 0.0 && rate < 1.0)) throw ParameterError("mask rate must lie in (0, 1)");
  if (n == 0) return 0;
  // Small slack keeps exact halves (rate*n = k + 0.5) rounding up despite
  // binary representation error in rate.
  const auto rounded = static_cast<std::size_t>(std::floor(rate * static_cast<double>(n) + 0.5 + 1e-9));
  return std::min(n, std::max<std::size_t>(1, rounded));
}

TokenSequence mask_text_tokens(const TokenSequence& x, double rate, Rng& rng) {
  TokenSequence out = x;
  for (std::size_t pos : rng.sample_without_replacement(x.tokens.size(), mask_count(x.tokens.size(), rate)))
    out.tokens[pos] = kMaskTokenId;
  return out;
}

VideoFeatureSequence mask_video_clips(const VideoFeatureSequence& v, double rate, Rng& rng) {
  VideoFeatureSequence out = v;
  for (std::size_t r : rng.sample_without_replacement(v.length, mask_count(v.length, rate)))
    std::fill_n(out.values.begin() + static_cast<std::ptrdiff_t>(r * v.width), v.width, 0.0);
  return out;
}

std::vector<std::string> eligible_videos(const CorpusManifest& manifest,
                                         const BatchRequest& request) {
  const std::size_t needed = request.mode == BatchMode::kPivoted ? 2 : 1;
  std::vector<std::string> out;
  for (const std::string& id : manifest.split_videos(request.split)) {
    if (pool_languages_present(manifest, id, request.language_pool).size() >= needed)
      out.push_back(id);
  }
  return out;
}

TrainingItem build_item(const CorpusManifest& manifest, std::string_view video_id,
                        const BatchRequest& request, Rng& rng) {
  TrainingItem item;
  item.video_id = std::string(video_id);
  const bool pivoted = request.mode == BatchMode::kPivoted;

  if (request.source == ItemSource::kClip) {
    ClipSample clip = sample_clip(manifest, video_id, rng, request.min_clip_sec,
                                  request.max_clip_sec, request.language_pool);
    item.text = {clip.language, truncated(std::move(clip.tokens), request.max_text_len)};
    item.video = clip.features.rows(0, request.max_video_len);
    if (pivoted) {
      std::vector<std::string> others;
      for (const std::string& lang : pool_languages_present(manifest, video_id, request.language_pool))
        if (lang != clip.language) others.push_back(lang);
      if (others.empty()) {
        throw SamplingError("video " + item.video_id + " has a single pool language; cannot pivot");
      }
      const std::string& lang = others[static_cast<std::size_t>(rng.uniform_int(others.size()))];
      const auto& segments = manifest.segments(video_id, lang);
      auto idx = select_transcript(segments, clip.t0, clip.t1);
      item.pivot = TokenSequence{lang, truncated(transcript_tokens(segments, idx), request.max_text_len)};
    }
    return item;
  }

  std::vector<std::string> present =
      pool_languages_present(manifest, video_id, request.language_pool);
  if (present.size() < (pivoted ? 2u : 1u)) {
    throw SamplingError("video " + item.video_id + " lacks captions in enough pool languages");
  }
  auto pick_caption = [&](const std::string& lang) {
    const auto& segments = manifest.segments(video_id, lang);
    const auto& seg = segments[static_cast<std::size_t>(rng.uniform_int(segments.size()))];
    return TokenSequence{lang, truncated(seg.tokens, request.max_text_len)};
  };
  const std::size_t first = static_cast<std::size_t>(rng.uniform_int(present.size()));
  item.text = pick_caption(present[first]);
  if (pivoted) {
    std::size_t second = static_cast<std::size_t>(rng.uniform_int(present.size() - 1));
    if (second >= first) ++second;
    item.pivot = pick_caption(present[second]);
  }
  item.video = manifest.features(video_id).rows(0, request.max_video_len);
  return item;
}

std::vector<TrainingItem> assemble_batch(const CorpusManifest& manifest,
                                         const BatchRequest& request, Rng& rng) {
  const std::vector<std::string> pool = eligible_videos(manifest, request);
  if (request.batch_size == 0) throw ParameterError("assemble_batch: batch size must be positive");
  if (pool.size() < request.batch_size) {
    throw SamplingError("split " + std::string(split_name(request.split)) + " has " +
                        std::to_string(pool.size()) + " eligible videos; batch needs " +
                        std::to_string(request.batch_size));
  }
  std::vector<TrainingItem> batch;
  for (std::size_t idx : rng.sample_without_replacement(pool.size(), request.batch_size))
    batch.push_back(build_item(manifest, pool[idx], request, rng));
  return batch;
}

std::vector<std::vector<std::string>> epoch_batches(std::vector<std::string> videos,
                                                    std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ParameterError("epoch_batches: batch size must be positive");
  rng.shuffle(videos);
  std::vector<std::vector<std::string>> out;
  for (std::size_t i = 0; i < videos.size(); i += batch_size) {
    const std::size_t end = std::min(videos.size(), i + batch_size);
    out.emplace_back(videos.begin() + static_cast<std::ptrdiff_t>(i),
                     videos.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

}  // namespace mmp
