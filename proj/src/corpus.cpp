#include "mmp/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "mmp/errors.hpp"

namespace mmp {

namespace fs = std::filesystem;

namespace {

const std::vector<SubtitleSegment> kNoSegments;

std::vector<std::string> split_on(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      return out;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

class LineReader {
 public:
  explicit LineReader(const fs::path& path) : path_(path), in_(path) {
    if (!in_) throw IoError("cannot open " + path.string());
  }
  bool next(std::string& line) {
    if (!std::getline(in_, line)) return false;
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  }
  [[noreturn]] void fail(const std::string& message) const {
    throw FormatError(path_.string() + ":" + std::to_string(line_no_) + ": " + message);
  }
  [[noreturn]] void fail_corpus(const std::string& message) const {
    throw CorpusError(path_.string() + ":" + std::to_string(line_no_) + ": " + message);
  }
  std::size_t line_no() const { return line_no_; }

 private:
  fs::path path_;
  std::ifstream in_;
  std::size_t line_no_ = 0;
};

bool parse_double(std::string_view text, double& out) {
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

bool parse_int(std::string_view text, std::int64_t& out) {
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

void expect_header(LineReader& reader, const std::string& expected) {
  std::string line;
  if (!reader.next(line)) reader.fail("missing header line");
  if (line != expected) reader.fail("expected header '" + expected + "'");
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("write failed for " + path.string());
}

constexpr const char* kManifestHeader = "video_id\tduration_sec\tfeature_path\tsplit";
constexpr const char* kVocabHeader = "token\tid\tlanguage";
constexpr const char* kSubtitleHeader = "video_id\tlanguage\tstart_sec\tend_sec\ttokens";

}  // namespace

std::string format_real(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", value);
  return buf;
}

std::string_view split_name(Split split) {
  switch (split) {
    case Split::kPretrain: return "pretrain";
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "pretrain") return Split::kPretrain;
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw UsageError("unknown split '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------

void Vocabulary::add(std::string token, std::int64_t id, std::string language) {
  if (id != static_cast<std::int64_t>(tokens_.size())) {
    throw CorpusError("vocabulary ids must be dense and ascending; expected " +
                      std::to_string(tokens_.size()) + ", got " + std::to_string(id));
  }
  if (token.empty()) throw CorpusError("empty vocabulary token");
  if (!ids_.emplace(token, id).second) throw CorpusError("duplicate vocabulary token " + token);
  if (language != kReservedLanguage &&
      std::find(language_order_.begin(), language_order_.end(), language) ==
          language_order_.end()) {
    language_order_.push_back(language);
  }
  tokens_.push_back(std::move(token));
  languages_.push_back(std::move(language));
}

std::optional<std::int64_t> Vocabulary::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------------------

const VideoRecord& CorpusManifest::video(std::string_view video_id) const {
  auto it = video_index_.find(video_id);
  if (it == video_index_.end()) throw CorpusError("unknown video " + std::string(video_id));
  return videos[it->second];
}

bool CorpusManifest::has_video(std::string_view video_id) const {
  return video_index_.find(video_id) != video_index_.end();
}

std::vector<std::string> CorpusManifest::split_videos(Split split) const {
  std::vector<std::string> out;
  for (const VideoRecord& v : videos) {
    if (v.split == split) out.push_back(v.video_id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

const std::vector<SubtitleSegment>& CorpusManifest::segments(std::string_view video_id,
                                                             std::string_view language) const {
  auto it = segments_.find(std::pair{std::string(video_id), std::string(language)});
  return it == segments_.end() ? kNoSegments : it->second;
}

std::vector<std::string> CorpusManifest::languages_for(std::string_view video_id) const {
  std::vector<std::string> out;
  for (const std::string& lang : languages) {
    if (!segments(video_id, lang).empty()) out.push_back(lang);
  }
  return out;
}

const VideoFeatureSequence& CorpusManifest::features(std::string_view video_id) const {
  auto it = features_.find(video_id);
  if (it == features_.end()) throw CorpusError("no features loaded for " + std::string(video_id));
  return it->second;
}

std::size_t CorpusManifest::feature_dim() const {
  if (features_.empty()) throw CorpusError("corpus has no video features");
  return features_.begin()->second.width;
}

std::size_t CorpusManifest::segment_count() const {
  std::size_t n = 0;
  for (const auto& [key, segs] : segments_) n += segs.size();
  return n;
}

void CorpusManifest::add_segment(SubtitleSegment segment) {
  auto key = std::pair{segment.video_id, segment.language};
  segments_[key].push_back(std::move(segment));
}

void CorpusManifest::set_features(const std::string& video_id, VideoFeatureSequence features) {
  features_[video_id] = std::move(features);
}

void CorpusManifest::index() {
  video_index_.clear();
  for (std::size_t i = 0; i < videos.size(); ++i) {
    if (!video_index_.emplace(videos[i].video_id, i).second) {
      throw CorpusError("video " + videos[i].video_id + " listed twice");
    }
  }
  for (auto& [key, segs] : segments_) {
    std::stable_sort(segs.begin(), segs.end(), [](const auto& a, const auto& b) {
      return a.start_sec < b.start_sec;
    });
    for (std::size_t i = 1; i < segs.size(); ++i) {
      if (segs[i].start_sec < segs[i - 1].end_sec) {
        throw CorpusError("overlapping subtitle segments for video " + key.first +
                          " language " + key.second + " at " +
                          format_real(segs[i].start_sec) + "s");
      }
    }
  }
}

// ---------------------------------------------------------------------------

VideoFeatureSequence load_video_features(const fs::path& path) {
  LineReader reader(path);
  std::string line;
  if (!reader.next(line)) reader.fail("empty feature file");
  auto header = split_on(line, ' ');
  std::int64_t m = 0, h = 0;
  if (header.size() != 4 || header[0] != "VFEAT" || header[1] != "v1" ||
      !parse_int(header[2], m) || !parse_int(header[3], h) || m < 1 || h < 1) {
    reader.fail("expected header 'VFEAT v1 M H'");
  }
  VideoFeatureSequence out;
  out.length = static_cast<std::size_t>(m);
  out.width = static_cast<std::size_t>(h);
  out.values.reserve(out.length * out.width);
  for (std::size_t r = 0; r < out.length; ++r) {
    if (!reader.next(line)) reader.fail("expected " + std::to_string(m) + " rows, found " + std::to_string(r));
    auto fields = split_on(line, ' ');
    if (fields.size() != out.width) {
      reader.fail("row has " + std::to_string(fields.size()) + " values, header says " +
                  std::to_string(h));
    }
    for (const std::string& f : fields) {
      double v = 0.0;
      if (!parse_double(f, v)) reader.fail("malformed value '" + f + "'");
      if (!std::isfinite(v)) reader.fail("non-finite value '" + f + "'");
      out.values.push_back(v);
    }
  }
  while (reader.next(line)) {
    if (!line.empty()) reader.fail("trailing content after " + std::to_string(m) + " rows");
  }
  return out;
}

void save_video_features(const VideoFeatureSequence& features, const fs::path& path) {
  std::string s = "VFEAT v1 " + std::to_string(features.length) + " " +
                  std::to_string(features.width) + "\n";
  for (std::size_t r = 0; r < features.length; ++r) {
    for (std::size_t c = 0; c < features.width; ++c) {
      if (c) s += ' ';
      s += format_real(features.at(r, c));
    }
    s += '\n';
  }
  write_file(path, s);
}

CorpusManifest load_manifest(const fs::path& root) {
  CorpusManifest m;
  m.root = root;
  std::string line;

  {
    LineReader reader(root / "vocab.tsv");
    expect_header(reader, kVocabHeader);
    while (reader.next(line)) {
      if (line.empty()) continue;
      auto f = split_on(line, '\t');
      std::int64_t id = 0;
      if (f.size() != 3 || !parse_int(f[1], id)) reader.fail("expected 'token<TAB>id<TAB>language'");
      try {
        m.vocabulary.add(f[0], id, f[2]);
      } catch (const CorpusError& e) {
        reader.fail_corpus(e.what());
      }
    }
    if (m.vocabulary.size() < 2 || m.vocabulary.token(kMaskTokenId) != kMaskToken ||
        m.vocabulary.token(kUnknownTokenId) != kUnknownToken) {
      throw CorpusError((root / "vocab.tsv").string() +
                        ": ids 0 and 1 must be [MASK] and [UNK]");
    }
    m.languages = m.vocabulary.language_order();
    if (m.languages.empty()) throw CorpusError((root / "vocab.tsv").string() + ": no languages");
  }

  {
    LineReader reader(root / "manifest.tsv");
    expect_header(reader, kManifestHeader);
    while (reader.next(line)) {
      if (line.empty()) continue;
      auto f = split_on(line, '\t');
      VideoRecord v;
      if (f.size() != 4 || f[0].empty() || !parse_double(f[1], v.duration_sec) || f[2].empty()) {
        reader.fail("expected 'video_id<TAB>duration_sec<TAB>feature_path<TAB>split'");
      }
      if (!(v.duration_sec > 0.0)) reader.fail_corpus("duration must be positive");
      v.video_id = f[0];
      v.feature_path = f[2];
      try {
        v.split = parse_split(f[3]);
      } catch (const UsageError&) {
        reader.fail("unknown split '" + f[3] + "'");
      }
      m.videos.push_back(std::move(v));
    }
  }

  std::set<std::string> known_languages(m.languages.begin(), m.languages.end());
  {
    std::set<std::string> video_ids;
    for (const VideoRecord& v : m.videos) video_ids.insert(v.video_id);
    LineReader reader(root / "subtitles.tsv");
    expect_header(reader, kSubtitleHeader);
    while (reader.next(line)) {
      if (line.empty()) continue;
      auto f = split_on(line, '\t');
      SubtitleSegment s;
      if (f.size() != 5 || !parse_double(f[2], s.start_sec) || !parse_double(f[3], s.end_sec)) {
        reader.fail("expected 'video_id<TAB>language<TAB>start_sec<TAB>end_sec<TAB>tokens'");
      }
      if (!video_ids.count(f[0])) reader.fail_corpus("unknown video '" + f[0] + "'");
      if (!known_languages.count(f[1])) reader.fail_corpus("unknown language '" + f[1] + "'");
      if (!(s.start_sec >= 0.0 && s.start_sec < s.end_sec)) {
        reader.fail_corpus("segment needs 0 <= start < end");
      }
      s.video_id = f[0];
      s.language = f[1];
      for (const std::string& tok : split_on(f[4], ' ')) {
        if (tok.empty()) continue;
        auto id = m.vocabulary.find(tok);
        if (!id) reader.fail_corpus("unknown token '" + tok + "'");
        s.tokens.push_back(*id);
      }
      if (s.tokens.empty()) reader.fail_corpus("segment has no tokens");
      m.add_segment(std::move(s));
    }
  }

  m.index();

  std::size_t width = 0;
  for (const VideoRecord& v : m.videos) {
    fs::path path = root / v.feature_path;
    if (!fs::exists(path)) {
      throw CorpusError("video " + v.video_id + ": missing feature file " + path.string());
    }
    VideoFeatureSequence feats = load_video_features(path);
    if (width == 0) width = feats.width;
    if (feats.width != width) {
      throw CorpusError(path.string() + ": feature width " + std::to_string(feats.width) +
                        " differs from " + std::to_string(width));
    }
    m.set_features(v.video_id, std::move(feats));
  }

  for (const std::string& id : m.split_videos(Split::kTest)) {
    for (const std::string& lang : m.languages) {
      if (m.segments(id, lang).empty()) {
        throw CorpusError("test video " + id + " has no caption in language " + lang);
      }
    }
  }
  return m;
}

void save_manifest_tables(const CorpusManifest& m, const fs::path& root) {
  std::string manifest = std::string(kManifestHeader) + "\n";
  for (const VideoRecord& v : m.videos) {
    manifest += v.video_id + "\t" + format_real(v.duration_sec) + "\t" + v.feature_path + "\t" +
                std::string(split_name(v.split)) + "\n";
  }
  write_file(root / "manifest.tsv", manifest);

  std::string vocab = std::string(kVocabHeader) + "\n";
  for (std::size_t i = 0; i < m.vocabulary.size(); ++i) {
    const auto id = static_cast<std::int64_t>(i);
    vocab += m.vocabulary.token(id) + "\t" + std::to_string(i) + "\t" +
             m.vocabulary.language(id) + "\n";
  }
  write_file(root / "vocab.tsv", vocab);

  std::string subs = std::string(kSubtitleHeader) + "\n";
  for (const VideoRecord& v : m.videos) {
    for (const std::string& lang : m.languages) {
      for (const SubtitleSegment& s : m.segments(v.video_id, lang)) {
        subs += s.video_id + "\t" + s.language + "\t" + format_real(s.start_sec) + "\t" +
                format_real(s.end_sec) + "\t";
        for (std::size_t k = 0; k < s.tokens.size(); ++k) {
          if (k) subs += ' ';
          subs += m.vocabulary.token(s.tokens[k]);
        }
        subs += "\n";
      }
    }
  }
  write_file(root / "subtitles.tsv", subs);
}

}  // namespace mmp
