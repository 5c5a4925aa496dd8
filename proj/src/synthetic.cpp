#include "mmp/synthetic.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mmp/errors.hpp"

namespace mmp {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const char* const kLanguageCodes[] = {"en", "de", "fr", "cs", "zh", "ru", "vi", "sw", "es"};

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synthetic spec field '") + key + "': " + e.what());
  }
}

std::size_t draw_between(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.uniform_int(hi - lo + 1));
}

struct SplitPlan {
  Split split;
  const char* prefix;
  std::size_t count;
};

}  // namespace

void SyntheticSpec::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("synthetic spec: " + m); };
  if (languages == 0) fail("languages must be positive");
  if (concepts == 0) fail("concepts must be positive");
  if (feature_dim == 0) fail("feature_dim must be positive");
  if (min_segments == 0 || min_segments > max_segments) fail("need 1 <= min_segments <= max_segments");
  if (min_segment_sec == 0 || min_segment_sec > max_segment_sec)
    fail("need 1 <= min_segment_sec <= max_segment_sec");
  if (min_concepts_per_segment == 0 || min_concepts_per_segment > max_concepts_per_segment)
    fail("need 1 <= min_concepts_per_segment <= max_concepts_per_segment");
  if (max_concepts_per_segment > min_segment_sec)
    fail("max_concepts_per_segment must not exceed min_segment_sec");
  if (!(noise >= 0.0)) fail("noise must be >= 0");
  if (!(distractor_prob >= 0.0 && distractor_prob <= 1.0)) fail("distractor_prob must lie in [0, 1]");
}

SyntheticSpec SyntheticSpec::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synthetic spec is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("synthetic spec must be a JSON object");
  SyntheticSpec s;
  for (const auto& [key, value] : j.items()) {
    if (key == "languages") read_field(j, "languages", s.languages);
    else if (key == "concepts") read_field(j, "concepts", s.concepts);
    else if (key == "pretrain_videos") read_field(j, "pretrain_videos", s.pretrain_videos);
    else if (key == "train_videos") read_field(j, "train_videos", s.train_videos);
    else if (key == "val_videos") read_field(j, "val_videos", s.val_videos);
    else if (key == "test_videos") read_field(j, "test_videos", s.test_videos);
    else if (key == "min_segments") read_field(j, "min_segments", s.min_segments);
    else if (key == "max_segments") read_field(j, "max_segments", s.max_segments);
    else if (key == "min_segment_sec") read_field(j, "min_segment_sec", s.min_segment_sec);
    else if (key == "max_segment_sec") read_field(j, "max_segment_sec", s.max_segment_sec);
    else if (key == "min_concepts_per_segment") read_field(j, "min_concepts_per_segment", s.min_concepts_per_segment);
    else if (key == "max_concepts_per_segment") read_field(j, "max_concepts_per_segment", s.max_concepts_per_segment);
    else if (key == "max_gap_sec") read_field(j, "max_gap_sec", s.max_gap_sec);
    else if (key == "feature_dim") read_field(j, "feature_dim", s.feature_dim);
    else if (key == "noise") read_field(j, "noise", s.noise);
    else if (key == "distractor_prob") read_field(j, "distractor_prob", s.distractor_prob);
    else if (key == "seed") read_field(j, "seed", s.seed);
    else throw ConfigError("synthetic spec: unknown key '" + key + "'");
  }
  s.validate();
  return s;
}

SyntheticSpec SyntheticSpec::from_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open synthetic spec " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string SyntheticSpec::to_json_text() const {
  json j = {{"languages", languages},
            {"concepts", concepts},
            {"pretrain_videos", pretrain_videos},
            {"train_videos", train_videos},
            {"val_videos", val_videos},
            {"test_videos", test_videos},
            {"min_segments", min_segments},
            {"max_segments", max_segments},
            {"min_segment_sec", min_segment_sec},
            {"max_segment_sec", max_segment_sec},
            {"min_concepts_per_segment", min_concepts_per_segment},
            {"max_concepts_per_segment", max_concepts_per_segment},
            {"max_gap_sec", max_gap_sec},
            {"feature_dim", feature_dim},
            {"noise", noise},
            {"distractor_prob", distractor_prob},
            {"seed", seed}};
  return j.dump(2) + "\n";
}

std::string synthetic_language(std::size_t k) {
  if (k < std::size(kLanguageCodes)) return kLanguageCodes[k];
  return "l" + std::to_string(k);
}

std::int64_t synthetic_token_id(const SyntheticSpec& spec, std::size_t language,
                                std::size_t concept_id) {
  return 2 + static_cast<std::int64_t>(language * spec.concepts + concept_id);
}

std::vector<double> synthetic_concept_features(const SyntheticSpec& spec) {
  Rng rng = Rng::stream(spec.seed, "synthetic/concepts");
  std::vector<double> g(spec.concepts * spec.feature_dim);
  for (double& x : g) x = rng.normal();
  return g;
}

CorpusManifest generate_synthetic_corpus(const SyntheticSpec& spec, const fs::path& out_root) {
  spec.validate();
  const std::vector<double> concept_features = synthetic_concept_features(spec);
  const std::size_t h = spec.feature_dim;

  CorpusManifest m;
  m.root = out_root;
  m.vocabulary.add(std::string(kMaskToken), kMaskTokenId, std::string(kReservedLanguage));
  m.vocabulary.add(std::string(kUnknownToken), kUnknownTokenId, std::string(kReservedLanguage));
  for (std::size_t l = 0; l < spec.languages; ++l) {
    const std::string lang = synthetic_language(l);
    m.languages.push_back(lang);
    for (std::size_t c = 0; c < spec.concepts; ++c)
      m.vocabulary.add(lang + "_" + std::to_string(c), synthetic_token_id(spec, l, c), lang);
  }

  const SplitPlan plans[] = {{Split::kPretrain, "pt", spec.pretrain_videos},
                             {Split::kTrain, "tr", spec.train_videos},
                             {Split::kVal, "va", spec.val_videos},
                             {Split::kTest, "te", spec.test_videos}};
  for (const SplitPlan& plan : plans) {
    for (std::size_t i = 0; i < plan.count; ++i) {
      char id_buf[32];
      std::snprintf(id_buf, sizeof id_buf, "%s%05zu", plan.prefix, i);
      const std::string video_id = id_buf;
      Rng rng = Rng::stream(spec.seed, "synthetic/video/" + video_id);

      struct Segment {
        std::size_t start, length;
        std::vector<std::size_t> concepts;
      };
      std::vector<Segment> segments(draw_between(rng, spec.min_segments, spec.max_segments));
      std::size_t clock = 0;
      for (std::size_t s = 0; s < segments.size(); ++s) {
        if (s > 0) clock += static_cast<std::size_t>(rng.uniform_int(spec.max_gap_sec + 1));
        Segment& seg = segments[s];
        seg.start = clock;
        seg.length = draw_between(rng, spec.min_segment_sec, spec.max_segment_sec);
        seg.concepts.resize(
            draw_between(rng, spec.min_concepts_per_segment, spec.max_concepts_per_segment));
        for (std::size_t& c : seg.concepts) c = static_cast<std::size_t>(rng.uniform_int(spec.concepts));
        clock += seg.length;
      }
      const std::size_t duration = clock;

      // -1 marks gap seconds, which carry noise only.
      std::vector<long> second_concept(duration, -1);
      for (const Segment& seg : segments) {
        for (std::size_t t = 0; t < seg.length; ++t)
          second_concept[seg.start + t] =
              static_cast<long>(seg.concepts[t * seg.concepts.size() / seg.length]);
      }
      VideoFeatureSequence feats;
      feats.length = duration;
      feats.width = h;
      feats.values.resize(duration * h);
      for (std::size_t t = 0; t < duration; ++t) {
        for (std::size_t k = 0; k < h; ++k) {
          double base = second_concept[t] < 0
                            ? 0.0
                            : concept_features[static_cast<std::size_t>(second_concept[t]) * h + k];
          feats.values[t * h + k] = base + (spec.noise > 0.0 ? rng.normal(0.0, spec.noise) : 0.0);
        }
      }

      for (std::size_t l = 0; l < spec.languages; ++l) {
        for (const Segment& seg : segments) {
          SubtitleSegment sub;
          sub.video_id = video_id;
          sub.language = m.languages[l];
          sub.start_sec = static_cast<double>(seg.start);
          sub.end_sec = static_cast<double>(seg.start + seg.length);
          for (std::size_t c : seg.concepts) sub.tokens.push_back(synthetic_token_id(spec, l, c));
          if (rng.bernoulli(spec.distractor_prob)) {
            const auto pos = static_cast<std::size_t>(rng.uniform_int(sub.tokens.size()));
            sub.tokens[pos] = synthetic_token_id(
                spec, l, static_cast<std::size_t>(rng.uniform_int(spec.concepts)));
          }
          m.add_segment(std::move(sub));
        }
      }

      VideoRecord record;
      record.video_id = video_id;
      record.duration_sec = static_cast<double>(duration);
      record.feature_path = "features/" + video_id + ".vfeat";
      record.split = plan.split;
      save_video_features(feats, out_root / record.feature_path);
      m.set_features(video_id, std::move(feats));
      m.videos.push_back(std::move(record));
    }
  }
  m.index();
  save_manifest_tables(m, out_root);
  std::ofstream(out_root / "synthetic_spec.json", std::ios::binary | std::ios::trunc)
      << spec.to_json_text();
  return load_manifest(out_root);
}

}  // namespace mmp
