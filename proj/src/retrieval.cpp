#include "mmp/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "mmp/errors.hpp"

namespace mmp {

using json = nlohmann::json;

namespace {

std::vector<double> normalized(std::span<const double> v, const std::string& what) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  const double norm = std::sqrt(ss);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw NumericError("zero-norm " + what);
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= norm;
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::size_t rank_against(std::span<const double> unit_query, const EmbeddingMatrix& unit_pool,
                         std::size_t paired_index) {
  const double target = dot(unit_query, unit_pool.row(paired_index));
  std::size_t rank = 1;
  for (std::size_t j = 0; j < unit_pool.rows; ++j) {
    const double s = dot(unit_query, unit_pool.row(j));
    if (s > target || (s == target && j < paired_index)) ++rank;
  }
  return rank;
}

EmbeddingMatrix normalized_rows(const EmbeddingMatrix& m) {
  EmbeddingMatrix out = m;
  for (std::size_t r = 0; r < m.rows; ++r) {
    std::vector<double> u = normalized(m.row(r), "pool row " + std::to_string(r));
    std::copy(u.begin(), u.end(), out.values.begin() + static_cast<std::ptrdiff_t>(r * m.cols));
  }
  return out;
}

json row_to_json(const LanguageRecall& r) {
  return {{"language", r.language}, {"r1", r.r1},         {"r5", r.r5},
          {"r10", r.r10},           {"pool", r.pool},     {"queries", r.queries}};
}

LanguageRecall row_from_json(const json& j) {
  LanguageRecall r;
  r.language = j.at("language").get<std::string>();
  r.r1 = j.at("r1").get<double>();
  r.r5 = j.at("r5").get<double>();
  r.r10 = j.at("r10").get<double>();
  r.pool = j.at("pool").get<std::size_t>();
  r.queries = j.at("queries").get<std::size_t>();
  return r;
}

std::string csv_row(const LanguageRecall& r) {
  return r.language + "," + format_real(r.r1) + "," + format_real(r.r5) + "," +
         format_real(r.r10) + "," + std::to_string(r.pool) + "," + std::to_string(r.queries) +
         "\n";
}

}  // namespace

std::vector<double> ModelRetrievalEncoder::embed_text(const TokenSequence& x) const {
  NoGradGuard no_grad;
  ForwardContext ctx = ForwardContext::inference();
  return encode_text(x, params_, ctx).values();
}

std::vector<double> ModelRetrievalEncoder::embed_video(const VideoFeatureSequence& v) const {
  NoGradGuard no_grad;
  ForwardContext ctx = ForwardContext::inference();
  return encode_video(v, params_, ctx).values();
}

std::size_t rank_of_paired(std::span<const double> query, const EmbeddingMatrix& pool,
                           std::size_t paired_index) {
  if (pool.rows == 0) throw EvaluationError("rank_of_paired: empty pool");
  if (paired_index >= pool.rows) {
    throw EvaluationError("rank_of_paired: paired index " + std::to_string(paired_index) +
                          " outside pool of " + std::to_string(pool.rows));
  }
  if (query.size() != pool.cols) {
    throw DimensionError("rank_of_paired: query width " + std::to_string(query.size()) +
                         " vs pool width " + std::to_string(pool.cols));
  }
  return rank_against(normalized(query, "query"), normalized_rows(pool), paired_index);
}

double recall_at_k(std::span<const std::size_t> ranks, std::size_t k) {
  if (k == 0) throw ParameterError("recall_at_k: k must be >= 1");
  if (ranks.empty()) throw EvaluationError("recall_at_k: no ranks");
  const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](std::size_t r) { return r <= k; });
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

std::vector<std::string> evaluation_pool(const CorpusManifest& manifest,
                                         const EvalOptions& options) {
  if (options.pool_size == 0) throw EvaluationError("pool size must be positive");
  std::vector<std::string> ids = manifest.split_videos(options.split);
  if (ids.size() < options.pool_size) {
    throw EvaluationError("split " + std::string(split_name(options.split)) + " has " +
                          std::to_string(ids.size()) + " videos; pool needs " +
                          std::to_string(options.pool_size));
  }
  ids.resize(options.pool_size);
  return ids;
}

EmbeddingMatrix embed_pool(const RetrievalEncoder& encoder, const CorpusManifest& manifest,
                           std::span<const std::string> pool, const EvalOptions& options) {
  EmbeddingMatrix m;
  m.rows = pool.size();
  for (const std::string& id : pool) {
    std::vector<double> e = encoder.embed_video(manifest.features(id).rows(0, options.max_video_len));
    if (m.cols == 0) m.cols = e.size();
    if (e.size() != m.cols) throw DimensionError("video embeddings differ in width");
    m.values.insert(m.values.end(), e.begin(), e.end());
  }
  return m;
}

std::vector<std::size_t> query_ranks(const RetrievalEncoder& encoder,
                                     const CorpusManifest& manifest, std::string_view language,
                                     std::span<const std::string> pool,
                                     const EmbeddingMatrix& pool_embeddings,
                                     const EvalOptions& options) {
  const EmbeddingMatrix unit_pool = normalized_rows(pool_embeddings);
  std::vector<std::size_t> ranks;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& segments = manifest.segments(pool[i], language);
    if (segments.empty()) {
      throw EvaluationError("video " + pool[i] + " has no caption in language " +
                            std::string(language));
    }
    const std::size_t n = options.all_captions ? segments.size() : 1;
    for (std::size_t s = 0; s < n; ++s) {
      TokenSequence x{std::string(language), segments[s].tokens};
      if (x.tokens.size() > options.max_text_len) x.tokens.resize(options.max_text_len);
      std::vector<double> q = encoder.embed_text(x);
      if (q.size() != unit_pool.cols) throw DimensionError("query and pool widths differ");
      ranks.push_back(rank_against(normalized(q, "query for " + pool[i]), unit_pool, i));
    }
  }
  return ranks;
}

LanguageRecall evaluate_language(const RetrievalEncoder& encoder, const CorpusManifest& manifest,
                                 std::string_view language, const EvalOptions& options) {
  const std::vector<std::string> pool = evaluation_pool(manifest, options);
  const EmbeddingMatrix videos = embed_pool(encoder, manifest, pool, options);
  const std::vector<std::size_t> ranks =
      query_ranks(encoder, manifest, language, pool, videos, options);
  return {std::string(language), recall_at_k(ranks, 1), recall_at_k(ranks, 5),
          recall_at_k(ranks, 10), pool.size(), ranks.size()};
}

LanguageRecall average_rows(std::span<const LanguageRecall> rows) {
  LanguageRecall avg;
  avg.language = "avg";
  if (rows.empty()) return avg;
  double queries = 0.0;
  double pool = 0.0;
  for (const LanguageRecall& r : rows) {
    avg.r1 += r.r1;
    avg.r5 += r.r5;
    avg.r10 += r.r10;
    pool += static_cast<double>(r.pool);
    queries += static_cast<double>(r.queries);
  }
  const double n = static_cast<double>(rows.size());
  avg.r1 /= n;
  avg.r5 /= n;
  avg.r10 /= n;
  avg.pool = static_cast<std::size_t>(std::llround(pool / n));
  avg.queries = static_cast<std::size_t>(std::llround(queries / n));
  return avg;
}

RetrievalReport evaluate_all(const RetrievalEncoder& encoder, const CorpusManifest& manifest,
                             std::span<const std::string> languages, const EvalOptions& options) {
  std::vector<std::string> ordered;
  for (const std::string& lang : manifest.languages) {
    if (std::find(languages.begin(), languages.end(), lang) != languages.end())
      ordered.push_back(lang);
  }
  for (const std::string& lang : languages) {
    if (std::find(ordered.begin(), ordered.end(), lang) == ordered.end())
      throw EvaluationError("language " + lang + " is not in the corpus");
  }
  if (ordered.empty()) throw EvaluationError("no languages to evaluate");

  const std::vector<std::string> pool = evaluation_pool(manifest, options);
  const EmbeddingMatrix videos = embed_pool(encoder, manifest, pool, options);
  RetrievalReport report;
  report.split = std::string(split_name(options.split));
  for (const std::string& lang : ordered) {
    const std::vector<std::size_t> ranks = query_ranks(encoder, manifest, lang, pool, videos, options);
    report.rows.push_back({lang, recall_at_k(ranks, 1), recall_at_k(ranks, 5),
                           recall_at_k(ranks, 10), pool.size(), ranks.size()});
  }
  report.average = average_rows(report.rows);
  return report;
}

std::string RetrievalReport::to_json() const {
  json rows_json = json::array();
  for (const LanguageRecall& r : rows) rows_json.push_back(row_to_json(r));
  json j = {{"checkpoint", checkpoint_id},
            {"split", split},
            {"seed", seed},
            {"config", config.empty() ? json(nullptr) : json::parse(config)},
            {"rows", rows_json},
            {"average", row_to_json(average)}};
  return j.dump(2) + "\n";
}

RetrievalReport RetrievalReport::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    RetrievalReport r;
    r.checkpoint_id = j.at("checkpoint").get<std::string>();
    r.split = j.at("split").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    if (!j.at("config").is_null()) r.config = j.at("config").dump();
    for (const json& row : j.at("rows")) r.rows.push_back(row_from_json(row));
    r.average = row_from_json(j.at("average"));
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed retrieval report: ") + e.what());
  }
}

std::string RetrievalReport::to_csv() const {
  std::string out = "language,r1,r5,r10,pool,queries\n";
  for (const LanguageRecall& r : rows) out += csv_row(r);
  out += csv_row(average);
  return out;
}

}  // namespace mmp
