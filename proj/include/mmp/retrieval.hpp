#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mmp/corpus.hpp"
#include "mmp/encoders.hpp"

namespace mmp {

/// Produces fixed-length embeddings for retrieval. Implemented by the trained
/// model and by test oracles.
class RetrievalEncoder {
 public:
  virtual ~RetrievalEncoder() = default;
  virtual std::vector<double> embed_text(const TokenSequence& x) const = 0;
  virtual std::vector<double> embed_video(const VideoFeatureSequence& v) const = 0;
};

/// Unconditioned text and video encoders of a model, run without dropout or
/// gradient tracking.
class ModelRetrievalEncoder final : public RetrievalEncoder {
 public:
  explicit ModelRetrievalEncoder(const ModelParameters& params) : params_(params) {}
  std::vector<double> embed_text(const TokenSequence& x) const override;
  std::vector<double> embed_video(const VideoFeatureSequence& v) const override;

 private:
  const ModelParameters& params_;
};

/// Row-major P x D matrix of candidate embeddings.
struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values).subspan(r * cols, cols);
  }
};

/// 1 + #{j : s_j > s_p} + #{j < p : s_j == s_p}, with s the cosine similarity
/// of the query to each pool row.
std::size_t rank_of_paired(std::span<const double> query, const EmbeddingMatrix& pool,
                           std::size_t paired_index);

/// Fraction of ranks <= k.
double recall_at_k(std::span<const std::size_t> ranks, std::size_t k);

struct LanguageRecall {
  std::string language;
  double r1 = 0.0;
  double r5 = 0.0;
  double r10 = 0.0;
  std::size_t pool = 0;
  std::size_t queries = 0;

  bool operator==(const LanguageRecall&) const = default;
};

struct EvalOptions {
  Split split = Split::kTest;
  std::size_t pool_size = 100;
  bool all_captions = false;  // every caption becomes its own query
  std::size_t max_text_len = 96;
  std::size_t max_video_len = 128;
};

/// The first pool_size videos of the split by sorted id; throws
/// EvaluationError when the split is too small.
std::vector<std::string> evaluation_pool(const CorpusManifest& manifest, const EvalOptions& options);

/// Video embeddings for a pool, in pool order.
EmbeddingMatrix embed_pool(const RetrievalEncoder& encoder, const CorpusManifest& manifest,
                           std::span<const std::string> pool, const EvalOptions& options);

/// Ranks of every query of `language` against a pre-embedded pool.
std::vector<std::size_t> query_ranks(const RetrievalEncoder& encoder,
                                     const CorpusManifest& manifest, std::string_view language,
                                     std::span<const std::string> pool,
                                     const EmbeddingMatrix& pool_embeddings,
                                     const EvalOptions& options);

LanguageRecall evaluate_language(const RetrievalEncoder& encoder, const CorpusManifest& manifest,
                                 std::string_view language, const EvalOptions& options);

struct RetrievalReport {
  std::string checkpoint_id;
  std::string split;
  std::uint64_t seed = 0;
  std::string config;  // JSON echo of the producing configuration, may be empty
  std::vector<LanguageRecall> rows;
  LanguageRecall average;

  std::string to_json() const;
  static RetrievalReport from_json(const std::string& text);
  /// `language,r1,r5,r10,pool,queries` rows plus a final `avg` row.
  std::string to_csv() const;

  bool operator==(const RetrievalReport&) const = default;
};

/// Rows follow the manifest's language order whatever order `languages`
/// arrives in; the average is the unweighted mean of the rows.
RetrievalReport evaluate_all(const RetrievalEncoder& encoder, const CorpusManifest& manifest,
                             std::span<const std::string> languages, const EvalOptions& options);

LanguageRecall average_rows(std::span<const LanguageRecall> rows);

}  // namespace mmp
