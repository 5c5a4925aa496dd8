#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mmp/rng.hpp"
#include "mmp/tensor.hpp"

namespace mmp {

/// A sentence as token ids into the global vocabulary. The language tag is
/// bookkeeping only; every language goes through the same encoder.
struct TokenSequence {
  std::string language;
  std::vector<std::int64_t> tokens;
};

/// Per-second video features, one row per second. `length` may be zero only
/// where a caller explicitly allows an empty visual context.
struct VideoFeatureSequence {
  std::size_t length = 0;
  std::size_t width = 0;
  std::vector<double> values;  // row-major length x width

  double at(std::size_t r, std::size_t c) const { return values[r * width + c]; }
  Tensor as_tensor() const;
  /// Rows [begin, begin + count) clamped to the available length.
  VideoFeatureSequence rows(std::size_t begin, std::size_t count) const;
};

struct ModelConfig {
  std::size_t vocab_size = 0;   // from the corpus vocabulary
  std::size_t feature_dim = 0;  // H, from the corpus features
  std::size_t dim = 64;         // D, shared embedding width
  std::size_t backbone_dim = 64;
  std::size_t backbone_layers = 2;
  std::size_t backbone_heads = 4;
  std::size_t output_layer = 2;  // 1-based layer whose output is e_x
  std::size_t freeze_below = 0;  // layers [0, freeze_below) plus embeddings frozen when > 0
  std::size_t pool_layers = 2;
  std::size_t pool_heads = 4;
  std::size_t ffn_dim = 128;
  std::size_t max_text_len = 96;
  std::size_t max_video_len = 128;

  /// Throws ConfigError when an architectural invariant is violated.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Per-call forward settings. Dropout draws from `rng` in evaluation order.
struct ForwardContext {
  Rng* rng = nullptr;
  bool training = false;
  double dropout = 0.0;

  static ForwardContext inference() { return {}; }
};

struct AttentionWeights {
  Tensor query_weight, query_bias;
  Tensor key_weight, key_bias;
  Tensor value_weight, value_bias;
  Tensor output_weight, output_bias;
};

/// Post-norm Transformer layer: attention, residual, norm, feed-forward,
/// residual, norm.
struct TransformerLayer {
  AttentionWeights attention;
  Tensor norm1_gamma, norm1_beta;
  Tensor ffn_in_weight, ffn_in_bias;
  Tensor ffn_out_weight, ffn_out_bias;
  Tensor norm2_gamma, norm2_beta;
};

/// Stack of Transformer layers used as a pooling function. Holds no
/// positional parameters: order information must come from its input.
struct PoolingHead {
  std::vector<TransformerLayer> layers;
  std::size_t heads = 4;
};

/// Trainable stand-in for a pre-trained multilingual text encoder.
struct TextBackbone {
  Tensor token_embedding;     // [vocab, backbone_dim]
  Tensor position_embedding;  // [max_text_len, backbone_dim]
  Tensor norm_gamma, norm_beta;
  std::vector<TransformerLayer> layers;
  std::size_t heads = 4;
  std::size_t output_layer = 2;
  std::size_t freeze_below = 0;
  Tensor projection_weight, projection_bias;  // defined only when backbone_dim != dim
};

struct VideoProjector {
  Tensor weight;  // [H, D]
  Tensor bias;    // [D]
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
  bool frozen = false;
};

/// Full parameter set: backbone, text head, video head and video projector.
/// The two heads never share storage.
struct ModelParameters {
  ModelConfig config;
  TextBackbone backbone;
  PoolingHead text_head;
  PoolingHead video_head;
  VideoProjector video_projector;

  /// Weights ~ Normal(0, 0.02^2), biases 0, layer-norm gamma 1 / beta 0.
  static ModelParameters initialize(const ModelConfig& config, Rng& rng);

  /// Every parameter in a fixed order with a stable dotted name.
  std::vector<NamedTensor> named_parameters() const;
  /// Parameters the optimizer updates (frozen ones excluded).
  std::vector<Tensor> trainable_parameters() const;
  ModelParameters clone() const;
  void zero_grad();
  /// Re-applies the freeze boundary to config, backbone and requires_grad.
  void set_freeze_below(std::size_t freeze_below);
};

/// Standard scaled dot-product attention, 1/sqrt(D/heads) scaling, heads
/// concatenated and projected.
Tensor multi_head_attention(const Tensor& query, const Tensor& key, const Tensor& value,
                            std::size_t heads, const AttentionWeights& weights);

Tensor transformer_layer(const TransformerLayer& layer, const Tensor& query,
                         const Tensor& context, std::size_t heads, ForwardContext& ctx);

/// Full output of the pooling head's last layer. The first layer attends
/// from `query` over `context`; later layers attend over the previous output.
Tensor transformer_pool_sequence(const PoolingHead& head, const Tensor& query,
                                 const Tensor& context, ForwardContext& ctx);

/// Row 0 of transformer_pool_sequence.
Tensor transformer_pool(const PoolingHead& head, const Tensor& query, const Tensor& context,
                        ForwardContext& ctx);

/// Contextual token representations e_x [N, D].
Tensor embed_tokens(const TokenSequence& x, const ModelParameters& params, ForwardContext& ctx);

/// e_v = features * W_v + b, shape [M, D].
Tensor project_video(const VideoFeatureSequence& v, const VideoProjector& projector);

Tensor encode_text(const TokenSequence& x, const ModelParameters& params, ForwardContext& ctx);
Tensor encode_video(const VideoFeatureSequence& v, const ModelParameters& params,
                    ForwardContext& ctx);
/// Text encoding whose first pooling layer also attends over the video
/// rows: key = value = e_x || e_v. An empty video reduces to encode_text.
Tensor encode_text_conditioned(const TokenSequence& x, const VideoFeatureSequence& v,
                               const ModelParameters& params, ForwardContext& ctx);

}  // namespace mmp
