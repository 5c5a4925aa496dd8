#include "mmp/encoders.hpp"

#include <cmath>
#include <string>

#include "mmp/errors.hpp"
#include "mmp/ops.hpp"

namespace mmp {

namespace {

constexpr double kInitStd = 0.02;

Tensor normal_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  std::vector<double> v(rows * cols);
  for (double& x : v) x = rng.normal(0.0, kInitStd);
  return Tensor::from({rows, cols}, std::move(v), true);
}

Tensor zero_vector(std::size_t n) { return Tensor::zeros({n}, true); }
Tensor one_vector(std::size_t n) { return Tensor::full({n}, 1.0, true); }

AttentionWeights init_attention(std::size_t d, Rng& rng) {
  AttentionWeights a;
  a.query_weight = normal_matrix(d, d, rng);
  a.query_bias = zero_vector(d);
  a.key_weight = normal_matrix(d, d, rng);
  a.key_bias = zero_vector(d);
  a.value_weight = normal_matrix(d, d, rng);
  a.value_bias = zero_vector(d);
  a.output_weight = normal_matrix(d, d, rng);
  a.output_bias = zero_vector(d);
  return a;
}

TransformerLayer init_layer(std::size_t d, std::size_t ffn, Rng& rng) {
  TransformerLayer l;
  l.attention = init_attention(d, rng);
  l.norm1_gamma = one_vector(d);
  l.norm1_beta = zero_vector(d);
  l.ffn_in_weight = normal_matrix(d, ffn, rng);
  l.ffn_in_bias = zero_vector(ffn);
  l.ffn_out_weight = normal_matrix(ffn, d, rng);
  l.ffn_out_bias = zero_vector(d);
  l.norm2_gamma = one_vector(d);
  l.norm2_beta = zero_vector(d);
  return l;
}

void append_layer(std::vector<NamedTensor>& out, const std::string& prefix,
                  const TransformerLayer& l, bool frozen) {
  const AttentionWeights& a = l.attention;
  out.push_back({prefix + ".attn.query_weight", a.query_weight, frozen});
  out.push_back({prefix + ".attn.query_bias", a.query_bias, frozen});
  out.push_back({prefix + ".attn.key_weight", a.key_weight, frozen});
  out.push_back({prefix + ".attn.key_bias", a.key_bias, frozen});
  out.push_back({prefix + ".attn.value_weight", a.value_weight, frozen});
  out.push_back({prefix + ".attn.value_bias", a.value_bias, frozen});
  out.push_back({prefix + ".attn.output_weight", a.output_weight, frozen});
  out.push_back({prefix + ".attn.output_bias", a.output_bias, frozen});
  out.push_back({prefix + ".norm1.gamma", l.norm1_gamma, frozen});
  out.push_back({prefix + ".norm1.beta", l.norm1_beta, frozen});
  out.push_back({prefix + ".ffn.in_weight", l.ffn_in_weight, frozen});
  out.push_back({prefix + ".ffn.in_bias", l.ffn_in_bias, frozen});
  out.push_back({prefix + ".ffn.out_weight", l.ffn_out_weight, frozen});
  out.push_back({prefix + ".ffn.out_bias", l.ffn_out_bias, frozen});
  out.push_back({prefix + ".norm2.gamma", l.norm2_gamma, frozen});
  out.push_back({prefix + ".norm2.beta", l.norm2_beta, frozen});
}

Rng& dropout_rng(ForwardContext& ctx, Rng& fallback) {
  if (ctx.rng) return *ctx.rng;
  if (ctx.training && ctx.dropout > 0.0) throw UsageError("training forward pass needs an rng");
  return fallback;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return ops::add_bias(ops::matmul(x, w), b);
}

TransformerLayer clone_layer(const TransformerLayer& l) {
  TransformerLayer c;
  const AttentionWeights& a = l.attention;
  c.attention = {a.query_weight.clone(), a.query_bias.clone(),  a.key_weight.clone(),
                 a.key_bias.clone(),     a.value_weight.clone(), a.value_bias.clone(),
                 a.output_weight.clone(), a.output_bias.clone()};
  c.norm1_gamma = l.norm1_gamma.clone();
  c.norm1_beta = l.norm1_beta.clone();
  c.ffn_in_weight = l.ffn_in_weight.clone();
  c.ffn_in_bias = l.ffn_in_bias.clone();
  c.ffn_out_weight = l.ffn_out_weight.clone();
  c.ffn_out_bias = l.ffn_out_bias.clone();
  c.norm2_gamma = l.norm2_gamma.clone();
  c.norm2_beta = l.norm2_beta.clone();
  return c;
}

}  // namespace

Tensor VideoFeatureSequence::as_tensor() const {
  if (length == 0) throw UsageError("empty video feature sequence");
  return Tensor::from({length, width}, values);
}

VideoFeatureSequence VideoFeatureSequence::rows(std::size_t begin, std::size_t count) const {
  VideoFeatureSequence out;
  out.width = width;
  if (begin >= length) return out;
  out.length = std::min(count, length - begin);
  out.values.assign(values.begin() + static_cast<std::ptrdiff_t>(begin * width),
                    values.begin() + static_cast<std::ptrdiff_t>((begin + out.length) * width));
  return out;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (vocab_size < 3) fail("vocab_size must cover the reserved tokens");
  if (feature_dim == 0) fail("feature_dim must be positive");
  if (dim == 0 || backbone_dim == 0) fail("widths must be positive");
  if (backbone_layers == 0) fail("backbone needs at least one layer");
  if (output_layer < 1 || output_layer > backbone_layers)
    fail("output_layer must lie in [1, backbone_layers]");
  if (freeze_below > backbone_layers) fail("freeze_below must lie in [0, backbone_layers]");
  if (pool_layers == 0) fail("pool_layers must be positive");
  if (dim % pool_heads != 0) fail("dim must be divisible by pool_heads");
  if (backbone_dim % backbone_heads != 0) fail("backbone_dim must be divisible by backbone_heads");
  if (ffn_dim == 0) fail("ffn_dim must be positive");
  if (max_text_len == 0 || max_video_len == 0) fail("max lengths must be positive");
}

ModelParameters ModelParameters::initialize(const ModelConfig& config, Rng& rng) {
  config.validate();
  ModelParameters p;
  p.config = config;
  const std::size_t db = config.backbone_dim;
  const std::size_t d = config.dim;

  TextBackbone& b = p.backbone;
  b.token_embedding = normal_matrix(config.vocab_size, db, rng);
  b.position_embedding = normal_matrix(config.max_text_len, db, rng);
  b.norm_gamma = one_vector(db);
  b.norm_beta = zero_vector(db);
  for (std::size_t i = 0; i < config.backbone_layers; ++i)
    b.layers.push_back(init_layer(db, config.ffn_dim, rng));
  b.heads = config.backbone_heads;
  b.output_layer = config.output_layer;
  b.freeze_below = config.freeze_below;
  if (db != d) {
    b.projection_weight = normal_matrix(db, d, rng);
    b.projection_bias = zero_vector(d);
  }

  p.text_head.heads = config.pool_heads;
  for (std::size_t i = 0; i < config.pool_layers; ++i)
    p.text_head.layers.push_back(init_layer(d, config.ffn_dim, rng));
  p.video_head.heads = config.pool_heads;
  for (std::size_t i = 0; i < config.pool_layers; ++i)
    p.video_head.layers.push_back(init_layer(d, config.ffn_dim, rng));

  p.video_projector.weight = normal_matrix(config.feature_dim, d, rng);
  p.video_projector.bias = zero_vector(d);

  for (NamedTensor& nt : p.named_parameters()) nt.tensor.set_requires_grad(!nt.frozen);
  return p;
}

std::vector<NamedTensor> ModelParameters::named_parameters() const {
  std::vector<NamedTensor> out;
  const bool embeddings_frozen = backbone.freeze_below > 0;
  out.push_back({"backbone.token_embedding", backbone.token_embedding, embeddings_frozen});
  out.push_back({"backbone.position_embedding", backbone.position_embedding, embeddings_frozen});
  out.push_back({"backbone.norm.gamma", backbone.norm_gamma, embeddings_frozen});
  out.push_back({"backbone.norm.beta", backbone.norm_beta, embeddings_frozen});
  for (std::size_t i = 0; i < backbone.layers.size(); ++i) {
    append_layer(out, "backbone.layer" + std::to_string(i), backbone.layers[i],
                 i < backbone.freeze_below);
  }
  if (backbone.projection_weight.defined()) {
    out.push_back({"backbone.projection.weight", backbone.projection_weight, false});
    out.push_back({"backbone.projection.bias", backbone.projection_bias, false});
  }
  for (std::size_t i = 0; i < text_head.layers.size(); ++i)
    append_layer(out, "text_head.layer" + std::to_string(i), text_head.layers[i], false);
  for (std::size_t i = 0; i < video_head.layers.size(); ++i)
    append_layer(out, "video_head.layer" + std::to_string(i), video_head.layers[i], false);
  out.push_back({"video_projector.weight", video_projector.weight, false});
  out.push_back({"video_projector.bias", video_projector.bias, false});
  return out;
}

std::vector<Tensor> ModelParameters::trainable_parameters() const {
  std::vector<Tensor> out;
  for (const NamedTensor& nt : named_parameters()) {
    if (!nt.frozen) out.push_back(nt.tensor);
  }
  return out;
}

ModelParameters ModelParameters::clone() const {
  ModelParameters c;
  c.config = config;
  c.backbone.token_embedding = backbone.token_embedding.clone();
  c.backbone.position_embedding = backbone.position_embedding.clone();
  c.backbone.norm_gamma = backbone.norm_gamma.clone();
  c.backbone.norm_beta = backbone.norm_beta.clone();
  for (const auto& l : backbone.layers) c.backbone.layers.push_back(clone_layer(l));
  c.backbone.heads = backbone.heads;
  c.backbone.output_layer = backbone.output_layer;
  c.backbone.freeze_below = backbone.freeze_below;
  if (backbone.projection_weight.defined()) {
    c.backbone.projection_weight = backbone.projection_weight.clone();
    c.backbone.projection_bias = backbone.projection_bias.clone();
  }
  c.text_head.heads = text_head.heads;
  for (const auto& l : text_head.layers) c.text_head.layers.push_back(clone_layer(l));
  c.video_head.heads = video_head.heads;
  for (const auto& l : video_head.layers) c.video_head.layers.push_back(clone_layer(l));
  c.video_projector.weight = video_projector.weight.clone();
  c.video_projector.bias = video_projector.bias.clone();
  return c;
}

void ModelParameters::zero_grad() {
  for (NamedTensor& nt : named_parameters()) nt.tensor.zero_grad();
}

void ModelParameters::set_freeze_below(std::size_t freeze_below) {
  ModelConfig next = config;
  next.freeze_below = freeze_below;
  next.validate();
  config = next;
  backbone.freeze_below = freeze_below;
  for (NamedTensor& nt : named_parameters()) nt.tensor.set_requires_grad(!nt.frozen);
}

Tensor multi_head_attention(const Tensor& query, const Tensor& key, const Tensor& value,
                            std::size_t heads, const AttentionWeights& w) {
  if (query.rank() != 2 || key.rank() != 2 || value.rank() != 2) {
    throw DimensionError("multi_head_attention: inputs must be matrices");
  }
  const std::size_t d = query.cols();
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("multi_head_attention: width " + std::to_string(d) +
                      " not divisible by " + std::to_string(heads) + " heads");
  }
  if (key.rows() == 0 || key.rows() != value.rows()) {
    throw DimensionError("multi_head_attention: key/value row counts disagree");
  }
  const std::size_t head_dim = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Tensor q = linear(query, w.query_weight, w.query_bias);
  Tensor k = linear(key, w.key_weight, w.key_bias);
  Tensor v = linear(value, w.value_weight, w.value_bias);

  std::vector<Tensor> outputs;
  outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = heads == 1 ? q : ops::slice_cols(q, h * head_dim, head_dim);
    Tensor kh = heads == 1 ? k : ops::slice_cols(k, h * head_dim, head_dim);
    Tensor vh = heads == 1 ? v : ops::slice_cols(v, h * head_dim, head_dim);
    Tensor weights = ops::softmax(ops::scale(ops::matmul_transposed(qh, kh), scale));
    outputs.push_back(ops::matmul(weights, vh));
  }
  Tensor merged = heads == 1 ? outputs[0] : ops::concat_cols(outputs);
  return linear(merged, w.output_weight, w.output_bias);
}

Tensor transformer_layer(const TransformerLayer& layer, const Tensor& query,
                         const Tensor& context, std::size_t heads, ForwardContext& ctx) {
  Rng fallback(0);
  Rng& rng = dropout_rng(ctx, fallback);
  Tensor attended = multi_head_attention(query, context, context, heads, layer.attention);
  attended = ops::dropout(attended, ctx.dropout, rng, ctx.training);
  Tensor h = ops::layer_norm(ops::add(query, attended), layer.norm1_gamma, layer.norm1_beta);
  Tensor f = linear(ops::gelu(linear(h, layer.ffn_in_weight, layer.ffn_in_bias)),
                    layer.ffn_out_weight, layer.ffn_out_bias);
  f = ops::dropout(f, ctx.dropout, rng, ctx.training);
  return ops::layer_norm(ops::add(h, f), layer.norm2_gamma, layer.norm2_beta);
}

Tensor transformer_pool_sequence(const PoolingHead& head, const Tensor& query,
                                 const Tensor& context, ForwardContext& ctx) {
  if (query.rank() != 2 || query.rows() == 0) throw UsageError("transformer_pool: empty query");
  if (head.layers.empty()) throw ConfigError("transformer_pool: head has no layers");
  Tensor x = transformer_layer(head.layers[0], query, context, head.heads, ctx);
  for (std::size_t i = 1; i < head.layers.size(); ++i)
    x = transformer_layer(head.layers[i], x, x, head.heads, ctx);
  return x;
}

Tensor transformer_pool(const PoolingHead& head, const Tensor& query, const Tensor& context,
                        ForwardContext& ctx) {
  return ops::row(transformer_pool_sequence(head, query, context, ctx), 0);
}

Tensor embed_tokens(const TokenSequence& x, const ModelParameters& params, ForwardContext& ctx) {
  const ModelConfig& c = params.config;
  const TextBackbone& b = params.backbone;
  const std::size_t n = x.tokens.size();
  if (n == 0) throw CorpusError("empty token sequence");
  if (n > c.max_text_len) {
    throw CorpusError("token sequence of length " + std::to_string(n) + " exceeds max_text_len " +
                      std::to_string(c.max_text_len));
  }
  for (std::int64_t id : x.tokens) {
    if (id < 0 || static_cast<std::size_t>(id) >= c.vocab_size) {
      throw CorpusError("token id " + std::to_string(id) + " outside vocabulary of " +
                        std::to_string(c.vocab_size));
    }
  }
  Rng fallback(0);
  Rng& rng = dropout_rng(ctx, fallback);

  std::vector<std::int64_t> positions(n);
  for (std::size_t i = 0; i < n; ++i) positions[i] = static_cast<std::int64_t>(i);
  Tensor h = ops::add(ops::embedding(b.token_embedding, x.tokens),
                      ops::embedding(b.position_embedding, positions));
  h = ops::layer_norm(h, b.norm_gamma, b.norm_beta);
  h = ops::dropout(h, ctx.dropout, rng, ctx.training);
  for (std::size_t i = 0; i < b.output_layer; ++i)
    h = transformer_layer(b.layers[i], h, h, b.heads, ctx);
  if (b.projection_weight.defined()) h = linear(h, b.projection_weight, b.projection_bias);
  return h;
}

Tensor project_video(const VideoFeatureSequence& v, const VideoProjector& projector) {
  const std::size_t expected = projector.weight.rows();
  if (v.width != expected) {
    throw CorpusError("video feature width " + std::to_string(v.width) +
                      " does not match configured " + std::to_string(expected));
  }
  if (v.length == 0) throw CorpusError("video feature sequence has no rows");
  return linear(v.as_tensor(), projector.weight, projector.bias);
}

namespace {

void check_video_length(const VideoFeatureSequence& v, const ModelConfig& c) {
  if (v.length > c.max_video_len) {
    throw CorpusError("video of " + std::to_string(v.length) + " rows exceeds max_video_len " +
                      std::to_string(c.max_video_len));
  }
}

}  // namespace

Tensor encode_text(const TokenSequence& x, const ModelParameters& params, ForwardContext& ctx) {
  Tensor e = embed_tokens(x, params, ctx);
  return transformer_pool(params.text_head, e, e, ctx);
}

Tensor encode_video(const VideoFeatureSequence& v, const ModelParameters& params,
                    ForwardContext& ctx) {
  check_video_length(v, params.config);
  Tensor e = project_video(v, params.video_projector);
  return transformer_pool(params.video_head, e, e, ctx);
}

Tensor encode_text_conditioned(const TokenSequence& x, const VideoFeatureSequence& v,
                               const ModelParameters& params, ForwardContext& ctx) {
  Tensor e = embed_tokens(x, params, ctx);
  if (v.length == 0) return transformer_pool(params.text_head, e, e, ctx);
  check_video_length(v, params.config);
  Tensor context = ops::concat_rows(e, project_video(v, params.video_projector));
  return transformer_pool(params.text_head, e, context, ctx);
}

}  // namespace mmp
