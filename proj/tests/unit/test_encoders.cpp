#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "mmp/errors.hpp"
#include "mmp/ops.hpp"
#include "test_support.hpp"

namespace mmp {
namespace {

using testing::random_tensor;
using testing::scrambled_model;
using testing::tiny_model_config;

VideoFeatureSequence random_video(std::size_t length, std::size_t width, Rng& rng) {
  VideoFeatureSequence v;
  v.length = length;
  v.width = width;
  for (std::size_t i = 0; i < length * width; ++i) v.values.push_back(rng.normal());
  return v;
}

void expect_close(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], tol) << i;
}

TEST(Attention, SingleHeadMatchesScalarOracle) {
  Rng rng(1);
  const std::size_t d = 4;
  AttentionWeights w;
  w.query_weight = random_tensor({d, d}, rng);
  w.key_weight = random_tensor({d, d}, rng);
  w.value_weight = random_tensor({d, d}, rng);
  w.output_weight = random_tensor({d, d}, rng);
  w.query_bias = random_tensor({d}, rng);
  w.key_bias = random_tensor({d}, rng);
  w.value_bias = random_tensor({d}, rng);
  w.output_bias = random_tensor({d}, rng);
  Tensor q = random_tensor({2, d}, rng), ctx = random_tensor({3, d}, rng);

  auto lin = [&](const Tensor& x, std::size_t r, const Tensor& W, const Tensor& b) {
    std::vector<double> out(d);
    for (std::size_t j = 0; j < d; ++j) {
      out[j] = b.at(j);
      for (std::size_t k = 0; k < d; ++k) out[j] += x.at(r, k) * W.at(k, j);
    }
    return out;
  };
  Tensor got = multi_head_attention(q, ctx, ctx, 1, w);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto qi = lin(q, i, w.query_weight, w.query_bias);
    std::vector<double> logits(3);
    double mx = -1e300;
    for (std::size_t j = 0; j < 3; ++j) {
      const auto kj = lin(ctx, j, w.key_weight, w.key_bias);
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += qi[k] * kj[k];
      logits[j] = s / std::sqrt(static_cast<double>(d));
      mx = std::max(mx, logits[j]);
    }
    double z = 0.0;
    for (double& l : logits) z += (l = std::exp(l - mx));
    std::vector<double> mixed(d, 0.0);
    for (std::size_t j = 0; j < 3; ++j) {
      const auto vj = lin(ctx, j, w.value_weight, w.value_bias);
      for (std::size_t k = 0; k < d; ++k) mixed[k] += logits[j] / z * vj[k];
    }
    Tensor m = Tensor::from({1, d}, mixed);
    const auto out = lin(m, 0, w.output_weight, w.output_bias);
    for (std::size_t k = 0; k < d; ++k) EXPECT_NEAR(got.at(i, k), out[k], 1e-12);
  }
}

TEST(Attention, HeadsSplitColumns) {
  Rng rng(2);
  ModelParameters p = scrambled_model(tiny_model_config(12, 4), rng);
  const AttentionWeights& w = p.text_head.layers[0].attention;
  Tensor q = random_tensor({2, 8}, rng), ctx = random_tensor({3, 8}, rng);
  EXPECT_EQ(multi_head_attention(q, ctx, ctx, 2, w).shape(), (Shape{2, 8}));
  EXPECT_THROW(multi_head_attention(q, ctx, ctx, 3, w), ConfigError);
  EXPECT_THROW(multi_head_attention(q, ctx, random_tensor({2, 8}, rng), 2, w), DimensionError);
}

TEST(TransformerPool, IgnoresContextOrderBeyondTheFirstRow) {
  Rng rng(3);
  ModelParameters p = scrambled_model(tiny_model_config(12, 4), rng);
  VideoFeatureSequence v = random_video(5, 4, rng);
  VideoFeatureSequence swapped = v;
  for (std::size_t c = 0; c < 4; ++c) std::swap(swapped.values[1 * 4 + c], swapped.values[4 * 4 + c]);
  ForwardContext fc = ForwardContext::inference();
  expect_close(encode_video(v, p, fc), encode_video(swapped, p, fc), 1e-12);

  VideoFeatureSequence first_swapped = v;
  for (std::size_t c = 0; c < 4; ++c) std::swap(first_swapped.values[c], first_swapped.values[8 + c]);
  Tensor a = encode_video(v, p, fc), b = encode_video(first_swapped, p, fc);
  double diff = 0.0;
  for (std::size_t i = 0; i < 8; ++i) diff += std::abs(a.at(i) - b.at(i));
  EXPECT_GT(diff, 1e-6);
}

TEST(Encoders, OutputShapesAndDeterminism) {
  Rng rng(4);
  ModelConfig c = tiny_model_config(12, 4);
  ModelParameters p = scrambled_model(c, rng);
  TokenSequence x{"en", {2, 5, 7}};
  VideoFeatureSequence v = random_video(3, 4, rng);
  ForwardContext fc = ForwardContext::inference();
  EXPECT_EQ(embed_tokens(x, p, fc).shape(), (Shape{3, 8}));
  EXPECT_EQ(project_video(v, p.video_projector).shape(), (Shape{3, 8}));
  EXPECT_EQ(encode_text(x, p, fc).shape(), (Shape{8}));
  EXPECT_EQ(encode_video(v, p, fc).shape(), (Shape{8}));
  EXPECT_EQ(encode_text_conditioned(x, v, p, fc).shape(), (Shape{8}));
  expect_close(encode_text(x, p, fc), encode_text(x, p, fc), 0.0);
}

TEST(Encoders, ProjectedBackboneReachesSharedWidth) {
  Rng rng(5);
  ModelConfig c = tiny_model_config(12, 4);
  c.backbone_dim = 12;
  c.backbone_heads = 3;
  c.output_layer = 1;
  ModelParameters p = ModelParameters::initialize(c, rng);
  ForwardContext fc = ForwardContext::inference();
  EXPECT_EQ(embed_tokens({"en", {3, 4}}, p, fc).shape(), (Shape{2, 8}));
  EXPECT_TRUE(p.backbone.projection_weight.defined());
}

TEST(Encoders, OutputLayerSelectsBackboneDepth) {
  Rng rng(6);
  ModelParameters p = scrambled_model(tiny_model_config(12, 4), rng);
  TokenSequence x{"en", {2, 3, 4}};
  ForwardContext fc = ForwardContext::inference();
  Tensor full = embed_tokens(x, p, fc);
  p.backbone.output_layer = 1;
  Tensor shallow = embed_tokens(x, p, fc);
  Tensor manual = transformer_layer(p.backbone.layers[1], shallow, shallow, 2, fc);
  expect_close(manual, full, 1e-12);
}

TEST(Encoders, ConditionedTextUsesTheVideo) {
  Rng rng(7);
  ModelParameters p = scrambled_model(tiny_model_config(12, 4), rng);
  TokenSequence x{"de", {6, 7, 8}};
  ForwardContext fc = ForwardContext::inference();
  VideoFeatureSequence empty;
  empty.width = 4;
  expect_close(encode_text_conditioned(x, empty, p, fc), encode_text(x, p, fc), 1e-15);
  Tensor a = encode_text_conditioned(x, random_video(3, 4, rng), p, fc);
  Tensor b = encode_text_conditioned(x, random_video(3, 4, rng), p, fc);
  double diff = 0.0;
  for (std::size_t i = 0; i < 8; ++i) diff += std::abs(a.at(i) - b.at(i));
  EXPECT_GT(diff, 1e-6);
}

TEST(Encoders, RejectBadInputs) {
  Rng rng(8);
  ModelParameters p = ModelParameters::initialize(tiny_model_config(12, 4), rng);
  ForwardContext fc = ForwardContext::inference();
  EXPECT_THROW(encode_text({"en", {}}, p, fc), CorpusError);
  EXPECT_THROW(encode_text({"en", {12}}, p, fc), CorpusError);
  EXPECT_THROW(encode_text({"en", std::vector<std::int64_t>(9, 2)}, p, fc), CorpusError);
  EXPECT_THROW(encode_video(random_video(3, 5, rng), p, fc), CorpusError);
  EXPECT_THROW(encode_video(random_video(9, 4, rng), p, fc), CorpusError);
  ForwardContext training{nullptr, true, 0.3};
  EXPECT_THROW(encode_text({"en", {2}}, p, training), UsageError);
}

TEST(Encoders, DropoutOnlyWhileTraining) {
  Rng rng(9);
  ModelParameters p = scrambled_model(tiny_model_config(12, 4), rng);
  TokenSequence x{"en", {2, 3, 4, 5}};
  Rng r1(1), r2(1), r3(2);
  ForwardContext off{&r1, false, 0.5};
  ForwardContext inf = ForwardContext::inference();
  expect_close(encode_text(x, p, off), encode_text(x, p, inf), 0.0);
  ForwardContext on_a{&r2, true, 0.5}, on_b{&r3, true, 0.5};
  Tensor a = encode_text(x, p, on_a), b = encode_text(x, p, on_b);
  double diff = 0.0;
  for (std::size_t i = 0; i < 8; ++i) diff += std::abs(a.at(i) - b.at(i));
  EXPECT_GT(diff, 1e-6);
}

TEST(ModelParameters, InitializationStatistics) {
  Rng rng(10);
  ModelConfig c = tiny_model_config(200, 16);
  c.dim = 32;
  c.backbone_dim = 32;
  ModelParameters p = ModelParameters::initialize(c, rng);
  double s = 0.0, s2 = 0.0;
  std::size_t n = 0;
  for (const NamedTensor& nt : p.named_parameters()) {
    if (nt.name.ends_with("gamma")) {
      for (double v : nt.tensor.data()) EXPECT_EQ(v, 1.0);
    } else if (nt.name.ends_with("beta") || nt.name.ends_with("bias")) {
      for (double v : nt.tensor.data()) EXPECT_EQ(v, 0.0);
    } else {
      for (double v : nt.tensor.data()) {
        s += v;
        s2 += v * v;
        ++n;
      }
    }
    EXPECT_TRUE(nt.tensor.requires_grad()) << nt.name;
  }
  EXPECT_NEAR(s / n, 0.0, 4.0 * 0.02 / std::sqrt(n));
  EXPECT_NEAR(std::sqrt(s2 / n), 0.02, 0.0005);
}

TEST(ModelParameters, NamesAreUniqueAndHeadsDoNotShareStorage) {
  Rng rng(11);
  ModelParameters p = ModelParameters::initialize(tiny_model_config(12, 4), rng);
  std::set<std::string> names;
  const auto params = p.named_parameters();
  for (const auto& nt : params) EXPECT_TRUE(names.insert(nt.name).second) << nt.name;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t j = i + 1; j < params.size(); ++j)
      EXPECT_FALSE(params[i].tensor.same_storage(params[j].tensor));
  }
}

TEST(ModelParameters, CloneIsDeepAndEqual) {
  Rng rng(12);
  ModelParameters p = ModelParameters::initialize(tiny_model_config(12, 4), rng);
  ModelParameters c = p.clone();
  auto a = p.named_parameters(), b = c.named_parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].tensor.values(), b[i].tensor.values());
    EXPECT_FALSE(a[i].tensor.same_storage(b[i].tensor));
  }
  b[0].tensor.mutable_data()[0] += 1.0;
  EXPECT_NE(a[0].tensor.at(0), b[0].tensor.at(0));
}

TEST(ModelParameters, FreezeBelowExcludesEmbeddingsAndLowerLayers) {
  Rng rng(13);
  ModelParameters p = scrambled_model(tiny_model_config(12, 4), rng);
  const std::size_t all = p.trainable_parameters().size();
  p.set_freeze_below(1);
  EXPECT_EQ(p.config.freeze_below, 1u);
  for (const NamedTensor& nt : p.named_parameters()) {
    const bool expect_frozen = nt.name.starts_with("backbone.token") ||
                               nt.name.starts_with("backbone.position") ||
                               nt.name.starts_with("backbone.norm.") ||
                               nt.name.starts_with("backbone.layer0.");
    EXPECT_EQ(nt.frozen, expect_frozen) << nt.name;
    EXPECT_EQ(nt.tensor.requires_grad(), !expect_frozen) << nt.name;
  }
  EXPECT_EQ(p.trainable_parameters().size(), all - 4 - 16);

  ForwardContext fc = ForwardContext::inference();
  ops::sum(encode_text({"en", {2, 3}}, p, fc)).backward();
  for (const NamedTensor& nt : p.named_parameters()) {
    if (nt.frozen) {
      EXPECT_FALSE(nt.tensor.has_grad()) << nt.name;
    }
  }
  EXPECT_TRUE(p.backbone.layers[1].ffn_in_weight.has_grad());

  p.set_freeze_below(0);
  EXPECT_EQ(p.trainable_parameters().size(), all);
  EXPECT_THROW(p.set_freeze_below(3), ConfigError);
}

TEST(ModelConfig, ValidateRejectsBadArchitectures) {
  auto bad = [](auto mutate) {
    ModelConfig c = tiny_model_config(12, 4);
    mutate(c);
    EXPECT_THROW(c.validate(), ConfigError);
  };
  bad([](ModelConfig& c) { c.vocab_size = 2; });
  bad([](ModelConfig& c) { c.feature_dim = 0; });
  bad([](ModelConfig& c) { c.output_layer = 0; });
  bad([](ModelConfig& c) { c.output_layer = 3; });
  bad([](ModelConfig& c) { c.freeze_below = 3; });
  bad([](ModelConfig& c) { c.pool_heads = 3; });
  bad([](ModelConfig& c) { c.backbone_heads = 3; });
  bad([](ModelConfig& c) { c.pool_layers = 0; });
  bad([](ModelConfig& c) { c.max_text_len = 0; });
  EXPECT_NO_THROW(tiny_model_config(12, 4).validate());
}

TEST(VideoFeatureSequence, RowsClampToLength) {
  Rng rng(14);
  VideoFeatureSequence v = random_video(4, 2, rng);
  VideoFeatureSequence r = v.rows(2, 5);
  EXPECT_EQ(r.length, 2u);
  EXPECT_EQ(r.at(0, 1), v.at(2, 1));
  EXPECT_EQ(v.rows(7, 2).length, 0u);
}

}  // namespace
}  // namespace mmp
