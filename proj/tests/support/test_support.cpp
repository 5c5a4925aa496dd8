#include "test_support.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unistd.h>

#include "mmp/objectives.hpp"
#include "mmp/ops.hpp"
#include "mmp/trainer.hpp"

namespace mmp::testing {

namespace fs = std::filesystem;

Tensor random_tensor(const Shape& shape, Rng& rng, double scale, bool requires_grad) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = scale * rng.normal();
  return Tensor::from(shape, std::move(v), requires_grad);
}

std::function<Tensor(const Tensor&)> random_projection(const Shape& shape, Rng& rng) {
  Tensor w = random_tensor(shape, rng, 1.0, false);
  return [w](const Tensor& x) { return ops::sum(ops::mul(x, w)); };
}

ModelConfig tiny_model_config(std::size_t vocab_size, std::size_t feature_dim) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  c.feature_dim = feature_dim;
  c.dim = 8;
  c.backbone_dim = 8;
  c.backbone_layers = 2;
  c.backbone_heads = 2;
  c.output_layer = 2;
  c.pool_layers = 2;
  c.pool_heads = 2;
  c.ffn_dim = 16;
  c.max_text_len = 8;
  c.max_video_len = 8;
  return c;
}

ModelParameters scrambled_model(const ModelConfig& config, Rng& rng, double scale) {
  ModelParameters p = ModelParameters::initialize(config, rng);
  for (NamedTensor& nt : p.named_parameters()) {
    auto d = nt.tensor.mutable_data();
    const bool is_gamma = nt.name.ends_with("gamma");
    for (double& x : d) x = (is_gamma ? 1.0 : 0.0) + scale * rng.normal();
  }
  return p;
}

namespace {

std::vector<Tensor> parameter_list(const ModelParameters& p) {
  std::vector<Tensor> out;
  for (const NamedTensor& nt : p.named_parameters()) out.push_back(nt.tensor);
  return out;
}

GradProblem unary_case(Rng& rng, Tensor (*op)(const Tensor&), double scale = 1.0,
                       double offset = 0.0) {
  Tensor x = random_tensor({3, 4}, rng, scale);
  for (double& v : x.mutable_data()) v += offset;
  auto proj = random_projection({3, 4}, rng);
  return {{x}, [x, op, proj] { return proj(op(x)); }};
}

GradProblem binary_case(Rng& rng, Tensor (*op)(const Tensor&, const Tensor&)) {
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({3, 4}, rng);
  auto proj = random_projection({3, 4}, rng);
  return {{a, b}, [a, b, op, proj] { return proj(op(a, b)); }};
}

Tensor random_similarity(std::size_t b, Rng& rng) {
  std::vector<double> v(b * b);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from({b, b}, std::move(v), true);
}

GradProblem encodings_case(Rng& rng, bool pivoted, bool intra, bool cross, Objective objective) {
  const std::size_t b = 3, d = 6;
  BatchEncodings e;
  std::vector<Tensor> inputs;
  auto make = [&](Tensor& slot) {
    slot = random_tensor({b, d}, rng);
    inputs.push_back(slot);
  };
  make(e.text);
  make(e.video);
  if (intra) {
    make(e.text_masked);
    make(e.video_masked);
  }
  if (pivoted) {
    make(e.pivot);
    if (intra) make(e.pivot_masked);
  }
  if (cross) {
    make(e.text_conditioned);
    make(e.pivot_conditioned);
  }
  LossOptions o;
  o.objective = objective;
  o.intra = intra;
  o.cross = cross;
  return {inputs, [e, o] { return total_loss(e, o).value; }};
}

struct TinyModelCase {
  ModelParameters params;
  std::vector<std::int64_t> tokens;
  VideoFeatureSequence video;
};

TinyModelCase tiny_model(Rng& rng, std::size_t backbone_dim = 8, std::size_t output_layer = 2) {
  ModelConfig c = tiny_model_config(12, 4);
  c.backbone_dim = backbone_dim;
  c.output_layer = output_layer;
  TinyModelCase t{scrambled_model(c, rng), {}, {}};
  const std::size_t n = 2 + rng.uniform_int(4);
  for (std::size_t i = 0; i < n; ++i) t.tokens.push_back(2 + static_cast<std::int64_t>(rng.uniform_int(10)));
  t.video.length = 2 + rng.uniform_int(4);
  t.video.width = 4;
  for (std::size_t i = 0; i < t.video.length * 4; ++i) t.video.values.push_back(rng.normal());
  return t;
}

std::vector<GradCase> build_cases() {
  std::vector<GradCase> c;
  auto add = [&c](std::string name, std::function<GradProblem(Rng&)> make,
                  std::size_t max_coords = 24) {
    c.push_back({std::move(name), std::move(make), max_coords});
  };

  add("matmul", [](Rng& rng) {
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 5}, rng);
    auto proj = random_projection({3, 5}, rng);
    return GradProblem{{a, b}, [=] { return proj(ops::matmul(a, b)); }};
  });
  add("matmul_transposed", [](Rng& rng) {
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({5, 4}, rng);
    auto proj = random_projection({3, 5}, rng);
    return GradProblem{{a, b}, [=] { return proj(ops::matmul_transposed(a, b)); }};
  });
  add("transpose", [](Rng& rng) {
    Tensor a = random_tensor({3, 4}, rng);
    auto proj = random_projection({4, 3}, rng);
    return GradProblem{{a}, [=] { return proj(ops::transpose(a)); }};
  });
  add("add", [](Rng& rng) { return binary_case(rng, ops::add); });
  add("sub", [](Rng& rng) { return binary_case(rng, ops::sub); });
  add("mul", [](Rng& rng) { return binary_case(rng, ops::mul); });
  add("scale", [](Rng& rng) {
    Tensor a = random_tensor({3, 4}, rng);
    auto proj = random_projection({3, 4}, rng);
    return GradProblem{{a}, [=] { return proj(ops::scale(a, -0.7)); }};
  });
  add("add_bias", [](Rng& rng) {
    Tensor x = random_tensor({3, 4}, rng), b = random_tensor({4}, rng);
    auto proj = random_projection({3, 4}, rng);
    return GradProblem{{x, b}, [=] { return proj(ops::add_bias(x, b)); }};
  });
  add("gelu", [](Rng& rng) { return unary_case(rng, ops::gelu, 2.0); });
  add("relu", [](Rng& rng) { return unary_case(rng, ops::relu, 2.0); });
  add("exp", [](Rng& rng) { return unary_case(rng, ops::exp, 0.5); });
  add("log", [](Rng& rng) { return unary_case(rng, ops::log, 0.2, 1.5); });
  add("sum", [](Rng& rng) {
    Tensor x = random_tensor({3, 4}, rng);
    return GradProblem{{x}, [=] { return ops::sum(ops::mul(x, x)); }};
  });
  add("mean", [](Rng& rng) {
    Tensor x = random_tensor({3, 4}, rng);
    return GradProblem{{x}, [=] { return ops::mean(ops::mul(x, x)); }};
  });
  add("softmax", [](Rng& rng) {
    Tensor x = random_tensor({3, 5}, rng, 2.0);
    auto proj = random_projection({3, 5}, rng);
    return GradProblem{{x}, [=] { return proj(ops::softmax(x)); }};
  });
  add("softmax_temperature", [](Rng& rng) {
    Tensor x = random_tensor({3, 5}, rng);
    auto proj = random_projection({3, 5}, rng);
    return GradProblem{{x}, [=] { return proj(ops::softmax(x, 0.5)); }};
  });
  add("layer_norm", [](Rng& rng) {
    Tensor x = random_tensor({4, 6}, rng, 2.0);
    Tensor g = random_tensor({6}, rng), b = random_tensor({6}, rng);
    auto proj = random_projection({4, 6}, rng);
    return GradProblem{{x, g, b}, [=] { return proj(ops::layer_norm(x, g, b)); }};
  });
  add("dropout", [](Rng& rng) {
    Tensor x = random_tensor({4, 5}, rng);
    auto proj = random_projection({4, 5}, rng);
    const std::uint64_t seed = rng.next_u64();
    return GradProblem{{x}, [=] {
                         Rng r(seed);
                         return proj(ops::dropout(x, 0.3, r, true));
                       }};
  });
  add("embedding", [](Rng& rng) {
    Tensor table = random_tensor({6, 4}, rng);
    auto proj = random_projection({4, 4}, rng);
    const std::vector<std::int64_t> ids = {1, 3, 1, 5};
    return GradProblem{{table}, [=] { return proj(ops::embedding(table, ids)); }};
  });
  add("concat_rows", [](Rng& rng) {
    Tensor a = random_tensor({2, 3}, rng), b = random_tensor({3, 3}, rng);
    auto proj = random_projection({5, 3}, rng);
    return GradProblem{{a, b}, [=] { return proj(ops::concat_rows(a, b)); }};
  });
  add("concat_cols", [](Rng& rng) {
    Tensor a = random_tensor({3, 2}, rng), b = random_tensor({3, 3}, rng);
    auto proj = random_projection({3, 5}, rng);
    return GradProblem{{a, b}, [=] { return proj(ops::concat_cols({a, b})); }};
  });
  add("slice_rows", [](Rng& rng) {
    Tensor x = random_tensor({5, 3}, rng);
    auto proj = random_projection({3, 3}, rng);
    return GradProblem{{x}, [=] { return proj(ops::slice_rows(x, 1, 3)); }};
  });
  add("slice_cols", [](Rng& rng) {
    Tensor x = random_tensor({3, 5}, rng);
    auto proj = random_projection({3, 3}, rng);
    return GradProblem{{x}, [=] { return proj(ops::slice_cols(x, 1, 3)); }};
  });
  add("row", [](Rng& rng) {
    Tensor x = random_tensor({4, 3}, rng);
    auto proj = random_projection({3}, rng);
    return GradProblem{{x}, [=] { return proj(ops::row(x, 2)); }};
  });
  add("stack_rows", [](Rng& rng) {
    Tensor a = random_tensor({4}, rng), b = random_tensor({4}, rng), d = random_tensor({4}, rng);
    auto proj = random_projection({3, 4}, rng);
    return GradProblem{{a, b, d}, [=] { return proj(ops::stack_rows({a, b, d})); }};
  });
  add("reshape", [](Rng& rng) {
    Tensor x = random_tensor({3, 4}, rng);
    auto proj = random_projection({2, 6}, rng);
    return GradProblem{{x}, [=] { return proj(x.reshape({2, 6})); }};
  });
  add("l2_normalize_rows", [](Rng& rng) {
    Tensor x = random_tensor({3, 4}, rng);
    auto proj = random_projection({3, 4}, rng);
    return GradProblem{{x}, [=] { return proj(ops::l2_normalize_rows(x)); }};
  });
  add("multi_head_attention", [](Rng& rng) {
    ModelParameters p = scrambled_model(tiny_model_config(12, 4), rng);
    const AttentionWeights w = p.text_head.layers[0].attention;
    Tensor q = random_tensor({2, 8}, rng), ctx = random_tensor({4, 8}, rng);
    auto proj = random_projection({2, 8}, rng);
    std::vector<Tensor> in = {q,            ctx,          w.query_weight, w.query_bias,
                              w.key_weight, w.key_bias,   w.value_weight, w.value_bias,
                              w.output_weight, w.output_bias};
    return GradProblem{in, [=] { return proj(multi_head_attention(q, ctx, ctx, 2, w)); }};
  });
  add("transformer_layer", [](Rng& rng) {
    ModelParameters p = scrambled_model(tiny_model_config(12, 4), rng);
    const TransformerLayer layer = p.video_head.layers[1];
    Tensor q = random_tensor({2, 8}, rng), ctx = random_tensor({3, 8}, rng);
    auto proj = random_projection({2, 8}, rng);
    std::vector<Tensor> in = parameter_list(p);
    in.push_back(q);
    in.push_back(ctx);
    return GradProblem{in, [=] {
                         ForwardContext fc = ForwardContext::inference();
                         return proj(transformer_layer(layer, q, ctx, 2, fc));
                       }};
  }, 6);
  add("transformer_layer_dropout", [](Rng& rng) {
    ModelParameters p = scrambled_model(tiny_model_config(12, 4), rng);
    const TransformerLayer layer = p.text_head.layers[0];
    Tensor x = random_tensor({3, 8}, rng);
    auto proj = random_projection({3, 8}, rng);
    const std::uint64_t seed = rng.next_u64();
    std::vector<Tensor> in = parameter_list(p);
    in.push_back(x);
    return GradProblem{in, [=] {
                         Rng r(seed);
                         ForwardContext fc{&r, true, 0.2};
                         return proj(transformer_layer(layer, x, x, 2, fc));
                       }};
  }, 6);
  add("transformer_pool", [](Rng& rng) {
    ModelParameters p = scrambled_model(tiny_model_config(12, 4), rng);
    const PoolingHead head = p.text_head;
    Tensor x = random_tensor({4, 8}, rng);
    auto proj = random_projection({8}, rng);
    std::vector<Tensor> in = parameter_list(p);
    in.push_back(x);
    return GradProblem{in, [=] {
                         ForwardContext fc = ForwardContext::inference();
                         return proj(transformer_pool(head, x, x, fc));
                       }};
  }, 6);
  add("encode_text", [](Rng& rng) {
    TinyModelCase t = tiny_model(rng);
    auto proj = random_projection({8}, rng);
    return GradProblem{parameter_list(t.params), [=] {
                         ForwardContext fc = ForwardContext::inference();
                         return proj(encode_text({"en", t.tokens}, t.params, fc));
                       }};
  }, 6);
  add("encode_text_projected_backbone", [](Rng& rng) {
    TinyModelCase t = tiny_model(rng, 12, 1);
    auto proj = random_projection({8}, rng);
    return GradProblem{parameter_list(t.params), [=] {
                         ForwardContext fc = ForwardContext::inference();
                         return proj(encode_text({"en", t.tokens}, t.params, fc));
                       }};
  }, 6);
  add("encode_video", [](Rng& rng) {
    TinyModelCase t = tiny_model(rng);
    auto proj = random_projection({8}, rng);
    return GradProblem{parameter_list(t.params), [=] {
                         ForwardContext fc = ForwardContext::inference();
                         return proj(encode_video(t.video, t.params, fc));
                       }};
  }, 6);
  add("encode_text_conditioned", [](Rng& rng) {
    TinyModelCase t = tiny_model(rng);
    auto proj = random_projection({8}, rng);
    return GradProblem{parameter_list(t.params), [=] {
                         ForwardContext fc = ForwardContext::inference();
                         return proj(encode_text_conditioned({"en", t.tokens}, t.video, t.params, fc));
                       }};
  }, 6);
  add("cosine_similarity", [](Rng& rng) {
    Tensor a = random_tensor({6}, rng), b = random_tensor({6}, rng);
    return GradProblem{{a, b}, [=] { return cosine_similarity(a, b); }};
  });
  add("similarity_matrix", [](Rng& rng) {
    Tensor a = random_tensor({3, 5}, rng), b = random_tensor({3, 5}, rng);
    auto proj = random_projection({3, 3}, rng);
    return GradProblem{{a, b}, [=] { return proj(similarity_matrix(a, b)); }};
  });
  add("nce_batch_loss", [](Rng& rng) {
    Tensor s = random_similarity(1 + rng.uniform_int(4), rng);
    return GradProblem{{s}, [=] { return nce_batch_loss(s, 0.1); }};
  });
  add("nce_batch_loss_tau1", [](Rng& rng) {
    Tensor s = random_similarity(1 + rng.uniform_int(4), rng);
    return GradProblem{{s}, [=] { return nce_batch_loss(s, 1.0); }};
  });
  add("triplet_batch_loss", [](Rng& rng) {
    Tensor s = random_similarity(2 + rng.uniform_int(3), rng);
    return GradProblem{{s}, [=] { return triplet_batch_loss(s, 0.2); }};
  });
  add("intra_modal_loss", [](Rng& rng) {
    Tensor a = random_tensor({4, 6}, rng), b = random_tensor({4, 6}, rng);
    return GradProblem{{a, b}, [=] { return intra_modal_loss(a, b, 0.1); }};
  });
  add("cross_lingual_loss", [](Rng& rng) {
    Tensor a = random_tensor({4, 6}, rng), b = random_tensor({4, 6}, rng);
    return GradProblem{{a, b}, [=] { return cross_lingual_loss(a, b, 0.1); }};
  });
  add("total_loss_inter", [](Rng& rng) {
    return encodings_case(rng, false, false, false, Objective::kNce);
  });
  add("total_loss_inter_intra", [](Rng& rng) {
    return encodings_case(rng, false, true, false, Objective::kNce);
  });
  add("total_loss_pivoted_inter_intra", [](Rng& rng) {
    return encodings_case(rng, true, true, false, Objective::kNce);
  });
  add("total_loss_pivoted_inter_intra_cross", [](Rng& rng) {
    return encodings_case(rng, true, true, true, Objective::kNce);
  });
  add("total_loss_triplet_intra", [](Rng& rng) {
    return encodings_case(rng, false, true, false, Objective::kTriplet);
  });
  add("model_batch_loss_pivoted_cross", [](Rng& rng) {
    TinyModelCase t = tiny_model(rng);
    std::vector<TrainingItem> batch;
    for (int i = 0; i < 3; ++i) {
      TinyModelCase item = tiny_model(rng);
      TrainingItem ti;
      ti.video_id = "v" + std::to_string(i);
      ti.text = {"en", item.tokens};
      ti.video = item.video;
      std::vector<std::int64_t> other = item.tokens;
      std::reverse(other.begin(), other.end());
      ti.pivot = TokenSequence{"de", other};
      batch.push_back(std::move(ti));
    }
    TrainConfig config;
    config.mode = TrainMode::kFinetune;
    config.intra = true;
    config.cross = true;
    config.dropout = 0.1;
    const std::uint64_t seed = rng.next_u64();
    return GradProblem{parameter_list(t.params), [=] {
                         StepStreams streams = StepStreams::for_step(seed, 0);
                         return total_loss(encode_batch(t.params, batch, config, streams, true),
                                           config.loss_options())
                             .value;
                       }};
  }, 2);
  return c;
}

}  // namespace

const std::vector<GradCase>& gradient_cases() {
  static const std::vector<GradCase> cases = build_cases();
  return cases;
}

GradResult check_gradients(const GradProblem& problem, Rng& coord_rng, std::size_t max_coords,
                           double h) {
  std::vector<Tensor> inputs = problem.inputs;
  for (Tensor& t : inputs) t.zero_grad();
  problem.fn().backward();

  GradResult result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor& x = inputs[i];
    if (!x.requires_grad()) continue;
    const std::vector<double> analytic_all =
        x.has_grad() ? std::vector<double>(x.grad().begin(), x.grad().end())
                     : std::vector<double>(x.numel(), 0.0);
    std::vector<std::size_t> coords;
    if (x.numel() <= max_coords) {
      for (std::size_t k = 0; k < x.numel(); ++k) coords.push_back(k);
    } else {
      coords = coord_rng.sample_without_replacement(x.numel(), max_coords);
    }
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t k : coords) {
      auto data = x.mutable_data();
      const double saved = data[k];
      double plus, minus;
      {
        NoGradGuard guard;
        data[k] = saved + h;
        plus = problem.fn().item();
        data[k] = saved - h;
        minus = problem.fn().item();
        data[k] = saved;
      }
      const double numeric = (plus - minus) / (2.0 * h);
      const double analytic = analytic_all[k];
      diff2 += (analytic - numeric) * (analytic - numeric);
      a2 += analytic * analytic;
      n2 += numeric * numeric;
    }
    result.coordinates += coords.size();
    const double err = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-3});
    if (result.worst_input.empty() || err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_input = "input " + std::to_string(i);
    }
  }
  return result;
}

TempDir::TempDir(const std::string& tag) {
  static int counter = 0;
  path_ = fs::temp_directory_path() /
          ("mmp-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

SyntheticSpec small_spec(std::uint64_t seed) {
  SyntheticSpec s;
  s.languages = 2;
  s.concepts = 12;
  s.pretrain_videos = 24;
  s.train_videos = 16;
  s.val_videos = 8;
  s.test_videos = 16;
  s.feature_dim = 8;
  s.seed = seed;
  return s;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream(path, std::ios::binary | std::ios::trunc) << text;
}

std::string tree_digest(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file()) files.push_back(fs::relative(entry.path(), root));
  }
  std::sort(files.begin(), files.end());
  std::string out;
  for (const fs::path& f : files) out += "== " + f.string() + "\n" + read_file(root / f);
  return out;
}

double nce_oracle(const std::vector<double>& s, std::size_t b, double tau) {
  long double total = 0.0L;
  for (std::size_t i = 0; i < b; ++i) {
    const long double pos = std::exp(static_cast<long double>(s[i * b + i]) / tau);
    long double denom = pos;
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i) continue;
      denom += std::exp(static_cast<long double>(s[i * b + j]) / tau);
      denom += std::exp(static_cast<long double>(s[j * b + i]) / tau);
    }
    total += -std::log(pos / denom);
  }
  return static_cast<double>(total / b);
}

std::uint64_t content_hash(std::span<const double> values) {
  std::uint64_t h = 1469598103934665603ull;
  for (double v : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    h = Rng::mix(h ^ bits);
  }
  return h;
}

std::vector<double> HashEncoder::embed_text(const TokenSequence& x) const {
  std::vector<double> v(x.tokens.begin(), x.tokens.end());
  return draw(content_hash(v) ^ 0x5151);
}

std::vector<double> HashEncoder::embed_video(const VideoFeatureSequence& v) const {
  return draw(content_hash(v.values));
}

std::vector<double> HashEncoder::draw(std::uint64_t key) const {
  Rng rng(key ^ salt_);
  std::vector<double> out(dim_);
  for (double& x : out) x = rng.normal();
  return out;
}

std::vector<std::size_t> brute_force_ranks(const RetrievalEncoder& encoder,
                                           const CorpusManifest& manifest,
                                           const std::string& language,
                                           const std::vector<std::string>& pool,
                                           bool all_captions, std::size_t max_text_len,
                                           std::size_t max_video_len) {
  auto unit = [](std::vector<double> v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    for (double& x : v) x /= n;
    return v;
  };
  std::vector<std::vector<double>> videos;
  for (const auto& id : pool) {
    VideoFeatureSequence v = manifest.features(id);
    if (v.length > max_video_len) {
      v.values.resize(max_video_len * v.width);
      v.length = max_video_len;
    }
    videos.push_back(unit(encoder.embed_video(v)));
  }
  std::vector<std::size_t> ranks;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& segs = manifest.segments(pool[i], language);
    for (std::size_t s = 0; s < (all_captions ? segs.size() : 1); ++s) {
      std::vector<std::int64_t> tokens = segs[s].tokens;
      if (tokens.size() > max_text_len) tokens.resize(max_text_len);
      const auto q = unit(encoder.embed_text({language, tokens}));
      std::vector<double> sims(pool.size());
      for (std::size_t j = 0; j < pool.size(); ++j)
        sims[j] = std::inner_product(q.begin(), q.end(), videos[j].begin(), 0.0);
      std::vector<std::size_t> order(pool.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
      ranks.push_back(1 + static_cast<std::size_t>(
                              std::find(order.begin(), order.end(), i) - order.begin()));
    }
  }
  return ranks;
}

}  // namespace mmp::testing
