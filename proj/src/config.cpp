#include "mmp/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

#include "mmp/errors.hpp"

namespace mmp {

using json = nlohmann::json;

namespace {

using Setter = std::function<void(const json&, TrainConfig&)>;

template <typename T>
Setter field(T TrainConfig::*member) {
  return [member](const json& v, TrainConfig& c) { c.*member = v.get<T>(); };
}

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"mode",
       [](const json& v, TrainConfig& c) {
         const auto s = v.get<std::string>();
         if (s == "pretrain") c.mode = TrainMode::kPretrain;
         else if (s == "finetune") c.mode = TrainMode::kFinetune;
         else throw ConfigError("mode must be pretrain or finetune, got '" + s + "'");
       }},
      {"objective",
       [](const json& v, TrainConfig& c) {
         const auto s = v.get<std::string>();
         if (s == "nce") c.objective = Objective::kNce;
         else if (s == "triplet") c.objective = Objective::kTriplet;
         else throw ConfigError("objective must be nce or triplet, got '" + s + "'");
       }},
      {"intra", field(&TrainConfig::intra)},
      {"cross", field(&TrainConfig::cross)},
      {"language_pool", field(&TrainConfig::language_pool)},
      {"learning_rate", field(&TrainConfig::learning_rate)},
      {"max_grad_norm", field(&TrainConfig::max_grad_norm)},
      {"dropout", field(&TrainConfig::dropout)},
      {"tau", field(&TrainConfig::tau)},
      {"margin", field(&TrainConfig::margin)},
      {"mask_rate", field(&TrainConfig::mask_rate)},
      {"batch_size", field(&TrainConfig::batch_size)},
      {"pretrain_epochs", field(&TrainConfig::pretrain_epochs)},
      {"finetune_epochs", field(&TrainConfig::finetune_epochs)},
      {"max_steps", field(&TrainConfig::max_steps)},
      {"freeze_below", field(&TrainConfig::freeze_below)},
      {"seed", field(&TrainConfig::seed)},
      {"max_text_len", field(&TrainConfig::max_text_len)},
      {"max_video_len", field(&TrainConfig::max_video_len)},
      {"min_clip_sec", field(&TrainConfig::min_clip_sec)},
      {"max_clip_sec", field(&TrainConfig::max_clip_sec)},
      {"dim", field(&TrainConfig::dim)},
      {"backbone_dim", field(&TrainConfig::backbone_dim)},
      {"backbone_layers", field(&TrainConfig::backbone_layers)},
      {"backbone_heads", field(&TrainConfig::backbone_heads)},
      {"output_layer", field(&TrainConfig::output_layer)},
      {"pool_layers", field(&TrainConfig::pool_layers)},
      {"pool_heads", field(&TrainConfig::pool_heads)},
      {"ffn_dim", field(&TrainConfig::ffn_dim)},
      {"validation_split",
       [](const json& v, TrainConfig& c) { c.validation_split = parse_split(v.get<std::string>()); }},
      {"validation_pool_size", field(&TrainConfig::validation_pool_size)},
      {"eval_pool_size", field(&TrainConfig::eval_pool_size)},
  };
  return table;
}

}  // namespace

std::string_view train_mode_name(TrainMode mode) {
  return mode == TrainMode::kPretrain ? "pretrain" : "finetune";
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (mode == TrainMode::kPretrain && cross)
    fail("pretraining uses only inter- and intra-modal terms; cross must be false");
  if (!(learning_rate >= 0.0)) fail("learning_rate must be >= 0");
  if (!(max_grad_norm > 0.0)) fail("max_grad_norm must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (!(tau > 0.0)) fail("tau must be positive");
  if (!(margin >= 0.0)) fail("margin must be >= 0");
  if (!(mask_rate > 0.0 && mask_rate < 1.0)) fail("mask_rate must lie in (0, 1)");
  if (batch_size == 0) fail("batch_size must be positive");
  if (pretrain_epochs == 0 || finetune_epochs == 0) fail("epochs must be positive");
  if (!(min_clip_sec > 0.0) || max_clip_sec < min_clip_sec)
    fail("need 0 < min_clip_sec <= max_clip_sec");
  if (validation_pool_size == 0 || eval_pool_size == 0) fail("pool sizes must be positive");
  if (freeze_below > backbone_layers) fail("freeze_below must lie in [0, backbone_layers]");
  model_config(3, 1).validate();
}

LossOptions TrainConfig::loss_options() const {
  LossOptions o;
  o.objective = objective;
  o.intra = intra;
  o.cross = cross;
  o.tau = tau;
  o.margin = margin;
  return o;
}

ModelConfig TrainConfig::model_config(std::size_t vocab_size, std::size_t feature_dim) const {
  ModelConfig m;
  m.vocab_size = vocab_size;
  m.feature_dim = feature_dim;
  m.dim = dim;
  m.backbone_dim = backbone_dim;
  m.backbone_layers = backbone_layers;
  m.backbone_heads = backbone_heads;
  m.output_layer = output_layer;
  m.freeze_below = mode == TrainMode::kFinetune ? freeze_below : 0;
  m.pool_layers = pool_layers;
  m.pool_heads = pool_heads;
  m.ffn_dim = ffn_dim;
  m.max_text_len = max_text_len;
  m.max_video_len = max_video_len;
  return m;
}

TrainConfig TrainConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("train config: unknown key '" + key + "'");
    try {
      it->second(value, c);
    } catch (const json::exception& e) {
      throw ConfigError("train config field '" + key + "': " + e.what());
    } catch (const Error& e) {
      throw ConfigError("train config field '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return from_json_text(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string TrainConfig::to_json_text() const {
  json j = {{"mode", std::string(train_mode_name(mode))},
            {"objective", objective == Objective::kNce ? "nce" : "triplet"},
            {"intra", intra},
            {"cross", cross},
            {"language_pool", language_pool},
            {"learning_rate", learning_rate},
            {"max_grad_norm", max_grad_norm},
            {"dropout", dropout},
            {"tau", tau},
            {"margin", margin},
            {"mask_rate", mask_rate},
            {"batch_size", batch_size},
            {"pretrain_epochs", pretrain_epochs},
            {"finetune_epochs", finetune_epochs},
            {"max_steps", max_steps},
            {"freeze_below", freeze_below},
            {"seed", seed},
            {"max_text_len", max_text_len},
            {"max_video_len", max_video_len},
            {"min_clip_sec", min_clip_sec},
            {"max_clip_sec", max_clip_sec},
            {"dim", dim},
            {"backbone_dim", backbone_dim},
            {"backbone_layers", backbone_layers},
            {"backbone_heads", backbone_heads},
            {"output_layer", output_layer},
            {"pool_layers", pool_layers},
            {"pool_heads", pool_heads},
            {"ffn_dim", ffn_dim},
            {"validation_split", std::string(split_name(validation_split))},
            {"validation_pool_size", validation_pool_size},
            {"eval_pool_size", eval_pool_size}};
  return j.dump();
}

std::vector<std::string> resolve_language_pool(const CorpusManifest& manifest,
                                               const std::vector<std::string>& pool) {
  if (pool.empty()) return manifest.languages;
  for (const std::string& lang : pool) {
    if (std::find(manifest.languages.begin(), manifest.languages.end(), lang) ==
        manifest.languages.end()) {
      throw ConfigError("language '" + lang + "' is not in the corpus");
    }
  }
  std::vector<std::string> out;
  for (const std::string& lang : manifest.languages) {
    if (std::find(pool.begin(), pool.end(), lang) != pool.end()) out.push_back(lang);
  }
  return out;
}

std::vector<std::string> parse_language_list(std::string_view text) {
  if (text == "all") return {};
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    std::string_view item = text.substr(start, comma - start);
    if (item.empty()) throw UsageError("empty language in list '" + std::string(text) + "'");
    out.emplace_back(item);
    start = comma + 1;
  }
  return out;
}

}  // namespace mmp
