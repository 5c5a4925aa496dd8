#include "mmp/checkpoint.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mmp/errors.hpp"

namespace mmp {

using json = nlohmann::json;

namespace {

class LineReader {
 public:
  LineReader(const std::string& text, std::string source) : in_(text), source_(std::move(source)) {}

  std::string next(const std::string& expecting) {
    std::string line;
    if (!std::getline(in_, line)) {
      throw FormatError(source_ + ": truncated, expected " + expecting + " at line " +
                        std::to_string(line_ + 1));
    }
    ++line_;
    return line;
  }

  std::string header(const std::string& key) {
    std::string line = next(key);
    const std::string prefix = key + "\t";
    if (line.rfind(prefix, 0) != 0) {
      throw FormatError(source_ + ":" + std::to_string(line_) + ": expected '" + key + "' header");
    }
    return line.substr(prefix.size());
  }

  std::uint64_t header_u64(const std::string& key) {
    const std::string v = header(key);
    char* end = nullptr;
    errno = 0;
    const unsigned long long n = std::strtoull(v.c_str(), &end, 10);
    if (v.empty() || *end != '\0' || errno != 0)
      throw FormatError(source_ + ":" + std::to_string(line_) + ": bad integer for " + key);
    return n;
  }

  bool at_end() {
    std::string rest;
    while (std::getline(in_, rest)) {
      if (!rest.empty()) return false;
    }
    return true;
  }

  const std::string& source() const { return source_; }
  std::size_t line() const { return line_; }

 private:
  std::istringstream in_;
  std::string source_;
  std::size_t line_ = 0;
};

ModelConfig model_config_from_json(const std::string& text, const std::string& source) {
  try {
    const json j = json::parse(text);
    ModelConfig m;
    m.vocab_size = j.at("vocab_size").get<std::size_t>();
    m.feature_dim = j.at("feature_dim").get<std::size_t>();
    m.dim = j.at("dim").get<std::size_t>();
    m.backbone_dim = j.at("backbone_dim").get<std::size_t>();
    m.backbone_layers = j.at("backbone_layers").get<std::size_t>();
    m.backbone_heads = j.at("backbone_heads").get<std::size_t>();
    m.output_layer = j.at("output_layer").get<std::size_t>();
    m.freeze_below = j.at("freeze_below").get<std::size_t>();
    m.pool_layers = j.at("pool_layers").get<std::size_t>();
    m.pool_heads = j.at("pool_heads").get<std::size_t>();
    m.ffn_dim = j.at("ffn_dim").get<std::size_t>();
    m.max_text_len = j.at("max_text_len").get<std::size_t>();
    m.max_video_len = j.at("max_video_len").get<std::size_t>();
    return m;
  } catch (const json::exception& e) {
    throw FormatError(source + ": bad model header: " + e.what());
  }
}

std::string dims_string(const Shape& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(shape[i]);
  }
  return out;
}

std::vector<double> parse_values(const std::string& line, const std::string& where) {
  std::vector<double> out;
  const char* p = line.c_str();
  while (*p) {
    while (*p == ' ') ++p;
    if (!*p) break;
    char* end = nullptr;
    const double v = std::strtod(p, &end);
    if (end == p) throw FormatError(where + ": unparsable value");
    if (!std::isfinite(v)) throw FormatError(where + ": non-finite value");
    out.push_back(v);
    p = end;
  }
  return out;
}

}  // namespace

std::string model_config_json(const ModelConfig& m) {
  json j = {{"vocab_size", m.vocab_size},       {"feature_dim", m.feature_dim},
            {"dim", m.dim},                     {"backbone_dim", m.backbone_dim},
            {"backbone_layers", m.backbone_layers}, {"backbone_heads", m.backbone_heads},
            {"output_layer", m.output_layer},   {"freeze_below", m.freeze_below},
            {"pool_layers", m.pool_layers},     {"pool_heads", m.pool_heads},
            {"ffn_dim", m.ffn_dim},             {"max_text_len", m.max_text_len},
            {"max_video_len", m.max_video_len}};
  return j.dump();
}

void require_compatible(const ModelConfig& expected, const ModelConfig& actual) {
  auto check = [](const char* name, std::size_t want, std::size_t got) {
    if (want != got) {
      throw ConfigError("checkpoint " + std::string(name) + " " + std::to_string(got) +
                        " does not match expected " + name + " " + std::to_string(want));
    }
  };
  check("dim", expected.dim, actual.dim);
  check("backbone_dim", expected.backbone_dim, actual.backbone_dim);
  check("vocab_size", expected.vocab_size, actual.vocab_size);
  check("feature_dim", expected.feature_dim, actual.feature_dim);
  check("backbone_layers", expected.backbone_layers, actual.backbone_layers);
  check("backbone_heads", expected.backbone_heads, actual.backbone_heads);
  check("output_layer", expected.output_layer, actual.output_layer);
  check("pool_layers", expected.pool_layers, actual.pool_layers);
  check("pool_heads", expected.pool_heads, actual.pool_heads);
  check("ffn_dim", expected.ffn_dim, actual.ffn_dim);
  check("max_text_len", expected.max_text_len, actual.max_text_len);
  check("max_video_len", expected.max_video_len, actual.max_video_len);
}

std::string serialize_checkpoint(const Checkpoint& c) {
  std::string out = std::string(kCheckpointMagic) + " v" + std::to_string(kCheckpointVersion) + "\n";
  out += "config\t" + c.config.to_json_text() + "\n";
  out += "model\t" + model_config_json(c.params.config) + "\n";
  out += "step\t" + std::to_string(c.step) + "\n";
  out += "seed\t" + std::to_string(c.seed) + "\n";
  const std::vector<NamedTensor> named = c.params.named_parameters();
  out += "params\t" + std::to_string(named.size()) + "\n";
  for (const NamedTensor& nt : named) {
    out += nt.name + "\t" + dims_string(nt.tensor.shape()) + "\n";
    const auto data = nt.tensor.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (i) out += ' ';
      out += format_real(data[i]);
    }
    out += "\n";
  }
  return out;
}

Checkpoint parse_checkpoint(const std::string& text, const std::string& source) {
  LineReader r(text, source);
  const std::string magic = r.next("header");
  const std::string prefix = std::string(kCheckpointMagic) + " v";
  if (magic.rfind(prefix, 0) != 0) throw FormatError(source + ": not a checkpoint (bad header)");
  if (magic != prefix + std::to_string(kCheckpointVersion)) {
    throw FormatError(source + ": unsupported checkpoint version '" + magic.substr(prefix.size()) +
                      "'");
  }
  Checkpoint c;
  try {
    c.config = TrainConfig::from_json_text(r.header("config"));
  } catch (const ConfigError& e) {
    throw FormatError(source + ": bad config header: " + e.what());
  }
  const ModelConfig model = model_config_from_json(r.header("model"), source);
  try {
    model.validate();
  } catch (const ConfigError& e) {
    throw FormatError(source + ": " + e.what());
  }
  c.step = r.header_u64("step");
  c.seed = r.header_u64("seed");
  const std::uint64_t count = r.header_u64("params");

  Rng scratch(0);
  c.params = ModelParameters::initialize(model, scratch);
  std::vector<NamedTensor> named = c.params.named_parameters();
  if (count != named.size()) {
    throw FormatError(source + ": expected " + std::to_string(named.size()) +
                      " parameter blocks, header says " + std::to_string(count));
  }
  for (NamedTensor& nt : named) {
    const std::string head = r.next("block " + nt.name);
    const std::string expected_head = nt.name + "\t" + dims_string(nt.tensor.shape());
    if (head != expected_head) {
      throw FormatError(source + ":" + std::to_string(r.line()) + ": block '" + nt.name +
                        "' expected header '" + expected_head + "', found '" + head + "'");
    }
    const std::string where = source + ": block '" + nt.name + "'";
    const std::vector<double> values = parse_values(r.next("values of " + nt.name), where);
    if (values.size() != nt.tensor.numel()) {
      throw FormatError(where + " holds " + std::to_string(values.size()) + " values, shape " +
                        shape_string(nt.tensor.shape()) + " needs " +
                        std::to_string(nt.tensor.numel()));
    }
    std::copy(values.begin(), values.end(), nt.tensor.mutable_data().begin());
  }
  if (!r.at_end()) throw FormatError(source + ": trailing content after last block");
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << serialize_checkpoint(checkpoint);
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str(), path.string());
}

}  // namespace mmp
