#include "commands.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>

#include <CLI11.hpp>

#include "mmp/checkpoint.hpp"
#include "mmp/errors.hpp"
#include "mmp/experiment.hpp"
#include "mmp/synthetic.hpp"

namespace mmp::cli {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<std::uint64_t> parse_seeds(const std::string& csv) {
  std::vector<std::uint64_t> seeds;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const std::size_t comma = std::min(csv.find(',', start), csv.size());
    const std::string item = csv.substr(start, comma - start);
    std::uint64_t v = 0;
    const auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || end != item.data() + item.size())
      throw UsageError("--seeds: '" + item + "' is not an unsigned integer");
    seeds.push_back(v);
    start = comma + 1;
  }
  return seeds;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage: return kUsage;
    case ErrorKind::kNumeric: return kNumeric;
    default: return kData;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multilingual multimodal contrastive embeddings: corpus, training, retrieval",
               args.empty() ? "mmp" : fs::path(args[0]).filename().string()};
  app.require_subcommand(1);
  LogFn log = [&err](const std::string& line) { err << line << '\n'; };
  std::function<void()> action;

  // gen-corpus
  std::string spec_path, out_path, corpus, config_path, langs, init_path, ckpt_path;
  std::string format = "json", split = "test", objectives, seeds_csv, detail_out;
  std::uint64_t seed = 0;
  std::size_t pool_size = 100;
  bool all_captions = false;

  auto* gen = app.add_subcommand("gen-corpus", "Write a synthetic multilingual corpus");
  gen->add_option("--spec", spec_path, "Synthetic spec JSON")->required();
  gen->add_option("--out", out_path, "Corpus root to create")->required();
  gen->add_option("--seed", seed, "Master seed (overrides the spec)")->required();
  gen->callback([&] {
    action = [&] {
      SyntheticSpec spec = SyntheticSpec::from_file(spec_path);
      spec.seed = seed;
      const CorpusManifest m = generate_synthetic_corpus(spec, out_path);
      log("wrote " + std::to_string(m.videos.size()) + " videos, " +
          std::to_string(m.segment_count()) + " subtitle rows to " + out_path);
    };
  });

  auto* pre = app.add_subcommand("pretrain", "Contrastive pre-training on the pretrain split");
  pre->add_option("--corpus", corpus, "Corpus root")->required();
  pre->add_option("--config", config_path, "Training config JSON")->required();
  pre->add_option("--langs", langs, "Language pool: comma list or 'all'")->required();
  pre->add_option("--out", out_path, "Checkpoint to write")->required();
  pre->add_option("--seed", seed, "Master seed")->required();
  pre->callback([&] {
    action = [&] {
      const CorpusManifest m = load_manifest(corpus);
      TrainConfig c = TrainConfig::from_file(config_path);
      c.language_pool = parse_language_list(langs);
      c.seed = seed;
      save_checkpoint(pretrain(m, c, nullptr, log).checkpoint, out_path);
      log("saved " + out_path);
    };
  });

  auto* ft = app.add_subcommand("finetune", "Caption fine-tuning on the train split");
  ft->add_option("--corpus", corpus, "Corpus root")->required();
  ft->add_option("--config", config_path, "Training config JSON")->required();
  ft->add_option("--langs", langs, "Caption languages: comma list or 'all'")->required();
  ft->add_option("--init", init_path, "Checkpoint to start from (default: random init)");
  ft->add_option("--out", out_path, "Checkpoint to write")->required();
  ft->add_option("--seed", seed, "Master seed")->required();
  ft->callback([&] {
    action = [&] {
      const CorpusManifest m = load_manifest(corpus);
      TrainConfig c = TrainConfig::from_file(config_path);
      c.language_pool = parse_language_list(langs);
      c.seed = seed;
      std::optional<Checkpoint> init;
      if (!init_path.empty()) init = load_checkpoint(init_path);
      save_checkpoint(finetune(m, c, init ? &*init : nullptr, log).checkpoint, out_path);
      log("saved " + out_path);
    };
  });

  auto* ev = app.add_subcommand("eval", "Text-to-video retrieval recall per language");
  ev->add_option("--corpus", corpus, "Corpus root")->required();
  ev->add_option("--ckpt", ckpt_path, "Checkpoint to evaluate")->required();
  ev->add_option("--langs", langs, "Query languages: comma list or 'all'")->required();
  ev->add_option("--pool-size", pool_size, "Candidate videos (first N by id)")->required();
  ev->add_option("--split", split, "Split to evaluate")
      ->check(CLI::IsMember({"pretrain", "train", "val", "test"}))
      ->capture_default_str();
  ev->add_option("--format", format, "Report format")
      ->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();
  ev->add_option("--out", out_path, "Report file (default: standard output)");
  ev->add_flag("--all-captions", all_captions, "Use every caption as a query");
  ev->callback([&] {
    action = [&] {
      const CorpusManifest m = load_manifest(corpus);
      const Checkpoint ckpt = load_checkpoint(ckpt_path);
      require_compatible(ckpt.config.model_config(m.vocabulary.size(), m.feature_dim()),
                         ckpt.params.config);
      EvalOptions o;
      o.split = parse_split(split);
      o.pool_size = pool_size;
      o.all_captions = all_captions;
      o.max_text_len = ckpt.params.config.max_text_len;
      o.max_video_len = ckpt.params.config.max_video_len;
      const std::vector<std::string> pool = resolve_language_pool(m, parse_language_list(langs));
      ModelRetrievalEncoder encoder(ckpt.params);
      RetrievalReport report = evaluate_all(encoder, m, pool, o);
      report.checkpoint_id = fs::path(ckpt_path).filename().string();
      report.seed = ckpt.seed;
      report.config = ckpt.config.to_json_text();
      const std::string text = format == "csv" ? report.to_csv() : report.to_json();
      if (out_path.empty()) out << text;
      else write_text(out_path, text);
    };
  });

  auto* ab = app.add_subcommand("ablate", "Compare training objectives");
  ab->add_option("--corpus", corpus, "Corpus root")->required();
  ab->add_option("--objectives", objectives, "Comma list, e.g. nce,nce+intra,triplet")->required();
  ab->add_option("--config", config_path, "Training config JSON")->required();
  ab->add_option("--out", out_path, "CSV to write")->required();
  auto* ab_seed = ab->add_option("--seed", seed, "Master seed (default: config seed)");
  ab->callback([&] {
    action = [&] {
      const auto specs = parse_objective_list(objectives);
      const CorpusManifest m = load_manifest(corpus);
      TrainConfig c = TrainConfig::from_file(config_path);
      if (ab_seed->count() > 0) c.seed = seed;
      write_text(out_path, ablation_csv(run_ablation(m, c, specs, log)));
      log("wrote " + out_path);
    };
  });

  auto* tr = app.add_subcommand("transfer", "Zero-shot cross-lingual transfer experiment");
  tr->add_option("--corpus", corpus, "Corpus root")->required();
  tr->add_option("--config", config_path, "Training config JSON")->required();
  tr->add_option("--seeds", seeds_csv, "Comma list of master seeds")->required();
  tr->add_option("--out", out_path, "CSV to write (regimes x languages, mean R@1)")->required();
  tr->add_option("--detail-out", detail_out, "Optional per-seed CSV");
  tr->callback([&] {
    action = [&] {
      const auto seeds = parse_seeds(seeds_csv);
      const CorpusManifest m = load_manifest(corpus);
      const TrainConfig c = TrainConfig::from_file(config_path);
      const TransferResult result = run_transfer(m, c, seeds, log);
      write_text(out_path, transfer_csv(result));
      if (!detail_out.empty()) write_text(detail_out, transfer_detail_csv(result));
      log("wrote " + out_path);
    };
  });

  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("mmp");
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    const auto subs = app.get_subcommands();
    err << "error: " << e.what() << "\n" << (subs.empty() ? app.help() : subs.front()->help());
    return kUsage;
  }

  try {
    action();
    return kOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  }
}

}  // namespace mmp::cli
