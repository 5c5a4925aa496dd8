#include "mmp/experiment.hpp"

#include <algorithm>

#include "mmp/errors.hpp"

namespace mmp {

namespace {

EvalOptions test_options(const TrainConfig& config) {
  EvalOptions o;
  o.split = Split::kTest;
  o.pool_size = config.eval_pool_size;
  o.max_text_len = config.max_text_len;
  o.max_video_len = config.max_video_len;
  return o;
}

RetrievalReport evaluate_checkpoint(const CorpusManifest& manifest, const Checkpoint& ckpt,
                                    std::span<const std::string> languages,
                                    const TrainConfig& config, std::string id) {
  ModelRetrievalEncoder encoder(ckpt.params);
  RetrievalReport report = evaluate_all(encoder, manifest, languages, test_options(config));
  report.checkpoint_id = std::move(id);
  report.seed = ckpt.seed;
  report.config = ckpt.config.to_json_text();
  return report;
}

}  // namespace

ObjectiveSpec parse_objective_spec(std::string_view text) {
  ObjectiveSpec spec;
  spec.name = std::string(text);
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t plus = std::min(text.find('+', start), text.size());
    parts.emplace_back(text.substr(start, plus - start));
    start = plus + 1;
  }
  if (parts[0] == "nce") spec.objective = Objective::kNce;
  else if (parts[0] == "triplet") spec.objective = Objective::kTriplet;
  else throw UsageError("objective '" + spec.name + "' must start with nce or triplet");
  for (std::size_t i = 1; i < parts.size(); ++i) {
    bool& flag = parts[i] == "intra" ? spec.intra : spec.cross;
    if ((parts[i] != "intra" && parts[i] != "cross") || flag)
      throw UsageError("objective '" + spec.name + "': unexpected term '" + parts[i] + "'");
    flag = true;
  }
  return spec;
}

std::vector<ObjectiveSpec> parse_objective_list(std::string_view csv) {
  std::vector<ObjectiveSpec> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const std::size_t comma = std::min(csv.find(',', start), csv.size());
    out.push_back(parse_objective_spec(csv.substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

std::vector<AblationRow> run_ablation(const CorpusManifest& manifest, const TrainConfig& config,
                                      const std::vector<ObjectiveSpec>& objectives,
                                      const LogFn& log) {
  if (objectives.empty()) throw UsageError("no objectives requested");
  const std::vector<std::string> languages = resolve_language_pool(manifest, config.language_pool);
  std::vector<AblationRow> rows;
  for (const ObjectiveSpec& spec : objectives) {
    TrainConfig c = config;
    c.mode = TrainMode::kFinetune;
    c.objective = spec.objective;
    c.intra = spec.intra;
    c.cross = spec.cross;
    if (log) log("ablate objective " + spec.name);
    TrainResult run = finetune(manifest, c, nullptr, log);
    AblationRow row;
    row.spec = spec;
    row.final_loss = run.history.back().mean_loss;
    row.report = evaluate_checkpoint(manifest, run.checkpoint, languages, c, spec.name);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "objective,inter,intra,cross,total,r1,r5,r10\n";
  for (const AblationRow& r : rows) {
    const LossBreakdown& l = r.final_loss;
    out += r.spec.name + "," + format_real(l.inter) + "," +
           (r.spec.intra ? format_real(l.intra) : "") + "," +
           (l.cross ? format_real(*l.cross) : "") + "," + format_real(l.total) + "," +
           format_real(r.report.average.r1) + "," + format_real(r.report.average.r5) + "," +
           format_real(r.report.average.r10) + "\n";
  }
  return out;
}

std::string pivot_language(const CorpusManifest& manifest) {
  if (manifest.languages.empty()) throw CorpusError("corpus has no languages");
  const auto it = std::find(manifest.languages.begin(), manifest.languages.end(), "en");
  return it != manifest.languages.end() ? *it : manifest.languages.front();
}

double TransferResult::mean_r1(std::string_view regime, std::string_view language) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const TransferRun& run : runs) {
    if (run.regime != regime) continue;
    if (language == "avg") {
      sum += run.report.average.r1;
      ++n;
      continue;
    }
    for (const LanguageRecall& row : run.report.rows) {
      if (row.language == language) {
        sum += row.r1;
        ++n;
      }
    }
  }
  if (n == 0) {
    throw EvaluationError("no transfer results for " + std::string(regime) + "/" +
                          std::string(language));
  }
  return sum / static_cast<double>(n);
}

TransferResult run_transfer(const CorpusManifest& manifest, const TrainConfig& config,
                            const std::vector<std::uint64_t>& seeds, const LogFn& log) {
  if (seeds.empty()) throw UsageError("transfer needs at least one seed");
  TransferResult result;
  result.languages = manifest.languages;
  result.regimes = {kRegimeScratch, kRegimeMp, kRegimeMmp};
  if (manifest.languages.size() >= 2) result.regimes.push_back(kRegimeMmpAll);
  const std::string english = pivot_language(manifest);

  for (std::uint64_t seed : seeds) {
    TrainConfig base = config;
    base.seed = seed;
    base.mode = TrainMode::kPretrain;
    base.cross = false;
    const ModelParameters init = initial_parameters(manifest, base);

    TrainConfig english_ft = base;
    english_ft.mode = TrainMode::kFinetune;
    english_ft.language_pool = {english};
    TrainConfig all_ft = english_ft;
    all_ft.language_pool = manifest.languages;
    all_ft.cross = config.cross;

    auto record = [&](const char* regime, const Checkpoint& ckpt) {
      result.runs.push_back({regime, seed,
                             evaluate_checkpoint(manifest, ckpt, manifest.languages, ckpt.config,
                                                 std::string(regime) + "/seed" + std::to_string(seed))});
      if (log) {
        std::string line = std::string(regime) + " seed " + std::to_string(seed) + " test R@1";
        for (const LanguageRecall& r : result.runs.back().report.rows)
          line += " " + r.language + "=" + format_real(r.r1);
        log(line);
      }
    };

    if (log) log("seed " + std::to_string(seed) + ": scratch fine-tune");
    const Checkpoint scratch_init{english_ft, init.clone(), 0, seed};
    record(kRegimeScratch, finetune(manifest, english_ft, &scratch_init, log).checkpoint);

    TrainConfig mp = base;
    mp.language_pool = {english};
    if (log) log("seed " + std::to_string(seed) + ": MP pre-training");
    const Checkpoint mp_ckpt = pretrain(manifest, mp, &init, log).checkpoint;
    record(kRegimeMp, finetune(manifest, english_ft, &mp_ckpt, log).checkpoint);

    TrainConfig mmp = base;
    mmp.language_pool = manifest.languages;
    if (log) log("seed " + std::to_string(seed) + ": MMP pre-training");
    const Checkpoint mmp_ckpt = pretrain(manifest, mmp, &init, log).checkpoint;
    record(kRegimeMmp, finetune(manifest, english_ft, &mmp_ckpt, log).checkpoint);

    if (manifest.languages.size() >= 2)
      record(kRegimeMmpAll, finetune(manifest, all_ft, &mmp_ckpt, log).checkpoint);
  }
  return result;
}

std::string transfer_csv(const TransferResult& result) {
  std::string out = "regime";
  for (const std::string& lang : result.languages) out += "," + lang;
  out += ",avg\n";
  for (const std::string& regime : result.regimes) {
    out += regime;
    for (const std::string& lang : result.languages) out += "," + format_real(result.mean_r1(regime, lang));
    out += "," + format_real(result.mean_r1(regime, "avg")) + "\n";
  }
  return out;
}

std::string transfer_detail_csv(const TransferResult& result) {
  std::string out = "regime,seed,language,r1,r5,r10\n";
  for (const TransferRun& run : result.runs) {
    for (const LanguageRecall& r : run.report.rows) {
      out += run.regime + "," + std::to_string(run.seed) + "," + r.language + "," +
             format_real(r.r1) + "," + format_real(r.r5) + "," + format_real(r.r10) + "\n";
    }
  }
  return out;
}

}  // namespace mmp
