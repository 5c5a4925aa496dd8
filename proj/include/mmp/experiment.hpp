#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmp/trainer.hpp"

namespace mmp {

/// One row of the objective comparison, e.g. "nce+intra+cross".
struct ObjectiveSpec {
  std::string name;
  Objective objective = Objective::kNce;
  bool intra = false;
  bool cross = false;
};

/// Parses "nce", "triplet+intra", "nce+intra+cross", ...
ObjectiveSpec parse_objective_spec(std::string_view text);
std::vector<ObjectiveSpec> parse_objective_list(std::string_view csv);

struct AblationRow {
  ObjectiveSpec spec;
  LossBreakdown final_loss;  // mean over the last trained epoch
  RetrievalReport report;
};

/// Fine-tunes one model per objective from the same initialization and
/// evaluates each on the test split.
std::vector<AblationRow> run_ablation(const CorpusManifest& manifest, const TrainConfig& config,
                                      const std::vector<ObjectiveSpec>& objectives,
                                      const LogFn& log = {});

/// `objective,inter,intra,cross,total,r1,r5,r10` with recalls averaged over
/// the evaluated languages.
std::string ablation_csv(const std::vector<AblationRow>& rows);

inline constexpr const char* kRegimeScratch = "scratch";
inline constexpr const char* kRegimeMp = "MP";
inline constexpr const char* kRegimeMmp = "MMP";
inline constexpr const char* kRegimeMmpAll = "MMP+all-lang";

struct TransferRun {
  std::string regime;
  std::uint64_t seed = 0;
  RetrievalReport report;
};

struct TransferResult {
  std::vector<std::string> languages;
  std::vector<std::string> regimes;  // row order
  std::vector<TransferRun> runs;

  /// Mean R@1 of (regime, language) over seeds; language "avg" averages the
  /// per-run average rows.
  double mean_r1(std::string_view regime, std::string_view language) const;
};

/// Per seed: shared initialization, then scratch, MP and MMP pre-training
/// each followed by English-only fine-tuning, plus MMP followed by
/// fine-tuning on every language. All runs are evaluated on the test split.
TransferResult run_transfer(const CorpusManifest& manifest, const TrainConfig& config,
                            const std::vector<std::uint64_t>& seeds, const LogFn& log = {});

/// Rows = regimes, columns = languages then avg; cells are mean R@1.
std::string transfer_csv(const TransferResult& result);
/// `regime,seed,language,r1,r5,r10` for every run and language.
std::string transfer_detail_csv(const TransferResult& result);

/// The English language of a corpus: "en" when present, else the first.
std::string pivot_language(const CorpusManifest& manifest);

}  // namespace mmp
