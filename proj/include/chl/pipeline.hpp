#pragma once

#include <array>
#include <string>
#include <vector>

#include "chl/config.hpp"
#include "chl/data.hpp"
#include "chl/finetune.hpp"
#include "chl/metrics.hpp"
#include "chl/pairs.hpp"
#include "chl/train.hpp"

namespace chl {

// Result of the two contrastive stages: stage 1 from scratch, cosine
// similarities from its encoder, pair relaxing at the configured threshold,
// stage 2 continuing from the stage-1 weights with the pruned sets. With
// skip_relax nothing is pruned and stage 2 keeps the label-built pairs.
struct StagedContrastiveResult {
  Checkpoint stage1;
  Checkpoint stage2;
  SimilarityMatrix similarity;   // empty when skip_relax
  RelaxReport relax_report;      // empty when skip_relax
  std::vector<EpochLogRow> stage1_log;
  std::vector<EpochLogRow> stage2_log;
};

StagedContrastiveResult staged_contrastive_procedure(const TrainDataset& data, const RunConfig& cfg);

struct PipelineResult {
  std::string pretrain_path;
  std::string relax_path;
  std::string finetune_path;
  std::string similarity_path;  // empty when skip_relax
  std::string pairs_path;       // empty when skip_relax
  std::string report_path;
  std::string finetune_log_path;
  MetricsReport report;
};

// Full staged run: ingest -> pretrain -> similarity -> relax -> retrain ->
// finetune -> eval, persisting each stage artifact under cfg.out_dir and
// verifying the checkpoint parent-hash chain.
PipelineResult run_pipeline(const RunConfig& cfg);

struct AblationTable {
  // membership[term][combo]: term order sup, elim, self; combos 1..7
  std::array<std::array<bool, 7>, 3> membership;
  std::array<double, 7> accuracy;
};

// Trains one contrastive stage plus fine-tuning per loss combination on the
// configured fold and reports test accuracy per combination.
AblationTable run_ablation(const RunConfig& cfg);

void write_ablation_table(const std::string& path, const AblationTable& table);

}  // namespace chl
