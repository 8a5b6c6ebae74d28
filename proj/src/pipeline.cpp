#include "chl/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "chl/error.hpp"

namespace fs = std::filesystem;

namespace chl {

namespace {

// Stage-specific seeds derived from the run seed so the stages draw
// independent streams.
std::uint64_t stage_seed(std::uint64_t seed, std::uint64_t stage) { return splitmix64(seed ^ (stage * 0x9e37ull)); }

void write_epoch_log(const std::string& path, const std::vector<EpochLogRow>& log) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write training log: " + path);
  out << "epoch,mean_loss,skipped_anchors\n";
  char buf[128];
  for (const auto& row : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%d\n", row.epoch, row.mean_loss, row.skipped_anchors);
    out << buf;
  }
}

struct StagedPaths {
  std::string pretrain, relax, similarity, pairs;
};

// The two contrastive stages. With a persist directory each artifact is
// written as soon as it exists and the stage-2 parent hash is taken from
// the pretrain file, so a crashed run leaves resumable state behind.
StagedContrastiveResult staged_contrastive(const TrainDataset& data, const RunConfig& cfg,
                                           const std::string& persist_dir, StagedPaths* paths) {
  cfg.validate();
  StagedContrastiveResult result;
  const bool persist = !persist_dir.empty();
  const fs::path dir(persist_dir);

  TrainConfig stage1_cfg = cfg.train;
  stage1_cfg.rng_seed = stage_seed(cfg.seed, 1);
  result.stage1 = train_contrastive(data, nullptr, cfg.augment, cfg.loss, stage1_cfg, cfg.encoder, nullptr,
                                    StageTag::kPretrain, 0, &result.stage1_log);
  std::uint64_t pretrain_hash = 0;
  if (persist) {
    paths->pretrain = (dir / "pretrain.ckpt").string();
    save_checkpoint(paths->pretrain, result.stage1);
    write_epoch_log((dir / "pretrain_log.csv").string(), result.stage1_log);
    pretrain_hash = file_hash(paths->pretrain);
  }

  const PairSets* stage2_pairs = nullptr;
  PairSets relaxed;
  if (!cfg.skip_relax) {
    const EncoderParams params = result.stage1.encoder_params();
    result.similarity = compute_similarity_matrix(embed_dataset(params, data.images));
    const PairSets label_pairs = build_pair_sets(data.labels, Eigen::VectorXi());
    auto [pruned, report] = relax_pair_sets(label_pairs, result.similarity, cfg.relax_threshold);
    std::size_t surviving = 0;
    for (const auto& p : pruned.positives) surviving += p.size();
    if (surviving == 0) throw DataError("relaxing removed every positive pair in the dataset");
    if (persist) {
      paths->similarity = (dir / "similarity.bin").string();
      write_similarity_cache(paths->similarity, result.similarity, pretrain_hash);
      paths->pairs = (dir / "pairs.txt").string();
      write_pairs_file(paths->pairs, report);
    }
    relaxed = std::move(pruned);
    result.relax_report = std::move(report);
    stage2_pairs = &relaxed;
  }

  TrainConfig stage2_cfg = cfg.train;
  stage2_cfg.rng_seed = stage_seed(cfg.seed, 2);
  result.stage2 = train_contrastive(data, stage2_pairs, cfg.augment, cfg.loss, stage2_cfg, cfg.encoder,
                                    &result.stage1, StageTag::kRelax, pretrain_hash, &result.stage2_log);
  if (persist) {
    paths->relax = (dir / "relax.ckpt").string();
    save_checkpoint(paths->relax, result.stage2);
    write_epoch_log((dir / "relax_log.csv").string(), result.stage2_log);
  }
  return result;
}

}  // namespace

StagedContrastiveResult staged_contrastive_procedure(const TrainDataset& data, const RunConfig& cfg) {
  return staged_contrastive(data, cfg, "", nullptr);
}

PipelineResult run_pipeline(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.manifest_path.empty()) throw ConfigError("run.manifest is required");
  fs::create_directories(cfg.out_dir);
  cfg.write_resolved((fs::path(cfg.out_dir) / "resolved_config.ini").string());

  const DatasetManifest manifest = filter_magnification(load_manifest(cfg.manifest_path), cfg.magnification);
  const std::vector<FoldSplit> folds = split_folds(manifest, cfg.n_folds, cfg.ratios, cfg.seed);
  const FoldSplit& fold = folds.at(static_cast<std::size_t>(cfg.fold));
  const TrainDataset train = load_split(manifest, fold.train_indices, cfg.encoder.input_size);
  const TrainDataset val = load_split(manifest, fold.val_indices, cfg.encoder.input_size);
  const TrainDataset test = load_split(manifest, fold.test_indices, cfg.encoder.input_size);

  PipelineResult out;
  const fs::path dir(cfg.out_dir);
  StagedPaths paths;
  const StagedContrastiveResult staged = staged_contrastive(train, cfg, cfg.out_dir, &paths);
  out.pretrain_path = paths.pretrain;
  out.relax_path = paths.relax;
  out.similarity_path = paths.similarity;
  out.pairs_path = paths.pairs;

  FinetuneConfig ft_cfg = cfg.finetune;
  ft_cfg.rng_seed = stage_seed(cfg.seed, 3);
  std::vector<FinetuneLogRow> ft_log;
  const std::uint64_t relax_hash = file_hash(out.relax_path);
  const Checkpoint final_ckpt = finetune(train, &val, staged.stage2, cfg.augment, ft_cfg, relax_hash, &ft_log);
  out.finetune_path = (dir / "finetune.ckpt").string();
  save_checkpoint(out.finetune_path, final_ckpt);
  out.finetune_log_path = (dir / "finetune_log.csv").string();
  {
    std::ofstream log_out(out.finetune_log_path);
    if (!log_out) throw DataError("cannot write finetune log");
    log_out << "epoch,mean_total,mean_classification,mean_auxiliary,val_accuracy,val_balanced_accuracy\n";
    char buf[256];
    for (const auto& row : ft_log) {
      std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", row.epoch, row.mean_total,
                    row.mean_classification, row.mean_auxiliary, row.val_accuracy, row.val_balanced_accuracy);
      log_out << buf;
    }
  }

  // hash chain check on the persisted artifacts
  if (load_checkpoint(out.relax_path).parent_hash != file_hash(out.pretrain_path))
    throw DataError("checkpoint hash chain broken between pretrain and relax stages");
  if (load_checkpoint(out.finetune_path).parent_hash != file_hash(out.relax_path))
    throw DataError("checkpoint hash chain broken between relax and finetune stages");

  // test-set evaluation
  const EncoderParams encoder = final_ckpt.encoder_params();
  const HeadParams heads = HeadParams::from_tensors(final_ckpt.head_tensors);
  const Eigen::VectorXi pred = predict_labels(encoder, heads, test.images);
  std::vector<EvaluationRecord> records;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    EvaluationRecord rec;
    const ManifestRecord& m = manifest.records.at(static_cast<std::size_t>(fold.test_indices[i]));
    rec.item_id = m.relative_path.empty() ? m.path : m.relative_path;
    rec.patient_id = m.patient_id;
    rec.true_label = test.labels(i);
    rec.predicted_label = pred(i);
    rec.fold = cfg.fold;
    rec.magnification = m.magnification;
    records.push_back(std::move(rec));
  }
  out.report = evaluate_folds(records);
  out.report_path = (dir / "report.csv").string();
  write_metrics_csv(out.report_path, out.report);
  return out;
}

AblationTable run_ablation(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.manifest_path.empty()) throw ConfigError("run.manifest is required");

  const DatasetManifest manifest = filter_magnification(load_manifest(cfg.manifest_path), cfg.magnification);
  const std::vector<FoldSplit> folds = split_folds(manifest, cfg.n_folds, cfg.ratios, cfg.seed);
  const FoldSplit& fold = folds.at(static_cast<std::size_t>(cfg.fold));
  const TrainDataset train = load_split(manifest, fold.train_indices, cfg.encoder.input_size);
  const TrainDataset val = load_split(manifest, fold.val_indices, cfg.encoder.input_size);
  const TrainDataset test = load_split(manifest, fold.test_indices, cfg.encoder.input_size);

  AblationTable table;
  for (int combo = 1; combo <= 7; ++combo) {
    const LossCombination combination = LossCombination::parse("comb" + std::to_string(combo));
    table.membership[0][combo - 1] = combination.sup;
    table.membership[1][combo - 1] = combination.elim;
    table.membership[2][combo - 1] = combination.self;

    RunConfig combo_cfg = cfg;
    combo_cfg.loss.combination = combination;
    TrainConfig stage_cfg = combo_cfg.train;
    stage_cfg.rng_seed = stage_seed(cfg.seed, 10 + static_cast<std::uint64_t>(combo));
    // one contrastive stage per combination, tagged for fine-tuning
    const Checkpoint contrastive = train_contrastive(train, nullptr, combo_cfg.augment, combo_cfg.loss, stage_cfg,
                                                     combo_cfg.encoder, nullptr, StageTag::kRelax, 0, nullptr);
    FinetuneConfig ft_cfg = combo_cfg.finetune;
    ft_cfg.rng_seed = stage_seed(cfg.seed, 20 + static_cast<std::uint64_t>(combo));
    const Checkpoint tuned = finetune(train, &val, contrastive, combo_cfg.augment, ft_cfg, 0, nullptr);

    const EncoderParams encoder = tuned.encoder_params();
    const HeadParams heads = HeadParams::from_tensors(tuned.head_tensors);
    const Eigen::VectorXi pred = predict_labels(encoder, heads, test.images);
    Eigen::Index correct = 0;
    for (Eigen::Index i = 0; i < pred.size(); ++i) correct += pred(i) == test.labels(i) ? 1 : 0;
    table.accuracy[combo - 1] = static_cast<double>(correct) / static_cast<double>(pred.size());
  }
  return table;
}

void write_ablation_table(const std::string& path, const AblationTable& table) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write ablation table: " + path);
  out << "method,comb1,comb2,comb3,comb4,comb5,comb6,comb7\n";
  const char* names[3] = {"sup", "elim", "self"};
  for (int t = 0; t < 3; ++t) {
    out << names[t];
    for (int c = 0; c < 7; ++c) out << ',' << (table.membership[t][c] ? "x" : "");
    out << "\n";
  }
  out << "accuracy";
  char buf[64];
  for (int c = 0; c < 7; ++c) {
    std::snprintf(buf, sizeof(buf), ",%.17g", table.accuracy[c]);
    out << buf;
  }
  out << "\n";
  if (!out) throw DataError("failed writing ablation table: " + path);
}

}  // namespace chl
