#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "chl/checkpoint.hpp"
#include "chl/config.hpp"
#include "chl/data.hpp"
#include "chl/error.hpp"
#include "chl/finetune.hpp"
#include "chl/metrics.hpp"
#include "chl/pipeline.hpp"
#include "chl/png_io.hpp"
#include "chl/stain.hpp"

namespace fs = std::filesystem;
using namespace chl;

namespace {

struct SplitData {
  DatasetManifest manifest;
  FoldSplit fold;
  TrainDataset train, val, test;
};

SplitData load_fold(const RunConfig& cfg) {
  if (cfg.manifest_path.empty()) throw ConfigError("run.manifest is required");
  SplitData out;
  out.manifest = filter_magnification(load_manifest(cfg.manifest_path), cfg.magnification);
  const std::vector<FoldSplit> folds = split_folds(out.manifest, cfg.n_folds, cfg.ratios, cfg.seed);
  out.fold = folds.at(static_cast<std::size_t>(cfg.fold));
  out.train = load_split(out.manifest, out.fold.train_indices, cfg.encoder.input_size);
  out.val = load_split(out.manifest, out.fold.val_indices, cfg.encoder.input_size);
  out.test = load_split(out.manifest, out.fold.test_indices, cfg.encoder.input_size);
  return out;
}

std::uint64_t stage_seed(std::uint64_t seed, std::uint64_t stage) { return splitmix64(seed ^ (stage * 0x9e37ull)); }

void write_epoch_log_csv(const std::string& path, const std::vector<EpochLogRow>& log) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write training log: " + path);
  out << "epoch,mean_loss,skipped_anchors\n";
  char buf[128];
  for (const auto& row : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%d\n", row.epoch, row.mean_loss, row.skipped_anchors);
    out << buf;
  }
}

int dispatch(int argc, char** argv) {
  CLI::App app{"chl: staged contrastive representation-learning workbench for H&E image classification"};
  app.require_subcommand(1);
  app.footer(RunConfig::describe_keys());

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "generate the two-class synthetic H&E-look dataset");
  int synth_n = 300, synth_size = 32;
  std::uint64_t synth_seed = 1;
  std::string synth_out;
  synth->add_option("--n-per-class", synth_n, "images per class")->default_val(300);
  synth->add_option("--size", synth_size, "square image size")->default_val(32);
  synth->add_option("--seed", synth_seed, "generator seed")->default_val(1);
  synth->add_option("--out", synth_out, "output directory")->required();

  // pretrain
  auto* pretrain = app.add_subcommand("pretrain", "contrastive training stage on the configured fold");
  std::string pre_config, pre_out, pre_init, pre_pairs;
  pretrain->add_option("--config", pre_config, "run config file")->required();
  pretrain->add_option("--out", pre_out, "output checkpoint path")->required();
  pretrain->add_option("--init", pre_init, "continue from this checkpoint (second stage)");
  pretrain->add_option("--pairs", pre_pairs, "relaxed pairs file from the relax subcommand");

  // relax
  auto* relax = app.add_subcommand("relax", "similarity-based pruning of the train-split pair sets");
  std::string rel_ckpt, rel_config, rel_out, rel_cache;
  double rel_threshold = 0.5;
  relax->add_option("--checkpoint", rel_ckpt, "stage-1 checkpoint")->required();
  relax->add_option("--config", rel_config, "run config file")->required();
  relax->add_option("--threshold", rel_threshold, "similarity threshold")->default_val(0.5);
  relax->add_option("--out", rel_out, "pairs file to write")->required();
  relax->add_option("--sim-cache", rel_cache, "similarity cache file to write");

  // finetune
  auto* ft = app.add_subcommand("finetune", "supervised dual-head fine-tuning from a relax checkpoint");
  std::string ft_ckpt, ft_config, ft_out;
  ft->add_option("--checkpoint", ft_ckpt, "relax-stage checkpoint")->required();
  ft->add_option("--config", ft_config, "run config file")->required();
  ft->add_option("--out", ft_out, "output checkpoint path")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "score a finetuned checkpoint against a manifest");
  std::string ev_ckpt, ev_manifest, ev_out;
  ev->add_option("--checkpoint", ev_ckpt, "finetune-stage checkpoint")->required();
  ev->add_option("--manifest", ev_manifest, "manifest CSV (grouped by its fold column)")->required();
  ev->add_option("--out", ev_out, "report CSV path")->required();

  // ablate
  auto* ab = app.add_subcommand("ablate", "loss-combination study on one fold");
  std::string ab_config, ab_out;
  ab->add_option("--config", ab_config, "run config file")->required();
  ab->add_option("--out", ab_out, "output directory")->required();

  // stain separate
  auto* stain_cmd = app.add_subcommand("stain", "stain separation utilities");
  auto* sep = stain_cmd->add_subcommand("separate", "factorize an image into H&E stain channels");
  std::string sep_image, sep_out;
  StainConfig sep_cfg;
  sep->add_option("image", sep_image, "input PNG")->required();
  sep->add_option("--out", sep_out, "output directory")->required();
  sep->add_option("--sparsity", sep_cfg.sparsity_weight, "L1 weight on concentrations")->default_val(0.1);
  sep->add_option("--max-iterations", sep_cfg.max_iterations, "solver iteration cap")->default_val(200);
  sep->add_option("--tolerance", sep_cfg.tolerance, "relative objective-change stop")->default_val(1e-7);

  // augment-preview
  auto* prev = app.add_subcommand("augment-preview", "write an augmented copy of an image");
  std::string prev_image, prev_out, prev_config;
  double prev_strength = 0.05;
  std::uint64_t prev_seed = 1;
  bool prev_pipeline = false;
  prev->add_option("image", prev_image, "input PNG")->required();
  prev->add_option("--strength", prev_strength, "HED perturbation strength")->default_val(0.05);
  prev->add_option("--seed", prev_seed, "rng seed")->default_val(1);
  prev->add_option("--out", prev_out, "output PNG")->required();
  prev->add_flag("--pipeline", prev_pipeline, "apply the full augmentation pipeline instead of HED only");
  prev->add_option("--config", prev_config, "run config supplying pipeline parameters");

  // run
  auto* run = app.add_subcommand("run", "full staged pipeline: pretrain, relax, retrain, finetune, eval");
  std::string run_config, run_out_dir;
  bool run_skip_relax = false;
  run->add_option("--config", run_config, "run config file")->required();
  run->add_option("--out-dir", run_out_dir, "override [run] out_dir");
  run->add_flag("--skip-relax", run_skip_relax, "train stage 2 without similarity pruning (baseline)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // argument problems are config errors
  }

  if (*synth) {
    const SyntheticDataset ds = generate_synthetic_dataset(synth_n, synth_size, synth_seed);
    const std::string manifest = write_synthetic_dataset(synth_out, ds);
    std::ofstream params(fs::path(synth_out) / "generation.txt");
    params << "n_per_class = " << synth_n << "\nsize = " << synth_size << "\nseed = " << synth_seed << "\n";
    std::cout << "wrote " << ds.images.size() << " images and " << manifest << "\n";
    return 0;
  }

  if (*pretrain) {
    RunConfig cfg = RunConfig::load(pre_config);
    cfg.validate();
    const SplitData data = load_fold(cfg);
    Checkpoint init;
    const Checkpoint* init_ptr = nullptr;
    std::uint64_t parent = 0;
    if (!pre_init.empty()) {
      init = load_checkpoint(pre_init);
      init_ptr = &init;
      parent = file_hash(pre_init);
    }
    PairSets relaxed;
    const PairSets* pairs_ptr = nullptr;
    if (!pre_pairs.empty()) {
      if (init_ptr == nullptr) throw ConfigError("--pairs requires --init (it configures the second stage)");
      const RelaxReport report = read_pairs_file(pre_pairs);
      relaxed = apply_relax_report(build_pair_sets(data.train.labels, Eigen::VectorXi()), report);
      pairs_ptr = &relaxed;
    }
    TrainConfig stage_cfg = cfg.train;
    stage_cfg.rng_seed = stage_seed(cfg.seed, init_ptr ? 2 : 1);
    std::vector<EpochLogRow> log;
    const Checkpoint ckpt = train_contrastive(data.train, pairs_ptr, cfg.augment, cfg.loss, stage_cfg, cfg.encoder,
                                              init_ptr, init_ptr ? StageTag::kRelax : StageTag::kPretrain, parent, &log);
    save_checkpoint(pre_out, ckpt);
    write_epoch_log_csv(pre_out + ".log.csv", log);
    cfg.write_resolved(pre_out + ".resolved.ini");
    std::cout << "wrote " << pre_out << " (stage " << stage_name(ckpt.stage) << ")\n";
    return 0;
  }

  if (*relax) {
    RunConfig cfg = RunConfig::load(rel_config);
    cfg.validate();
    const SplitData data = load_fold(cfg);
    const Checkpoint ckpt = load_checkpoint(rel_ckpt);
    const EncoderParams params = ckpt.encoder_params();
    const SimilarityMatrix sim = compute_similarity_matrix(embed_dataset(params, data.train.images));
    if (!rel_cache.empty()) write_similarity_cache(rel_cache, sim, file_hash(rel_ckpt));
    const PairSets label_pairs = build_pair_sets(data.train.labels, Eigen::VectorXi());
    const auto [pruned, report] = relax_pair_sets(label_pairs, sim, rel_threshold);
    write_pairs_file(rel_out, report);
    cfg.write_resolved(rel_out + ".resolved.ini");
    std::cout << "wrote " << rel_out << " (removed " << report.total_removed_positives() << " positives, "
              << report.total_removed_negatives() << " negatives over " << data.train.size() << " items)\n";
    return 0;
  }

  if (*ft) {
    RunConfig cfg = RunConfig::load(ft_config);
    cfg.validate();
    const SplitData data = load_fold(cfg);
    const Checkpoint init = load_checkpoint(ft_ckpt);
    FinetuneConfig stage_cfg = cfg.finetune;
    stage_cfg.rng_seed = stage_seed(cfg.seed, 3);
    std::vector<FinetuneLogRow> log;
    const Checkpoint ckpt = finetune(data.train, &data.val, init, cfg.augment, stage_cfg, file_hash(ft_ckpt), &log);
    save_checkpoint(ft_out, ckpt);
    std::ofstream log_out(ft_out + ".log.csv");
    log_out << "epoch,mean_total,mean_classification,mean_auxiliary,val_accuracy,val_balanced_accuracy\n";
    char buf[256];
    for (const auto& row : log) {
      std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", row.epoch, row.mean_total,
                    row.mean_classification, row.mean_auxiliary, row.val_accuracy, row.val_balanced_accuracy);
      log_out << buf;
    }
    cfg.write_resolved(ft_out + ".resolved.ini");
    std::cout << "wrote " << ft_out << "\n";
    return 0;
  }

  if (*ev) {
    const Checkpoint ckpt = load_checkpoint(ev_ckpt);
    if (ckpt.stage != StageTag::kFinetune) throw DataError("eval needs a finetune-stage checkpoint");
    const DatasetManifest manifest = load_manifest(ev_manifest);
    const EncoderParams encoder = ckpt.encoder_params();
    const HeadParams heads = HeadParams::from_tensors(ckpt.head_tensors);
    std::vector<ImageTensor> images;
    for (const auto& r : manifest.records)
      images.push_back(resize_bilinear(read_png(r.path), encoder.config.input_size, encoder.config.input_size));
    const Eigen::VectorXi pred = predict_labels(encoder, heads, images);
    std::vector<EvaluationRecord> records;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
      const ManifestRecord& m = manifest.records[i];
      EvaluationRecord rec;
      rec.item_id = m.relative_path.empty() ? m.path : m.relative_path;
      rec.patient_id = m.patient_id;
      rec.true_label = m.label;
      rec.predicted_label = pred(static_cast<Eigen::Index>(i));
      rec.fold = m.fold >= 0 ? m.fold : 0;
      rec.magnification = m.magnification;
      records.push_back(std::move(rec));
    }
    const MetricsReport report = evaluate_folds(records);
    write_metrics_csv(ev_out, report);
    std::cout << "wrote " << ev_out << " (mean accuracy " << report.mean.accuracy << ")\n";
    return 0;
  }

  if (*ab) {
    RunConfig cfg = RunConfig::load(ab_config);
    cfg.validate();
    fs::create_directories(ab_out);
    cfg.write_resolved((fs::path(ab_out) / "resolved_config.ini").string());
    const AblationTable table = run_ablation(cfg);
    const std::string path = (fs::path(ab_out) / "ablation.csv").string();
    write_ablation_table(path, table);
    std::ifstream echo(path);
    std::cout << echo.rdbuf();
    return 0;
  }

  if (*sep) {
    sep_cfg.validate();
    const ImageTensor image = read_png(sep_image);
    const OpticalDensity od = rgb_to_od(image);
    const StainModel model = estimate_stains(od, sep_cfg);
    fs::create_directories(sep_out);
    write_png((fs::path(sep_out) / "hematoxylin.png").string(),
              render_stain_channel(model, 0, image.height, image.width));
    write_png((fs::path(sep_out) / "eosin.png").string(), render_stain_channel(model, 1, image.height, image.width));
    OpticalDensity rec;
    rec.height = image.height;
    rec.width = image.width;
    rec.values = model.w * model.h;
    write_png((fs::path(sep_out) / "reconstruction.png").string(), od_to_rgb(rec));
    std::ofstream txt(fs::path(sep_out) / "stains.txt");
    char buf[256];
    std::snprintf(buf, sizeof(buf), "w %.17g %.17g %.17g %.17g %.17g %.17g\n", model.w(0, 0), model.w(0, 1),
                  model.w(1, 0), model.w(1, 1), model.w(2, 0), model.w(2, 1));
    txt << buf;
    std::snprintf(buf, sizeof(buf), "objective %.17g\niterations %d\nsparsity_weight %.17g\n",
                  model.final_objective(), model.iterations, sep_cfg.sparsity_weight);
    txt << buf;
    std::cout << "wrote stain channels to " << sep_out << "\n";
    return 0;
  }

  if (*prev) {
    const ImageTensor image = read_png(prev_image);
    RngEngine rng = derive_rng(prev_seed, {0x50524556ull});
    ImageTensor result;
    AugmentPipeline pipeline;
    if (!prev_config.empty()) {
      RunConfig cfg = RunConfig::load(prev_config);
      cfg.validate();
      pipeline = cfg.augment;
    }
    pipeline.hed_strength = prev_strength;
    if (prev_pipeline) {
      result = apply_pipeline(pipeline, image, rng);
    } else {
      result = hed_augment(image, pipeline.stain, prev_strength, rng);
    }
    write_png(prev_out, result);
    std::ofstream params(prev_out + ".params.txt");
    params << "mode = " << (prev_pipeline ? "pipeline" : "hed") << "\nstrength = " << prev_strength
           << "\nseed = " << prev_seed << "\n";
    std::cout << "wrote " << prev_out << "\n";
    return 0;
  }

  if (*run) {
    RunConfig cfg = RunConfig::load(run_config);
    if (!run_out_dir.empty()) cfg.out_dir = run_out_dir;
    if (run_skip_relax) cfg.skip_relax = true;
    cfg.validate();
    const PipelineResult result = run_pipeline(cfg);
    std::cout << "pipeline complete\n"
              << "  pretrain:  " << result.pretrain_path << "\n"
              << "  relax:     " << result.relax_path << "\n"
              << "  finetune:  " << result.finetune_path << "\n"
              << "  report:    " << result.report_path << "\n"
              << "  mean accuracy " << result.report.mean.accuracy << ", balanced "
              << result.report.mean.balanced_accuracy << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
