#pragma once

#include <optional>
#include <string>
#include <vector>

#include "chl/augment.hpp"
#include "chl/checkpoint.hpp"
#include "chl/encoder.hpp"
#include "chl/losses.hpp"
#include "chl/pairs.hpp"

namespace chl {

// In-memory training split, images already resized to the encoder input.
struct TrainDataset {
  std::vector<ImageTensor> images;
  Eigen::VectorXi labels;
  std::vector<std::string> patient_ids;

  std::size_t size() const { return images.size(); }
  void validate() const;
};

struct EpochLogRow {
  int epoch = 0;
  double mean_loss = 0.0;
  int skipped_anchors = 0;
};

// One contrastive stage: shuffled mini-batches, two augmented views per
// image, pair sets from labels (restricted by relaxed dataset-level sets
// when given; the in-batch partner view is always kept positive), Adam
// updates. Deterministic for a fixed seed, including augmentation draws
// and batch order.
Checkpoint train_contrastive(const TrainDataset& data, const PairSets* dataset_pairs,
                             const AugmentPipeline& pipeline, const LossConfig& loss_cfg,
                             const TrainConfig& train_cfg, const EncoderConfig& enc_cfg,
                             const Checkpoint* init, StageTag out_stage, std::uint64_t parent_hash,
                             std::vector<EpochLogRow>* log);

// Deterministic evaluation-mode embeddings, one unit-norm row per image.
Eigen::MatrixXd embed_dataset(const EncoderParams& params, const std::vector<ImageTensor>& images);

}  // namespace chl
