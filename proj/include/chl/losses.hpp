#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace chl {

// One contrastive training batch: 2N embedding rows (N source images, two
// augmented views each), their labels, patient ids, and the index of the
// source image each row came from. Rows are unit-norm so plain dot products
// act as cosine similarities.
struct EmbeddingBatch {
  Eigen::MatrixXd z;  // 2N x d, unit-norm rows
  Eigen::VectorXi labels;
  Eigen::VectorXi source_index;
  std::vector<std::string> patient_ids;  // optional

  Eigen::Index rows() const { return z.rows(); }

  // Index of the row's augmented partner (the unique other row with the
  // same source), or -1 when there is none.
  std::vector<int> partners() const;

  // Full batch invariant: unit rows at 1e-6 and label agreement between a
  // row and its partner. Training assembly satisfies this by construction.
  void validate() const;
};

// Per-anchor positive and negative index sets. Before relaxing these
// partition the non-anchor rows; relaxing only ever removes entries.
struct PairSets {
  std::vector<std::vector<int>> positives;
  std::vector<std::vector<int>> negatives;

  std::size_t size() const { return positives.size(); }
  void validate(Eigen::Index n) const;
};

enum class AlphaMode { kUniform, kInverseClassFrequency };

// Which loss terms are active: either the modified supervised-contrastive
// loss alone, or any non-empty subset of {sup, elim, self} summed.
struct LossCombination {
  bool modified = true;
  bool sup = false;
  bool elim = false;
  bool self = false;

  static LossCombination parse(const std::string& name);
  std::string str() const;
  void validate() const;
};

struct LossConfig {
  double tau = 0.01;        // softmax temperature
  double lambda_neg = 2.0;  // weight on negative terms in the modified denominator
  AlphaMode alpha_mode = AlphaMode::kInverseClassFrequency;
  LossCombination combination{};

  void validate() const;
};

struct LossResult {
  double value = 0.0;
  Eigen::MatrixXd grad;  // same shape as batch.z
  int skipped_anchors = 0;
};

// Class-balance weights: uniform gives all ones; inverse class frequency
// gives B / (2 * count(label_i)) so both classes contribute equally.
Eigen::VectorXd class_alpha(const Eigen::VectorXi& labels, AlphaMode mode);

// Modified supervised contrastive loss. Per anchor i:
//   l_i = (-alpha_i/|P|) * sum_{p in P} log( exp(s_ip) /
//         (sum_{p' in P} exp(s_ip') + lambda * sum_{q in Q} exp(s_iq)) )
// with s_ik = z_i . z_k / tau. Anchors with empty P are skipped and counted;
// the batch value is the mean over the rest.
LossResult modified_supcon_loss(const EmbeddingBatch& batch, const PairSets& pairs, const LossConfig& cfg);

// Self-supervised loss: numerator over the augmented partner, denominator
// over every other row.
LossResult self_loss(const EmbeddingBatch& batch, const LossConfig& cfg);

// Supervised contrastive loss: per-positive log-softmax against every other
// row, averaged over P(i).
LossResult sup_loss(const EmbeddingBatch& batch, const PairSets& pairs, const LossConfig& cfg);

// Elimination loss: numerator over the partner, denominator keeps the
// numerator term plus every row outside P(i).
LossResult elim_loss(const EmbeddingBatch& batch, const PairSets& pairs, const LossConfig& cfg);

// Unweighted sum of the terms named by cfg.combination.
LossResult combined_loss(const EmbeddingBatch& batch, const PairSets& pairs, const LossConfig& cfg);

}  // namespace chl
