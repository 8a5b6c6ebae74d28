#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "chl/checkpoint.hpp"
#include "chl/train.hpp"

namespace chl {

// How the auxiliary term of the total objective reaches the parameters.
// kReversal: the aux head minimizes its own error while the shared encoder
// receives the negated gradient (the head stays a real predictor of the
// stain matrix and the encoder is pushed to be stain-invariant).
// kLiteral: every parameter follows the printed total, so the aux head
// climbs its own error. Kept for comparison.
enum class AuxSignMode { kReversal, kLiteral };

struct FinetuneConfig {
  double eta = 0.5;      // coefficient on the auxiliary term
  double dropout_p = 0.5;
  double learning_rate = 2e-5;
  int epochs = 20;
  int batch_size = 8;
  std::uint64_t rng_seed = 1;
  int hidden1 = 64;
  int hidden2 = 16;
  AuxSignMode aux_sign = AuxSignMode::kReversal;
  AlphaMode class_weight_mode = AlphaMode::kInverseClassFrequency;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

// Classifier head (d -> h1 -> h2 -> 2, tanh between layers, dropout at the
// two interior sites) plus the auxiliary stain-matrix head (d -> 6).
// Tensor declaration order: w1, b1, w2, b2, w3, b3, aux_w, aux_b.
struct HeadParams {
  std::vector<Eigen::MatrixXd> tensors;

  static HeadParams init(int embed_dim, int hidden1, int hidden2, std::uint64_t seed);
  static HeadParams from_tensors(std::vector<Eigen::MatrixXd> tensors);

  Eigen::MatrixXd& w1() { return tensors[0]; }
  Eigen::MatrixXd& b1() { return tensors[1]; }
  Eigen::MatrixXd& w2() { return tensors[2]; }
  Eigen::MatrixXd& b2() { return tensors[3]; }
  Eigen::MatrixXd& w3() { return tensors[4]; }
  Eigen::MatrixXd& b3() { return tensors[5]; }
  Eigen::MatrixXd& aux_w() { return tensors[6]; }
  Eigen::MatrixXd& aux_b() { return tensors[7]; }
  const Eigen::MatrixXd& w1() const { return tensors[0]; }
  const Eigen::MatrixXd& b1() const { return tensors[1]; }
  const Eigen::MatrixXd& w2() const { return tensors[2]; }
  const Eigen::MatrixXd& b2() const { return tensors[3]; }
  const Eigen::MatrixXd& w3() const { return tensors[4]; }
  const Eigen::MatrixXd& b3() const { return tensors[5]; }
  const Eigen::MatrixXd& aux_w() const { return tensors[6]; }
  const Eigen::MatrixXd& aux_b() const { return tensors[7]; }

  int embed_dim() const { return static_cast<int>(w1().cols()); }
};

struct HeadTrace {
  Eigen::MatrixXd input;        // B x d embeddings
  Eigen::MatrixXd act1, act2;   // tanh outputs
  Eigen::MatrixXd mask1, mask2; // inverted-dropout multipliers (all ones in eval)
  Eigen::MatrixXd logits;       // B x 2
  Eigen::MatrixXd aux;          // B x 6
};

// Dropout fires only in train mode; eval mode is the identity.
HeadTrace head_forward(const HeadParams& heads, const Eigen::MatrixXd& embeddings, bool train_mode,
                       double dropout_p, RngEngine& rng);

struct HeadBackward {
  std::vector<Eigen::MatrixXd> grads;  // per head tensor, declaration order
  Eigen::MatrixXd d_embeddings;        // B x d
};

// d_logits / d_aux may be empty to drop that branch.
HeadBackward head_backward(const HeadParams& heads, const HeadTrace& trace, const Eigen::MatrixXd& d_logits,
                           const Eigen::MatrixXd& d_aux);

// Mean weighted cross-entropy over B x 2 logit rows; gradient w.r.t. logits.
struct ScalarWithGrad {
  double value = 0.0;
  Eigen::MatrixXd grad;
};
ScalarWithGrad classification_loss(const Eigen::MatrixXd& logits, const Eigen::VectorXi& labels,
                                   const Eigen::Vector2d& class_weights);

// Mean squared L2 between predicted and reference flattened stain matrices
// (B x 6 rows); gradient 2 * (pred - ref) / B.
ScalarWithGrad auxiliary_loss(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& reference);

// Total = classification - eta * auxiliary, with the gradient multipliers
// each parameter group receives under the chosen sign mode.
struct TotalFinetuneLoss {
  double value = 0.0;
  double cl_scale = 1.0;        // classifier head and encoder, classification branch
  double aux_encoder_scale = 0.0;
  double aux_head_scale = 0.0;
};
TotalFinetuneLoss total_finetune_loss(double classification, double auxiliary, double eta, AuxSignMode mode);

// Per-class weights (benign, malignant) under the alpha policy; classes
// absent from the batch get weight 1.
Eigen::Vector2d per_class_weights(const Eigen::VectorXi& labels, AlphaMode mode);

struct FinetuneLogRow {
  int epoch = 0;
  double mean_total = 0.0;
  double mean_classification = 0.0;
  double mean_auxiliary = 0.0;
  double val_accuracy = 0.0;
  double val_balanced_accuracy = 0.0;
};

// Supervised stage: HED augmentation first (its stain matrix becomes the
// auxiliary target), then the standard pipeline with the HED step disabled,
// encoder plus both heads optimized jointly. init must be a relax-stage
// checkpoint; the result carries the head tensors.
Checkpoint finetune(const TrainDataset& train, const TrainDataset* val, const Checkpoint& init,
                    const AugmentPipeline& pipeline, const FinetuneConfig& cfg, std::uint64_t parent_hash,
                    std::vector<FinetuneLogRow>* log);

// Evaluation-mode argmax labels (0 benign, 1 malignant).
Eigen::VectorXi predict_labels(const EncoderParams& encoder, const HeadParams& heads,
                               const std::vector<ImageTensor>& images);

// Flattened row-major 3x2 stain matrix of the HED-augmented image.
Eigen::Matrix<double, 6, 1> flatten_stain_matrix(const Eigen::Matrix<double, 3, 2>& w);

}  // namespace chl
