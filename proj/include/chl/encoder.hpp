#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "chl/augment.hpp"
#include "chl/image.hpp"
#include "chl/losses.hpp"
#include "chl/rng.hpp"

namespace chl {

// Convolutional encoder: K blocks of (3x3 same conv, tanh, 2x average pool),
// global average pooling, a linear projection to embed_dim, and explicit
// L2 normalization so dot products are cosine similarities. Pixel inputs are
// scaled by 1/255 at entry. Gradients are hand-derived throughout.
struct EncoderConfig {
  int input_size = 32;
  std::vector<int> channels = {16, 32, 64};
  int embed_dim = 32;

  void validate() const;
};

// Parameter tensors in declaration (checkpoint) order:
//   conv k weight (C_out x 9*C_in), conv k bias (C_out x 1) for each block,
//   then projection weight (d x C_last) and bias (d x 1).
struct EncoderParams {
  EncoderConfig config;
  std::vector<Eigen::MatrixXd> tensors;

  static EncoderParams init(const EncoderConfig& cfg, std::uint64_t seed);
  static EncoderParams from_tensors(const EncoderConfig& cfg, std::vector<Eigen::MatrixXd> tensors);

  Eigen::MatrixXd& conv_weight(int k) { return tensors[2 * k]; }
  Eigen::MatrixXd& conv_bias(int k) { return tensors[2 * k + 1]; }
  Eigen::MatrixXd& proj_weight() { return tensors[tensors.size() - 2]; }
  Eigen::MatrixXd& proj_bias() { return tensors[tensors.size() - 1]; }
  const Eigen::MatrixXd& conv_weight(int k) const { return tensors[2 * k]; }
  const Eigen::MatrixXd& conv_bias(int k) const { return tensors[2 * k + 1]; }
  const Eigen::MatrixXd& proj_weight() const { return tensors[tensors.size() - 2]; }
  const Eigen::MatrixXd& proj_bias() const { return tensors[tensors.size() - 1]; }

  bool all_finite() const;
};

// Saved activations from a forward pass, consumed by the backward pass.
struct ForwardTrace {
  int batch = 0;
  std::vector<Eigen::MatrixXd> patches;      // im2col input per block
  std::vector<Eigen::MatrixXd> activations;  // tanh output per block (pre-pool)
  std::vector<Eigen::MatrixXd> pooled;       // pooled output per block
  Eigen::MatrixXd features;                  // after global average pooling (C x B)
  Eigen::MatrixXd pre_norm;                  // projection output (d x B)
  Eigen::MatrixXd embeddings;                // unit columns (d x B)
};

// Returns unit-norm embeddings as rows (B x d).
Eigen::MatrixXd forward_batch(const EncoderParams& params, const std::vector<const ImageTensor*>& images,
                              ForwardTrace* trace);

Eigen::VectorXd forward(const EncoderParams& params, const ImageTensor& image);

// upstream_grad has one row per embedding row; returns parameter gradients
// in declaration order.
std::vector<Eigen::MatrixXd> backward_batch(const EncoderParams& params, const ForwardTrace& trace,
                                            const Eigen::MatrixXd& upstream_grad);

std::vector<Eigen::MatrixXd> backward(const EncoderParams& params, const ImageTensor& image,
                                      const Eigen::VectorXd& upstream_grad);

struct TrainConfig {
  double learning_rate = 1e-5;
  int epochs = 200;
  int batch_size = 12;
  std::uint64_t rng_seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

struct AdamState {
  std::vector<Eigen::ArrayXXd> m;
  std::vector<Eigen::ArrayXXd> v;
  long step = 0;

  explicit AdamState(const std::vector<Eigen::MatrixXd>& params);
  void update(std::vector<Eigen::MatrixXd>& params, const std::vector<Eigen::MatrixXd>& grads,
              const TrainConfig& cfg);
};

}  // namespace chl
