#pragma once

#include <Eigen/Core>
#include <vector>

#include "chl/image.hpp"
#include "chl/rng.hpp"

namespace chl {

// Optical densities V = ln(255 / I), one column per pixel.
struct OpticalDensity {
  Eigen::Matrix3Xd values;
  int height = 0;
  int width = 0;
};

// Two-stain Beer-Lambert factorization V ~ w * h with unit-norm, non-negative
// columns of w. Column 0 is canonicalized to hematoxylin, column 1 to eosin.
struct StainModel {
  Eigen::Matrix<double, 3, 2> w;
  Eigen::Matrix2Xd h;
  std::vector<double> objective_history;  // one entry per solver iteration, plus the initial value
  int iterations = 0;

  double final_objective() const { return objective_history.empty() ? 0.0 : objective_history.back(); }
};

struct StainConfig {
  double sparsity_weight = 0.1;  // L1 coefficient on the concentration rows
  int max_iterations = 200;
  double tolerance = 1e-7;  // relative objective change that stops the solver
  std::uint64_t rng_seed = 0;

  void validate() const;
};

// Reference H&E optical-density basis (Ruifrok & Johnston), unit columns.
// Used to seed the factorization and to render the synthetic fixtures.
Eigen::Matrix<double, 3, 2> reference_stain_basis();

// V[c, p] = ln(255 / clamp(I[c, p], 1, 255)).
OpticalDensity rgb_to_od(const ImageTensor& image);

// I[c, p] = clamp(255 * exp(-V[c, p]), 0, 255).
ImageTensor od_to_rgb(const OpticalDensity& od);

// Sparse NMF of the optical densities:
//   min 0.5 * |V - wh|_F^2 + sparsity_weight * sum_j |h(j,:)|_1
//   s.t. w, h >= 0 and |w(:,j)|_2 = 1.
// Alternating minimization; the objective is non-increasing at every
// iteration and both constraints hold exactly on return.
StainModel estimate_stains(const OpticalDensity& od, const StainConfig& cfg);

// HED color augmentation: factorize, perturb each stain intensity channel
// 255 * exp(-h(s,:)) with an affine a*x + b (a ~ U(1-strength, 1+strength),
// b ~ U(-strength*255*0.05, +strength*255*0.05), independent per stain),
// then rebuild RGB through w.
ImageTensor hed_augment(const ImageTensor& image, const StainConfig& cfg, double strength, RngEngine& rng);

// Single-stain RGB rendering of one factor (w column times h row).
ImageTensor render_stain_channel(const StainModel& model, int stain_index, int height, int width);

double stain_objective(const Eigen::Matrix3Xd& v, const Eigen::Matrix<double, 3, 2>& w,
                       const Eigen::Matrix2Xd& h, double sparsity_weight);

}  // namespace chl
