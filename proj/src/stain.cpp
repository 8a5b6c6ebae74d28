#include "chl/stain.hpp"

#include <algorithm>
#include <cmath>

#include "chl/error.hpp"

namespace chl {

namespace {

constexpr double kEps = 1e-12;

// Exact non-negative least squares for the 2-variable column problems
// min |v - w*h|_2, h >= 0: try the unconstrained solution, then both
// single-stain boundary solutions.
Eigen::Matrix2Xd nnls_init(const Eigen::Matrix3Xd& v, const Eigen::Matrix<double, 3, 2>& w) {
  const Eigen::Matrix2d g = w.transpose() * w;
  const double det = g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0);
  const Eigen::Matrix2Xd wtv = w.transpose() * v;
  Eigen::Matrix2Xd h = Eigen::Matrix2Xd::Zero(2, v.cols());
  for (Eigen::Index p = 0; p < v.cols(); ++p) {
    const double b0 = wtv(0, p), b1 = wtv(1, p);
    if (std::abs(det) > kEps) {
      const double h0 = (g(1, 1) * b0 - g(0, 1) * b1) / det;
      const double h1 = (g(0, 0) * b1 - g(1, 0) * b0) / det;
      if (h0 >= 0.0 && h1 >= 0.0) {
        h(0, p) = h0;
        h(1, p) = h1;
        continue;
      }
    }
    const double a0 = std::max(0.0, b0 / g(0, 0));
    const double a1 = std::max(0.0, b1 / g(1, 1));
    const double r0 = (v.col(p) - w.col(0) * a0).squaredNorm();
    const double r1 = (v.col(p) - w.col(1) * a1).squaredNorm();
    if (r0 <= r1)
      h(0, p) = a0;
    else
      h(1, p) = a1;
  }
  return h;
}

}  // namespace

void StainConfig::validate() const {
  if (sparsity_weight < 0.0) throw ConfigError("stain sparsity_weight must be non-negative");
  if (max_iterations < 1) throw ConfigError("stain max_iterations must be >= 1");
  if (tolerance <= 0.0) throw ConfigError("stain tolerance must be positive");
}

Eigen::Matrix<double, 3, 2> reference_stain_basis() {
  Eigen::Matrix<double, 3, 2> w;
  // Ruifrok & Johnston H&E vectors, columns (hematoxylin, eosin).
  w << 0.65, 0.07, 0.70, 0.99, 0.29, 0.11;
  w.col(0).normalize();
  w.col(1).normalize();
  return w;
}

OpticalDensity rgb_to_od(const ImageTensor& image) {
  image.validate();
  OpticalDensity od;
  od.height = image.height;
  od.width = image.width;
  od.values = (255.0 / image.pixels.cwiseMax(1.0).cwiseMin(255.0).array()).log().matrix();
  return od;
}

ImageTensor od_to_rgb(const OpticalDensity& od) {
  ImageTensor image(od.height, od.width);
  if (od.values.cols() != image.pixel_count()) throw DataError("optical density size does not match dimensions");
  image.pixels = (255.0 * (-od.values.array()).exp()).cwiseMax(0.0).cwiseMin(255.0).matrix();
  return image;
}

double stain_objective(const Eigen::Matrix3Xd& v, const Eigen::Matrix<double, 3, 2>& w,
                       const Eigen::Matrix2Xd& h, double sparsity_weight) {
  const double residual = 0.5 * (v - w * h).squaredNorm();
  return residual + sparsity_weight * h.cwiseAbs().sum();
}

StainModel estimate_stains(const OpticalDensity& od, const StainConfig& cfg) {
  cfg.validate();
  const Eigen::Matrix3Xd& v = od.values;
  if (v.cols() < 2) throw DataError("stain estimation needs at least 2 pixels");
  if ((v.array() < 0.0).any()) throw DataError("optical density must be non-negative");
  if (v.maxCoeff() <= kEps) throw DataError("blank image: stains unidentifiable");

  StainModel model;
  model.w = reference_stain_basis();
  model.h = nnls_init(v, model.w);
  model.objective_history.push_back(stain_objective(v, model.w, model.h, cfg.sparsity_weight));

  const double lambda = cfg.sparsity_weight;
  for (int it = 0; it < cfg.max_iterations; ++it) {
    // Multiplicative update of h; monotone for the L1-penalized objective
    // and preserves non-negativity.
    const Eigen::Matrix2Xd numer = model.w.transpose() * v;
    const Eigen::Matrix2Xd denom =
        ((model.w.transpose() * model.w) * model.h).array() + lambda + kEps;
    model.h = (model.h.array() * numer.array() / denom.array()).cwiseMax(0.0).matrix();

    // Projected-gradient step on w with backtracking. A candidate is kept
    // only if the full objective, evaluated after renormalizing the columns
    // and rescaling h to compensate, does not increase.
    const Eigen::Matrix<double, 3, 2> grad = (model.w * model.h - v) * model.h.transpose();
    const double base = stain_objective(v, model.w, model.h, lambda);
    double step = 1.0 / ((model.h * model.h.transpose()).norm() + kEps);
    for (int trial = 0; trial < 30; ++trial, step *= 0.5) {
      Eigen::Matrix<double, 3, 2> wc = (model.w - step * grad).cwiseMax(0.0);
      const double s0 = wc.col(0).norm();
      const double s1 = wc.col(1).norm();
      if (s0 < kEps || s1 < kEps) continue;
      wc.col(0) /= s0;
      wc.col(1) /= s1;
      Eigen::Matrix2Xd hc = model.h;
      hc.row(0) *= s0;
      hc.row(1) *= s1;
      if (stain_objective(v, wc, hc, lambda) <= base) {
        model.w = wc;
        model.h = hc;
        break;
      }
    }

    const double obj = stain_objective(v, model.w, model.h, lambda);
    const double prev = model.objective_history.back();
    model.objective_history.push_back(obj);
    model.iterations = it + 1;
    if (std::abs(prev - obj) <= cfg.tolerance * std::max(1.0, prev)) break;
  }

  // Canonical column order: column 0 is the one closer (cosine) to the
  // reference hematoxylin direction.
  const Eigen::Vector3d ref_h = reference_stain_basis().col(0);
  if (model.w.col(1).dot(ref_h) > model.w.col(0).dot(ref_h)) {
    model.w.col(0).swap(model.w.col(1));
    model.h.row(0).swap(model.h.row(1));
  }
  return model;
}

ImageTensor hed_augment(const ImageTensor& image, const StainConfig& cfg, double strength, RngEngine& rng) {
  if (strength < 0.0 || strength > 1.0) throw ConfigError("hed strength must be in [0, 1]");
  const OpticalDensity od = rgb_to_od(image);
  StainModel model = estimate_stains(od, cfg);

  Eigen::Matrix2Xd perturbed = model.h;
  for (int s = 0; s < 2; ++s) {
    const double a = uniform_real(rng, 1.0 - strength, 1.0 + strength);
    const double b = uniform_real(rng, -strength * 255.0 * 0.05, strength * 255.0 * 0.05);
    // stain intensity channel, perturbed, clamped back to a valid intensity;
    // the floor bounds the reconverted concentration at 20 OD units without
    // touching unperturbed values, so strength 0 round-trips exactly
    const double floor = 255.0 * std::exp(-20.0);
    Eigen::ArrayXd intensity = 255.0 * (-model.h.row(s).transpose().array()).exp();
    intensity = (a * intensity + b).max(floor).min(255.0);
    perturbed.row(s) = (255.0 / intensity).log().transpose();
  }

  OpticalDensity rebuilt;
  rebuilt.height = image.height;
  rebuilt.width = image.width;
  rebuilt.values = model.w * perturbed;
  return od_to_rgb(rebuilt);
}

ImageTensor render_stain_channel(const StainModel& model, int stain_index, int height, int width) {
  if (stain_index < 0 || stain_index > 1) throw DataError("stain index must be 0 or 1");
  OpticalDensity od;
  od.height = height;
  od.width = width;
  od.values = model.w.col(stain_index) * model.h.row(stain_index);
  return od_to_rgb(od);
}

}  // namespace chl
