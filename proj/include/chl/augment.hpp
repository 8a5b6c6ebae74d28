#pragma once

#include <utility>

#include "chl/image.hpp"
#include "chl/rng.hpp"
#include "chl/stain.hpp"

namespace chl {

// Probability-gated chain of view transforms. Steps run in the fixed order
// crop, jitter, blur, geometric, hed; each fires independently with its
// probability. Output always keeps the input dimensions and [0, 255] range.
struct AugmentPipeline {
  double crop_prob = 0.5;
  double crop_scale_min = 0.6;
  double crop_scale_max = 1.0;

  double jitter_prob = 0.5;
  double jitter_min = 0.8;  // brightness/contrast/saturation factor range
  double jitter_max = 1.2;

  double blur_prob = 0.5;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 1.5;

  double geometric_prob = 0.5;

  double hed_prob = 0.3;
  double hed_strength = 0.1;
  StainConfig stain;

  void validate() const;
};

ImageTensor random_crop_resize(const ImageTensor& image, double scale_min, double scale_max, RngEngine& rng);
ImageTensor color_jitter(const ImageTensor& image, double factor_min, double factor_max, RngEngine& rng);
ImageTensor random_gaussian_blur(const ImageTensor& image, double sigma_min, double sigma_max, RngEngine& rng);
// One of horizontal flip, vertical flip, rotate 90/180/270 uniformly;
// quarter turns are only drawn for square images so dimensions never change.
ImageTensor random_geometric(const ImageTensor& image, RngEngine& rng);

ImageTensor apply_pipeline(const AugmentPipeline& pipeline, const ImageTensor& image, RngEngine& rng);

// Two independently augmented views of the same source image.
std::pair<ImageTensor, ImageTensor> make_positive_pair(const AugmentPipeline& pipeline, const ImageTensor& image,
                                                       RngEngine& rng);

}  // namespace chl
