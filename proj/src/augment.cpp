#include "chl/augment.hpp"

#include <algorithm>
#include <cmath>

#include "chl/error.hpp"

namespace chl {

void AugmentPipeline::validate() const {
  auto check_prob = [](double p, const char* name) {
    if (p < 0.0 || p > 1.0) throw ConfigError(std::string(name) + " probability must be in [0, 1]");
  };
  check_prob(crop_prob, "crop");
  check_prob(jitter_prob, "jitter");
  check_prob(blur_prob, "blur");
  check_prob(geometric_prob, "geometric");
  check_prob(hed_prob, "hed");
  if (crop_scale_min <= 0.0 || crop_scale_max > 1.0 || crop_scale_min > crop_scale_max)
    throw ConfigError("crop scale range must satisfy 0 < min <= max <= 1");
  if (jitter_min <= 0.0 || jitter_min > jitter_max) throw ConfigError("jitter factor range invalid");
  if (blur_sigma_min <= 0.0 || blur_sigma_min > blur_sigma_max) throw ConfigError("blur sigma range invalid");
  if (hed_strength < 0.0 || hed_strength > 1.0) throw ConfigError("hed strength must be in [0, 1]");
  stain.validate();
}

ImageTensor random_crop_resize(const ImageTensor& image, double scale_min, double scale_max, RngEngine& rng) {
  const double scale = uniform_real(rng, scale_min, scale_max);
  const int ch = std::max(1, static_cast<int>(std::lround(scale * image.height)));
  const int cw = std::max(1, static_cast<int>(std::lround(scale * image.width)));
  const int top = uniform_int(rng, 0, image.height - ch);
  const int left = uniform_int(rng, 0, image.width - cw);
  return resize_bilinear(crop(image, top, left, ch, cw), image.height, image.width);
}

ImageTensor color_jitter(const ImageTensor& image, double factor_min, double factor_max, RngEngine& rng) {
  const double fb = uniform_real(rng, factor_min, factor_max);
  const double fc = uniform_real(rng, factor_min, factor_max);
  const double fs = uniform_real(rng, factor_min, factor_max);

  ImageTensor out = image;
  out.pixels *= fb;

  double mean_luma = 0.0;
  for (Eigen::Index p = 0; p < out.pixels.cols(); ++p) mean_luma += luminance(out.pixels.col(p));
  mean_luma /= static_cast<double>(out.pixels.cols());
  out.pixels = ((out.pixels.array() - mean_luma) * fc + mean_luma).matrix();

  for (Eigen::Index p = 0; p < out.pixels.cols(); ++p) {
    const double gray = luminance(out.pixels.col(p));
    out.pixels.col(p) = (gray + fs * (out.pixels.col(p).array() - gray)).matrix();
  }
  clamp_pixels(out);
  return out;
}

ImageTensor random_gaussian_blur(const ImageTensor& image, double sigma_min, double sigma_max, RngEngine& rng) {
  const double sigma = uniform_real(rng, sigma_min, sigma_max);
  int k = std::min(image.height, image.width) / 8;
  if (k % 2 == 0) ++k;
  k = std::max(3, k);
  return gaussian_blur(image, sigma, k);
}

ImageTensor random_geometric(const ImageTensor& image, RngEngine& rng) {
  const bool square = image.height == image.width;
  const int op = uniform_int(rng, 0, square ? 4 : 2);
  switch (op) {
    case 0: return flip_horizontal(image);
    case 1: return flip_vertical(image);
    case 2: return rotate180(image);
    case 3: return rotate90(image);
    default: return rotate270(image);
  }
}

ImageTensor apply_pipeline(const AugmentPipeline& pipeline, const ImageTensor& image, RngEngine& rng) {
  pipeline.validate();
  image.validate();
  ImageTensor out = image;
  if (bernoulli(rng, pipeline.crop_prob))
    out = random_crop_resize(out, pipeline.crop_scale_min, pipeline.crop_scale_max, rng);
  if (bernoulli(rng, pipeline.jitter_prob)) out = color_jitter(out, pipeline.jitter_min, pipeline.jitter_max, rng);
  if (bernoulli(rng, pipeline.blur_prob)) out = random_gaussian_blur(out, pipeline.blur_sigma_min, pipeline.blur_sigma_max, rng);
  if (bernoulli(rng, pipeline.geometric_prob)) out = random_geometric(out, rng);
  if (bernoulli(rng, pipeline.hed_prob)) out = hed_augment(out, pipeline.stain, pipeline.hed_strength, rng);
  clamp_pixels(out);
  return out;
}

std::pair<ImageTensor, ImageTensor> make_positive_pair(const AugmentPipeline& pipeline, const ImageTensor& image,
                                                       RngEngine& rng) {
  RngEngine rng_a = derive_rng(rng(), {0});
  RngEngine rng_b = derive_rng(rng(), {1});
  return {apply_pipeline(pipeline, image, rng_a), apply_pipeline(pipeline, image, rng_b)};
}

}  // namespace chl
