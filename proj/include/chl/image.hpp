#pragma once

#include <Eigen/Core>

#include "chl/error.hpp"

namespace chl {

// RGB raster with intensities in [0, 255], stored as a dense 3 x n matrix
// (n = height * width, column p = y * width + x). Values are kept as reals;
// quantization to 8-bit happens only at PNG boundaries.
struct ImageTensor {
  Eigen::Matrix3Xd pixels;
  int height = 0;
  int width = 0;

  ImageTensor() = default;
  ImageTensor(int h, int w) : pixels(Eigen::Matrix3Xd::Zero(3, static_cast<Eigen::Index>(h) * w)), height(h), width(w) {}

  double& at(int c, int y, int x) { return pixels(c, static_cast<Eigen::Index>(y) * width + x); }
  double at(int c, int y, int x) const { return pixels(c, static_cast<Eigen::Index>(y) * width + x); }

  Eigen::Index pixel_count() const { return pixels.cols(); }
  void validate() const;
};

// Bilinear resample to out_h x out_w (half-pixel center convention).
ImageTensor resize_bilinear(const ImageTensor& image, int out_h, int out_w);

// Axis-aligned crop; throws DataError when the window leaves the image.
ImageTensor crop(const ImageTensor& image, int top, int left, int crop_h, int crop_w);

ImageTensor flip_horizontal(const ImageTensor& image);
ImageTensor flip_vertical(const ImageTensor& image);
ImageTensor rotate90(const ImageTensor& image);   // counter-clockwise
ImageTensor rotate180(const ImageTensor& image);
ImageTensor rotate270(const ImageTensor& image);

// Separable Gaussian blur with clamp-to-edge borders; kernel_size must be odd.
ImageTensor gaussian_blur(const ImageTensor& image, double sigma, int kernel_size);

// Rec. 601 luma of one pixel column.
inline double luminance(const Eigen::Ref<const Eigen::Vector3d>& rgb) {
  return 0.299 * rgb(0) + 0.587 * rgb(1) + 0.114 * rgb(2);
}

inline void clamp_pixels(ImageTensor& image) {
  image.pixels = image.pixels.cwiseMax(0.0).cwiseMin(255.0);
}

}  // namespace chl
