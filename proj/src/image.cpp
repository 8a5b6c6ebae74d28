#include "chl/image.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace chl {

void ImageTensor::validate() const {
  if (height < 1 || width < 1) throw DataError("image dimensions must be positive");
  if (pixels.cols() != static_cast<Eigen::Index>(height) * width) throw DataError("image pixel count does not match dimensions");
  if ((pixels.array() < 0.0).any() || (pixels.array() > 255.0).any()) throw DataError("image values outside [0, 255]");
  if (!pixels.allFinite()) throw DataError("image contains non-finite values");
}

ImageTensor resize_bilinear(const ImageTensor& image, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw DataError("resize target must be positive");
  if (out_h == image.height && out_w == image.width) return image;
  ImageTensor out(out_h, out_w);
  const double sy = static_cast<double>(image.height) / out_h;
  const double sx = static_cast<double>(image.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(image.height - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(image.width - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = image.at(c, y0, x0) * (1.0 - wx) + image.at(c, y0, x1) * wx;
        const double bot = image.at(c, y1, x0) * (1.0 - wx) + image.at(c, y1, x1) * wx;
        out.at(c, y, x) = top * (1.0 - wy) + bot * wy;
      }
    }
  }
  return out;
}

ImageTensor crop(const ImageTensor& image, int top, int left, int crop_h, int crop_w) {
  if (crop_h < 1 || crop_w < 1 || top < 0 || left < 0 || top + crop_h > image.height || left + crop_w > image.width)
    throw DataError("crop window exceeds image dimensions");
  ImageTensor out(crop_h, crop_w);
  for (int y = 0; y < crop_h; ++y)
    for (int x = 0; x < crop_w; ++x)
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = image.at(c, top + y, left + x);
  return out;
}

ImageTensor flip_horizontal(const ImageTensor& image) {
  ImageTensor out(image.height, image.width);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = image.at(c, y, image.width - 1 - x);
  return out;
}

ImageTensor flip_vertical(const ImageTensor& image) {
  ImageTensor out(image.height, image.width);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = image.at(c, image.height - 1 - y, x);
  return out;
}

ImageTensor rotate90(const ImageTensor& image) {
  ImageTensor out(image.width, image.height);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(c, image.width - 1 - x, y) = image.at(c, y, x);
  return out;
}

ImageTensor rotate180(const ImageTensor& image) { return flip_horizontal(flip_vertical(image)); }

ImageTensor rotate270(const ImageTensor& image) {
  ImageTensor out(image.width, image.height);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c) out.at(c, x, image.height - 1 - y) = image.at(c, y, x);
  return out;
}

ImageTensor gaussian_blur(const ImageTensor& image, double sigma, int kernel_size) {
  if (kernel_size < 1 || kernel_size % 2 == 0) throw DataError("blur kernel size must be odd and positive");
  if (sigma <= 0.0) return image;
  const int r = kernel_size / 2;
  std::vector<double> k(kernel_size);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[i + r];
  }
  for (double& v : k) v /= sum;

  ImageTensor tmp(image.height, image.width);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      double acc[3] = {0, 0, 0};
      for (int i = -r; i <= r; ++i) {
        const int xx = std::clamp(x + i, 0, image.width - 1);
        for (int c = 0; c < 3; ++c) acc[c] += k[i + r] * image.at(c, y, xx);
      }
      for (int c = 0; c < 3; ++c) tmp.at(c, y, x) = acc[c];
    }
  ImageTensor out(image.height, image.width);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      double acc[3] = {0, 0, 0};
      for (int i = -r; i <= r; ++i) {
        const int yy = std::clamp(y + i, 0, image.height - 1);
        for (int c = 0; c < 3; ++c) acc[c] += k[i + r] * tmp.at(c, yy, x);
      }
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = acc[c];
    }
  return out;
}

}  // namespace chl
