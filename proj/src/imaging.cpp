#include "dan/imaging.hpp"

#include <cmath>
#include <stdexcept>

#include "dan/kernels.hpp"
#include "dan/tensor.hpp"

namespace dan {

double bilinear_sample(const GrayImage& image, double x, double y) {
  return kernels::bilinear_sample(image, x, y);
}

GrayImage warp_image(const GrayImage& image, const SimilarityTransform& t, int out_width,
                     int out_height) {
  if (image.empty()) throw std::invalid_argument("warp_image: empty input image");
  if (out_width <= 0 || out_height <= 0) {
    throw std::invalid_argument("warp_image: output extents must be positive");
  }
  const SimilarityTransform inv = invert_transform(t);
  GrayImage out(out_width, out_height);
  kernels::warp_bilinear(image, {inv.a, inv.b, inv.tx, inv.ty}, out);
  return out;
}

GrayImage generate_heatmap(const Shape& landmarks, int width, int height, double radius) {
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("generate_heatmap: extents must be positive");
  }
  if (!(radius > 0.0)) throw std::invalid_argument("generate_heatmap: radius must be positive");
  for (const Vec2& p : landmarks.points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw std::invalid_argument("generate_heatmap: landmarks must be finite");
    }
  }
  GrayImage out(width, height);
  kernels::heatmap_truncated(&landmarks.points[0].x, kLandmarkCount, radius, out);
  return out;
}

GrayImage upscale_2x(const GrayImage& image) {
  if (image.width != 56 || image.height != 56) {
    throw std::invalid_argument("upscale_2x: expected a 56x56 image");
  }
  Tensor<double> x({1, 1, static_cast<std::size_t>(image.height),
                    static_cast<std::size_t>(image.width)},
                   image.pixels);
  Tensor<double> y({1, 1, static_cast<std::size_t>(2 * image.height),
                    static_cast<std::size_t>(2 * image.width)});
  kernels::upscale2x_forward(x, y);
  GrayImage out(2 * image.width, 2 * image.height);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] = y[i];
  return out;
}

GrayImage standardize_image(const GrayImage& image) {
  if (image.empty()) throw std::invalid_argument("standardize_image: empty image");
  const double count = static_cast<double>(image.pixels.size());
  double sum = 0.0;
  for (double v : image.pixels) sum += v;
  const double mean = sum / count;
  double sq = 0.0;
  for (double v : image.pixels) sq += (v - mean) * (v - mean);
  const double stddev = std::sqrt(sq / count);
  GrayImage out(image.width, image.height);
  // An image without usable contrast maps to exact zeros rather than
  // rounding residue divided by a tiny deviation.
  if (stddev <= 1e-6) return out;
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    out.pixels[i] = (image.pixels[i] - mean) / stddev;
  }
  return out;
}

}  // namespace dan
