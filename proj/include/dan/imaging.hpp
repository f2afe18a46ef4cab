#pragma once

#include "dan/geometry.hpp"
#include "dan/gray_image.hpp"

namespace dan {

/// Bilinear sample with zero contribution from coordinates outside the image.
/// Exact at integer coordinates.
double bilinear_sample(const GrayImage& image, double x, double y);

/// Resample under a similarity: out(p) = sample(image, t^{-1}(p)). The output
/// is out_width x out_height; the identity transform at equal size copies the
/// input bit for bit.
GrayImage warp_image(const GrayImage& image, const SimilarityTransform& t, int out_width,
                     int out_height);

/// Nearest-landmark heatmap 1 / (1 + min_i ||p - s_i||), evaluated only where
/// the nearest landmark is within `radius`; all other pixels are exactly zero.
GrayImage generate_heatmap(const Shape& landmarks, int width, int height, double radius = 16.0);

/// Corner-aligned bilinear doubling of a 56x56 image to 112x112.
GrayImage upscale_2x(const GrayImage& image);

/// Zero-mean, unit-variance intensity normalization with the standard
/// deviation floored at 1e-6; a constant image maps to all zeros.
GrayImage standardize_image(const GrayImage& image);

}  // namespace dan
