#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dan/gray_image.hpp"
#include "dan/tensor.hpp"

// Hot data-parallel loops, in two interchangeable flavours: dan::kernels holds
// the OpenMP implementations used everywhere, dan::kernels::ref holds plain
// serial loops kept as the reference the tests compare against. Both flavours
// are written gather style -- each output element is produced by exactly one
// iteration with a fixed inner summation order -- so results are identical
// regardless of thread count.
//
// Shape conventions: activations are [N, C, H, W], convolution weights are
// [O, C, KH, KW], dense weights are [O, I] with bias [O]. Forward kernels
// overwrite their output; backward kernels accumulate into zero-initialized
// gradients. Callers validate shapes; kernels assume they are consistent.

namespace dan::kernels {

template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, int stride, int pad, Tensor<T>& y);
template <typename T>
void conv2d_backward_input(const Tensor<T>& gy, const Tensor<T>& w, int stride, int pad, Tensor<T>& gx);
template <typename T>
void conv2d_backward_weights(const Tensor<T>& gy, const Tensor<T>& x, int stride, int pad, Tensor<T>& gw);

// 2x2 max pooling with stride 2; ties go to the earliest element in row-major
// window order, and the winning flat input index is recorded for backward.
template <typename T>
void max_pool2d_forward(const Tensor<T>& x, Tensor<T>& y, std::vector<std::uint32_t>& argmax);
template <typename T>
void max_pool2d_backward(const Tensor<T>& gy, const std::vector<std::uint32_t>& argmax, Tensor<T>& gx);

template <typename T>
void dense_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, Tensor<T>& y);
template <typename T>
void dense_backward_input(const Tensor<T>& gy, const Tensor<T>& w, Tensor<T>& gx);
template <typename T>
void dense_backward_weights(const Tensor<T>& gy, const Tensor<T>& x, Tensor<T>& gw);
template <typename T>
void dense_backward_bias(const Tensor<T>& gy, Tensor<T>& gb);

template <typename T>
void relu_forward(const Tensor<T>& x, Tensor<T>& y);
template <typename T>
void relu_backward(const Tensor<T>& gy, const Tensor<T>& x, Tensor<T>& gx);

// Batch normalization over [N, C, H, W] (rank-2 input is treated as C channels
// of 1x1 maps). Statistics are per channel; the variance is the biased one.
template <typename T>
void channel_mean_var(const Tensor<T>& x, Tensor<T>& mean, Tensor<T>& var);
template <typename T>
void batch_norm_apply(const Tensor<T>& x, const Tensor<T>& mean, const Tensor<T>& var,
                      const Tensor<T>& gamma, const Tensor<T>& beta, T epsilon,
                      Tensor<T>& y, Tensor<T>& xhat);
// Backward when the normalization statistics were computed from this batch.
template <typename T>
void batch_norm_backward_train(const Tensor<T>& gy, const Tensor<T>& xhat, const Tensor<T>& gamma,
                               const Tensor<T>& var, T epsilon,
                               Tensor<T>& gx, Tensor<T>& ggamma, Tensor<T>& gbeta);
// Backward when fixed (running) statistics were used.
template <typename T>
void batch_norm_backward_infer(const Tensor<T>& gy, const Tensor<T>& xhat, const Tensor<T>& gamma,
                               const Tensor<T>& var, T epsilon,
                               Tensor<T>& gx, Tensor<T>& ggamma, Tensor<T>& gbeta);

template <typename T>
void apply_mask(const Tensor<T>& x, const Tensor<T>& mask, Tensor<T>& y);
template <typename T>
void apply_mask_accumulate(const Tensor<T>& gy, const Tensor<T>& mask, Tensor<T>& gx);

// Corner-aligned bilinear doubling: [N, C, H, W] -> [N, C, 2H, 2W].
template <typename T>
void upscale2x_forward(const Tensor<T>& x, Tensor<T>& y);
template <typename T>
void upscale2x_backward(const Tensor<T>& gy, Tensor<T>& gx);

/// Inverse of a similarity map, as applied to output pixel coordinates:
/// p_src = [[a, -b], [b, a]] * p_dst + (tx, ty).
struct InverseMap {
  double a = 1.0, b = 0.0, tx = 0.0, ty = 0.0;
};

/// Bilinear sample with zero padding outside the image support. Exact at
/// integer coordinates.
double bilinear_sample(const GrayImage& image, double x, double y);

void warp_bilinear(const GrayImage& src, const InverseMap& inverse, GrayImage& out);

/// Truncated nearest-landmark heatmap: 1 / (1 + min_i ||p - s_i||) wherever
/// that minimum distance is at most `radius`, exactly zero elsewhere. The
/// OpenMP flavour only evaluates candidate pixels near some landmark; the
/// reference flavour evaluates the full field and then masks it.
void heatmap_truncated(const double* points_xy, std::size_t point_count, double radius, GrayImage& out);

namespace ref {

template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, int stride, int pad, Tensor<T>& y);
template <typename T>
void conv2d_backward_input(const Tensor<T>& gy, const Tensor<T>& w, int stride, int pad, Tensor<T>& gx);
template <typename T>
void conv2d_backward_weights(const Tensor<T>& gy, const Tensor<T>& x, int stride, int pad, Tensor<T>& gw);
template <typename T>
void max_pool2d_forward(const Tensor<T>& x, Tensor<T>& y, std::vector<std::uint32_t>& argmax);
template <typename T>
void max_pool2d_backward(const Tensor<T>& gy, const std::vector<std::uint32_t>& argmax, Tensor<T>& gx);
template <typename T>
void dense_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, Tensor<T>& y);
template <typename T>
void dense_backward_input(const Tensor<T>& gy, const Tensor<T>& w, Tensor<T>& gx);
template <typename T>
void dense_backward_weights(const Tensor<T>& gy, const Tensor<T>& x, Tensor<T>& gw);
template <typename T>
void dense_backward_bias(const Tensor<T>& gy, Tensor<T>& gb);
template <typename T>
void relu_forward(const Tensor<T>& x, Tensor<T>& y);
template <typename T>
void relu_backward(const Tensor<T>& gy, const Tensor<T>& x, Tensor<T>& gx);
template <typename T>
void channel_mean_var(const Tensor<T>& x, Tensor<T>& mean, Tensor<T>& var);
template <typename T>
void batch_norm_apply(const Tensor<T>& x, const Tensor<T>& mean, const Tensor<T>& var,
                      const Tensor<T>& gamma, const Tensor<T>& beta, T epsilon,
                      Tensor<T>& y, Tensor<T>& xhat);
template <typename T>
void batch_norm_backward_train(const Tensor<T>& gy, const Tensor<T>& xhat, const Tensor<T>& gamma,
                               const Tensor<T>& var, T epsilon,
                               Tensor<T>& gx, Tensor<T>& ggamma, Tensor<T>& gbeta);
template <typename T>
void batch_norm_backward_infer(const Tensor<T>& gy, const Tensor<T>& xhat, const Tensor<T>& gamma,
                               const Tensor<T>& var, T epsilon,
                               Tensor<T>& gx, Tensor<T>& ggamma, Tensor<T>& gbeta);
template <typename T>
void apply_mask(const Tensor<T>& x, const Tensor<T>& mask, Tensor<T>& y);
template <typename T>
void apply_mask_accumulate(const Tensor<T>& gy, const Tensor<T>& mask, Tensor<T>& gx);
template <typename T>
void upscale2x_forward(const Tensor<T>& x, Tensor<T>& y);
template <typename T>
void upscale2x_backward(const Tensor<T>& gy, Tensor<T>& gx);

void warp_bilinear(const GrayImage& src, const InverseMap& inverse, GrayImage& out);
void heatmap_truncated(const double* points_xy, std::size_t point_count, double radius, GrayImage& out);

}  // namespace ref

}  // namespace dan::kernels
