#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "dan/kernels.hpp"

// Serial reference implementations. These follow the mathematical definitions
// as directly as possible -- one nested loop per index in the formula, no
// blocking, no candidate pruning -- and exist as the oracle the OpenMP
// kernels are tested against (and as a readable statement of the semantics).

namespace dan::kernels::ref {

using i64 = std::int64_t;

namespace {

template <typename T>
T& at4(Tensor<T>& t, i64 a, i64 b, i64 c, i64 d) {
  return t[((a * static_cast<i64>(t.dim(1)) + b) * static_cast<i64>(t.dim(2)) + c) *
               static_cast<i64>(t.dim(3)) +
           d];
}

template <typename T>
T get4(const Tensor<T>& t, i64 a, i64 b, i64 c, i64 d) {
  return t[((a * static_cast<i64>(t.dim(1)) + b) * static_cast<i64>(t.dim(2)) + c) *
               static_cast<i64>(t.dim(3)) +
           d];
}

}  // namespace

template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, int stride, int pad, Tensor<T>& y) {
  const i64 n_count = x.dim(0), c_count = x.dim(1), h = x.dim(2), wid = x.dim(3);
  const i64 o_count = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const i64 oh = y.dim(2), ow = y.dim(3);
  for (i64 n = 0; n < n_count; ++n)
    for (i64 o = 0; o < o_count; ++o)
      for (i64 oy = 0; oy < oh; ++oy)
        for (i64 ox = 0; ox < ow; ++ox) {
          T acc{};
          for (i64 c = 0; c < c_count; ++c)
            for (i64 ky = 0; ky < kh; ++ky)
              for (i64 kx = 0; kx < kw; ++kx) {
                const i64 iy = oy * stride - pad + ky;
                const i64 ix = ox * stride - pad + kx;
                if (iy >= 0 && iy < h && ix >= 0 && ix < wid)
                  acc += get4(x, n, c, iy, ix) * get4(w, o, c, ky, kx);
              }
          at4(y, n, o, oy, ox) = acc;
        }
}

template <typename T>
void conv2d_backward_input(const Tensor<T>& gy, const Tensor<T>& w, int stride, int pad,
                           Tensor<T>& gx) {
  const i64 n_count = gx.dim(0), c_count = gx.dim(1), h = gx.dim(2), wid = gx.dim(3);
  const i64 o_count = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const i64 oh = gy.dim(2), ow = gy.dim(3);
  for (i64 n = 0; n < n_count; ++n)
    for (i64 o = 0; o < o_count; ++o)
      for (i64 oy = 0; oy < oh; ++oy)
        for (i64 ox = 0; ox < ow; ++ox)
          for (i64 c = 0; c < c_count; ++c)
            for (i64 ky = 0; ky < kh; ++ky)
              for (i64 kx = 0; kx < kw; ++kx) {
                const i64 iy = oy * stride - pad + ky;
                const i64 ix = ox * stride - pad + kx;
                if (iy >= 0 && iy < h && ix >= 0 && ix < wid)
                  at4(gx, n, c, iy, ix) += get4(gy, n, o, oy, ox) * get4(w, o, c, ky, kx);
              }
}

template <typename T>
void conv2d_backward_weights(const Tensor<T>& gy, const Tensor<T>& x, int stride, int pad,
                             Tensor<T>& gw) {
  const i64 n_count = x.dim(0), c_count = x.dim(1), h = x.dim(2), wid = x.dim(3);
  const i64 o_count = gw.dim(0), kh = gw.dim(2), kw = gw.dim(3);
  const i64 oh = gy.dim(2), ow = gy.dim(3);
  for (i64 n = 0; n < n_count; ++n)
    for (i64 o = 0; o < o_count; ++o)
      for (i64 oy = 0; oy < oh; ++oy)
        for (i64 ox = 0; ox < ow; ++ox)
          for (i64 c = 0; c < c_count; ++c)
            for (i64 ky = 0; ky < kh; ++ky)
              for (i64 kx = 0; kx < kw; ++kx) {
                const i64 iy = oy * stride - pad + ky;
                const i64 ix = ox * stride - pad + kx;
                if (iy >= 0 && iy < h && ix >= 0 && ix < wid)
                  at4(gw, o, c, ky, kx) += get4(gy, n, o, oy, ox) * get4(x, n, c, iy, ix);
              }
}

template <typename T>
void max_pool2d_forward(const Tensor<T>& x, Tensor<T>& y, std::vector<std::uint32_t>& argmax) {
  const i64 n_count = x.dim(0), c_count = x.dim(1), h = x.dim(2), wid = x.dim(3);
  const i64 oh = h / 2, ow = wid / 2;
  argmax.resize(static_cast<std::size_t>(n_count * c_count * oh * ow));
  std::size_t out_i = 0;
  for (i64 n = 0; n < n_count; ++n)
    for (i64 c = 0; c < c_count; ++c)
      for (i64 oy = 0; oy < oh; ++oy)
        for (i64 ox = 0; ox < ow; ++ox) {
          T best{};
          i64 best_idx = -1;
          for (i64 dy = 0; dy < 2; ++dy)
            for (i64 dx = 0; dx < 2; ++dx) {
              const i64 iy = 2 * oy + dy, ix = 2 * ox + dx;
              const i64 flat = ((n * c_count + c) * h + iy) * wid + ix;
              if (best_idx < 0 || x[flat] > best) {
                best = x[flat];
                best_idx = flat;
              }
            }
          y[out_i] = best;
          argmax[out_i] = static_cast<std::uint32_t>(best_idx);
          ++out_i;
        }
}

template <typename T>
void max_pool2d_backward(const Tensor<T>& gy, const std::vector<std::uint32_t>& argmax,
                         Tensor<T>& gx) {
  for (std::size_t i = 0; i < gy.size(); ++i) gx[argmax[i]] += gy[i];
}

template <typename T>
void dense_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, Tensor<T>& y) {
  const i64 n_count = x.dim(0), in = x.dim(1), out = w.dim(0);
  for (i64 n = 0; n < n_count; ++n)
    for (i64 j = 0; j < out; ++j) {
      T acc = b[j];
      for (i64 i = 0; i < in; ++i) acc += x[n * in + i] * w[j * in + i];
      y[n * out + j] = acc;
    }
}

template <typename T>
void dense_backward_input(const Tensor<T>& gy, const Tensor<T>& w, Tensor<T>& gx) {
  const i64 n_count = gx.dim(0), in = gx.dim(1), out = w.dim(0);
  for (i64 n = 0; n < n_count; ++n)
    for (i64 i = 0; i < in; ++i)
      for (i64 j = 0; j < out; ++j) gx[n * in + i] += gy[n * out + j] * w[j * in + i];
}

template <typename T>
void dense_backward_weights(const Tensor<T>& gy, const Tensor<T>& x, Tensor<T>& gw) {
  const i64 out = gw.dim(0), in = gw.dim(1), n_count = x.dim(0);
  for (i64 j = 0; j < out; ++j)
    for (i64 i = 0; i < in; ++i)
      for (i64 n = 0; n < n_count; ++n) gw[j * in + i] += gy[n * out + j] * x[n * in + i];
}

template <typename T>
void dense_backward_bias(const Tensor<T>& gy, Tensor<T>& gb) {
  const i64 out = gb.dim(0), n_count = gy.dim(0);
  for (i64 j = 0; j < out; ++j)
    for (i64 n = 0; n < n_count; ++n) gb[j] += gy[n * out + j];
}

template <typename T>
void relu_forward(const Tensor<T>& x, Tensor<T>& y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{} ? x[i] : T{};
}

template <typename T>
void relu_backward(const Tensor<T>& gy, const Tensor<T>& x, Tensor<T>& gx) {
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] > T{}) gx[i] += gy[i];
}

namespace {

struct ChannelDims {
  i64 n, c, plane;
};

template <typename T>
ChannelDims channel_dims(const Tensor<T>& x) {
  if (x.rank() == 2) return {static_cast<i64>(x.dim(0)), static_cast<i64>(x.dim(1)), 1};
  return {static_cast<i64>(x.dim(0)), static_cast<i64>(x.dim(1)),
          static_cast<i64>(x.dim(2) * x.dim(3))};
}

}  // namespace

template <typename T>
void channel_mean_var(const Tensor<T>& x, Tensor<T>& mean, Tensor<T>& var) {
  const auto [n_count, c_count, plane] = channel_dims(x);
  const i64 count = n_count * plane;
  for (i64 c = 0; c < c_count; ++c) {
    T sum{};
    for (i64 n = 0; n < n_count; ++n)
      for (i64 i = 0; i < plane; ++i) sum += x[(n * c_count + c) * plane + i];
    const T mu = sum / static_cast<T>(count);
    T sq{};
    for (i64 n = 0; n < n_count; ++n)
      for (i64 i = 0; i < plane; ++i) {
        const T d = x[(n * c_count + c) * plane + i] - mu;
        sq += d * d;
      }
    mean[c] = mu;
    var[c] = sq / static_cast<T>(count);
  }
}

template <typename T>
void batch_norm_apply(const Tensor<T>& x, const Tensor<T>& mean, const Tensor<T>& var,
                      const Tensor<T>& gamma, const Tensor<T>& beta, T epsilon, Tensor<T>& y,
                      Tensor<T>& xhat) {
  const auto [n_count, c_count, plane] = channel_dims(x);
  for (i64 n = 0; n < n_count; ++n)
    for (i64 c = 0; c < c_count; ++c) {
      const T inv = T{1} / std::sqrt(var[c] + epsilon);
      for (i64 i = 0; i < plane; ++i) {
        const i64 flat = (n * c_count + c) * plane + i;
        const T h = (x[flat] - mean[c]) * inv;
        xhat[flat] = h;
        y[flat] = gamma[c] * h + beta[c];
      }
    }
}

template <typename T>
void batch_norm_backward_train(const Tensor<T>& gy, const Tensor<T>& xhat, const Tensor<T>& gamma,
                               const Tensor<T>& var, T epsilon, Tensor<T>& gx, Tensor<T>& ggamma,
                               Tensor<T>& gbeta) {
  const auto [n_count, c_count, plane] = channel_dims(gy);
  const i64 count = n_count * plane;
  for (i64 c = 0; c < c_count; ++c) {
    T s{}, sx{};
    for (i64 n = 0; n < n_count; ++n)
      for (i64 i = 0; i < plane; ++i) {
        const i64 flat = (n * c_count + c) * plane + i;
        s += gy[flat];
        sx += gy[flat] * xhat[flat];
      }
    ggamma[c] += sx;
    gbeta[c] += s;
    const T inv = T{1} / std::sqrt(var[c] + epsilon);
    for (i64 n = 0; n < n_count; ++n)
      for (i64 i = 0; i < plane; ++i) {
        const i64 flat = (n * c_count + c) * plane + i;
        gx[flat] += gamma[c] * inv *
                    (gy[flat] - s / static_cast<T>(count) -
                     xhat[flat] * (sx / static_cast<T>(count)));
      }
  }
}

template <typename T>
void batch_norm_backward_infer(const Tensor<T>& gy, const Tensor<T>& xhat, const Tensor<T>& gamma,
                               const Tensor<T>& var, T epsilon, Tensor<T>& gx, Tensor<T>& ggamma,
                               Tensor<T>& gbeta) {
  const auto [n_count, c_count, plane] = channel_dims(gy);
  for (i64 c = 0; c < c_count; ++c) {
    const T inv = T{1} / std::sqrt(var[c] + epsilon);
    for (i64 n = 0; n < n_count; ++n)
      for (i64 i = 0; i < plane; ++i) {
        const i64 flat = (n * c_count + c) * plane + i;
        ggamma[c] += gy[flat] * xhat[flat];
        gbeta[c] += gy[flat];
        gx[flat] += gamma[c] * inv * gy[flat];
      }
  }
}

template <typename T>
void apply_mask(const Tensor<T>& x, const Tensor<T>& mask, Tensor<T>& y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * mask[i];
}

template <typename T>
void apply_mask_accumulate(const Tensor<T>& gy, const Tensor<T>& mask, Tensor<T>& gx) {
  for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * mask[i];
}

namespace {

/// Source position and weights for corner-aligned doubling of an axis.
void axis_tap(i64 i, i64 in, i64& lo, i64& hi, double& w_lo, double& w_hi) {
  const double src = (in == 1) ? 0.0
                               : static_cast<double>(i) * static_cast<double>(in - 1) /
                                     static_cast<double>(2 * in - 1);
  lo = static_cast<i64>(std::floor(src));
  if (lo > in - 2) lo = in - 2;
  if (lo < 0) lo = 0;
  hi = lo + 1 < in ? lo + 1 : lo;
  w_hi = src - static_cast<double>(lo);
  w_lo = 1.0 - w_hi;
}

}  // namespace

template <typename T>
void upscale2x_forward(const Tensor<T>& x, Tensor<T>& y) {
  const i64 n_count = x.dim(0), c_count = x.dim(1), h = x.dim(2), wid = x.dim(3);
  for (i64 n = 0; n < n_count; ++n)
    for (i64 c = 0; c < c_count; ++c)
      for (i64 oy = 0; oy < 2 * h; ++oy)
        for (i64 ox = 0; ox < 2 * wid; ++ox) {
          i64 ylo, yhi, xlo, xhi;
          double wy0, wy1, wx0, wx1;
          axis_tap(oy, h, ylo, yhi, wy0, wy1);
          axis_tap(ox, wid, xlo, xhi, wx0, wx1);
          const double v = wy0 * (wx0 * get4(x, n, c, ylo, xlo) + wx1 * get4(x, n, c, ylo, xhi)) +
                           wy1 * (wx0 * get4(x, n, c, yhi, xlo) + wx1 * get4(x, n, c, yhi, xhi));
          at4(y, n, c, oy, ox) = static_cast<T>(v);
        }
}

template <typename T>
void upscale2x_backward(const Tensor<T>& gy, Tensor<T>& gx) {
  const i64 n_count = gx.dim(0), c_count = gx.dim(1), h = gx.dim(2), wid = gx.dim(3);
  for (i64 n = 0; n < n_count; ++n)
    for (i64 c = 0; c < c_count; ++c)
      for (i64 oy = 0; oy < 2 * h; ++oy)
        for (i64 ox = 0; ox < 2 * wid; ++ox) {
          i64 ylo, yhi, xlo, xhi;
          double wy0, wy1, wx0, wx1;
          axis_tap(oy, h, ylo, yhi, wy0, wy1);
          axis_tap(ox, wid, xlo, xhi, wx0, wx1);
          const T g = get4(gy, n, c, oy, ox);
          at4(gx, n, c, ylo, xlo) += static_cast<T>(wy0 * wx0 * g);
          at4(gx, n, c, ylo, xhi) += static_cast<T>(wy0 * wx1 * g);
          at4(gx, n, c, yhi, xlo) += static_cast<T>(wy1 * wx0 * g);
          at4(gx, n, c, yhi, xhi) += static_cast<T>(wy1 * wx1 * g);
        }
}

void warp_bilinear(const GrayImage& src, const InverseMap& inv, GrayImage& out) {
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      const double sx = inv.a * x - inv.b * y + inv.tx;
      const double sy = inv.b * x + inv.a * y + inv.ty;
      out.at(x, y) = kernels::bilinear_sample(src, sx, sy);
    }
}

void heatmap_truncated(const double* points_xy, std::size_t point_count, double radius,
                       GrayImage& out) {
  // Full-field evaluation followed by masking: every pixel computes the exact
  // nearest-landmark distance, then values beyond the radius are zeroed.
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t p = 0; p < point_count; ++p) {
        const double dx = static_cast<double>(x) - points_xy[2 * p];
        const double dy = static_cast<double>(y) - points_xy[2 * p + 1];
        const double d2 = dx * dx + dy * dy;
        if (d2 < best) best = d2;
      }
      const double value = 1.0 / (1.0 + std::sqrt(best));
      out.at(x, y) = (best <= radius * radius) ? value : 0.0;
    }
}

#define DAN_INSTANTIATE_REF_KERNELS(T)                                                            \
  template void conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&, int, int, Tensor<T>&);      \
  template void conv2d_backward_input<T>(const Tensor<T>&, const Tensor<T>&, int, int,            \
                                         Tensor<T>&);                                             \
  template void conv2d_backward_weights<T>(const Tensor<T>&, const Tensor<T>&, int, int,          \
                                           Tensor<T>&);                                           \
  template void max_pool2d_forward<T>(const Tensor<T>&, Tensor<T>&, std::vector<std::uint32_t>&); \
  template void max_pool2d_backward<T>(const Tensor<T>&, const std::vector<std::uint32_t>&,       \
                                       Tensor<T>&);                                               \
  template void dense_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,            \
                                 Tensor<T>&);                                                     \
  template void dense_backward_input<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>&);          \
  template void dense_backward_weights<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>&);        \
  template void dense_backward_bias<T>(const Tensor<T>&, Tensor<T>&);                             \
  template void relu_forward<T>(const Tensor<T>&, Tensor<T>&);                                    \
  template void relu_backward<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>&);                 \
  template void channel_mean_var<T>(const Tensor<T>&, Tensor<T>&, Tensor<T>&);                    \
  template void batch_norm_apply<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,         \
                                    const Tensor<T>&, const Tensor<T>&, T, Tensor<T>&,            \
                                    Tensor<T>&);                                                  \
  template void batch_norm_backward_train<T>(const Tensor<T>&, const Tensor<T>&,                  \
                                             const Tensor<T>&, const Tensor<T>&, T, Tensor<T>&,   \
                                             Tensor<T>&, Tensor<T>&);                             \
  template void batch_norm_backward_infer<T>(const Tensor<T>&, const Tensor<T>&,                  \
                                             const Tensor<T>&, const Tensor<T>&, T, Tensor<T>&,   \
                                             Tensor<T>&, Tensor<T>&);                             \
  template void apply_mask<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>&);                    \
  template void apply_mask_accumulate<T>(const Tensor<T>&, const Tensor<T>&, Tensor<T>&);         \
  template void upscale2x_forward<T>(const Tensor<T>&, Tensor<T>&);                               \
  template void upscale2x_backward<T>(const Tensor<T>&, Tensor<T>&);

DAN_INSTANTIATE_REF_KERNELS(float)
DAN_INSTANTIATE_REF_KERNELS(double)

}  // namespace dan::kernels::ref
