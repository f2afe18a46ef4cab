#include "dan/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

namespace dan::kernels {

using i64 = std::int64_t;

template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, int stride, int pad, Tensor<T>& y) {
  const i64 n_count = x.dim(0), c_count = x.dim(1), h = x.dim(2), wid = x.dim(3);
  const i64 o_count = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const i64 oh = y.dim(2), ow = y.dim(3);
#pragma omp parallel for collapse(2) schedule(static)
  for (i64 n = 0; n < n_count; ++n) {
    for (i64 o = 0; o < o_count; ++o) {
      T* yplane = y.data() + (n * o_count + o) * oh * ow;
      std::fill(yplane, yplane + oh * ow, T{});
      for (i64 c = 0; c < c_count; ++c) {
        const T* xplane = x.data() + (n * c_count + c) * h * wid;
        const T* wkernel = w.data() + (o * c_count + c) * kh * kw;
        for (i64 ky = 0; ky < kh; ++ky) {
          for (i64 kx = 0; kx < kw; ++kx) {
            const T wv = wkernel[ky * kw + kx];
            for (i64 oy = 0; oy < oh; ++oy) {
              const i64 iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= h) continue;
              T* yrow = yplane + oy * ow;
              const T* xrow = xplane + iy * wid;
              if (stride == 1) {
                const i64 shift = kx - pad;
                const i64 ox0 = std::max<i64>(0, -shift);
                const i64 ox1 = std::min<i64>(ow, wid - shift);
                for (i64 ox = ox0; ox < ox1; ++ox) yrow[ox] += wv * xrow[ox + shift];
              } else {
                for (i64 ox = 0; ox < ow; ++ox) {
                  const i64 ix = ox * stride - pad + kx;
                  if (ix >= 0 && ix < wid) yrow[ox] += wv * xrow[ix];
                }
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_input(const Tensor<T>& gy, const Tensor<T>& w, int stride, int pad,
                           Tensor<T>& gx) {
  const i64 n_count = gx.dim(0), c_count = gx.dim(1), h = gx.dim(2), wid = gx.dim(3);
  const i64 o_count = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const i64 oh = gy.dim(2), ow = gy.dim(3);
#pragma omp parallel for collapse(2) schedule(static)
  for (i64 n = 0; n < n_count; ++n) {
    for (i64 c = 0; c < c_count; ++c) {
      T* gxplane = gx.data() + (n * c_count + c) * h * wid;
      for (i64 o = 0; o < o_count; ++o) {
        const T* gyplane = gy.data() + (n * o_count + o) * oh * ow;
        const T* wkernel = w.data() + (o * c_count + c) * kh * kw;
        // Descending tap order makes each element accumulate its
        // contributions in ascending output order, bitwise-matching the
        // reference scatter.
        for (i64 ky = kh - 1; ky >= 0; --ky) {
          for (i64 kx = kw - 1; kx >= 0; --kx) {
            const T wv = wkernel[ky * kw + kx];
            if (stride == 1) {
              // iy = oy - pad + ky  =>  oy = iy + pad - ky, similarly for x.
              const i64 yshift = pad - ky;
              const i64 xshift = pad - kx;
              const i64 iy0 = std::max<i64>(0, -yshift);
              const i64 iy1 = std::min<i64>(h, oh - yshift);
              const i64 ix0 = std::max<i64>(0, -xshift);
              const i64 ix1 = std::min<i64>(wid, ow - xshift);
              for (i64 iy = iy0; iy < iy1; ++iy) {
                T* gxrow = gxplane + iy * wid;
                const T* gyrow = gyplane + (iy + yshift) * ow;
                for (i64 ix = ix0; ix < ix1; ++ix) gxrow[ix] += wv * gyrow[ix + xshift];
              }
            } else {
              for (i64 iy = 0; iy < h; ++iy) {
                const i64 ynum = iy + pad - ky;
                if (ynum < 0 || ynum % stride != 0) continue;
                const i64 oy = ynum / stride;
                if (oy >= oh) continue;
                T* gxrow = gxplane + iy * wid;
                const T* gyrow = gyplane + oy * ow;
                for (i64 ix = 0; ix < wid; ++ix) {
                  const i64 xnum = ix + pad - kx;
                  if (xnum < 0 || xnum % stride != 0) continue;
                  const i64 ox = xnum / stride;
                  if (ox < ow) gxrow[ix] += wv * gyrow[ox];
                }
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_weights(const Tensor<T>& gy, const Tensor<T>& x, int stride, int pad,
                             Tensor<T>& gw) {
  const i64 n_count = x.dim(0), c_count = x.dim(1), h = x.dim(2), wid = x.dim(3);
  const i64 o_count = gw.dim(0), kh = gw.dim(2), kw = gw.dim(3);
  const i64 oh = gy.dim(2), ow = gy.dim(3);
#pragma omp parallel for collapse(2) schedule(static)
  for (i64 o = 0; o < o_count; ++o) {
    for (i64 c = 0; c < c_count; ++c) {
      T* gwkernel = gw.data() + (o * c_count + c) * kh * kw;
      for (i64 ky = 0; ky < kh; ++ky) {
        for (i64 kx = 0; kx < kw; ++kx) {
          T acc{};
          for (i64 n = 0; n < n_count; ++n) {
            const T* gyplane = gy.data() + (n * o_count + o) * oh * ow;
            const T* xplane = x.data() + (n * c_count + c) * h * wid;
            for (i64 oy = 0; oy < oh; ++oy) {
              const i64 iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= h) continue;
              const T* gyrow = gyplane + oy * ow;
              const T* xrow = xplane + iy * wid;
              if (stride == 1) {
                const i64 shift = kx - pad;
                const i64 ox0 = std::max<i64>(0, -shift);
                const i64 ox1 = std::min<i64>(ow, wid - shift);
                for (i64 ox = ox0; ox < ox1; ++ox) acc += gyrow[ox] * xrow[ox + shift];
              } else {
                for (i64 ox = 0; ox < ow; ++ox) {
                  const i64 ix = ox * stride - pad + kx;
                  if (ix >= 0 && ix < wid) acc += gyrow[ox] * xrow[ix];
                }
              }
            }
          }
          gwkernel[ky * kw + kx] += acc;
        }
      }
    }
  }
}

template <typename T>
void max_pool2d_forward(const Tensor<T>& x, Tensor<T>& y, std::vector<std::uint32_t>& argmax) {
  const i64 n_count = x.dim(0), c_count = x.dim(1), h = x.dim(2), wid = x.dim(3);
  const i64 oh = h / 2, ow = wid / 2;
  argmax.resize(static_cast<std::size_t>(n_count * c_count * oh * ow));
#pragma omp parallel for collapse(2) schedule(static)
  for (i64 n = 0; n < n_count; ++n) {
    for (i64 c = 0; c < c_count; ++c) {
      const i64 plane = n * c_count + c;
      const T* xplane = x.data() + plane * h * wid;
      T* yplane = y.data() + plane * oh * ow;
      std::uint32_t* aplane = argmax.data() + plane * oh * ow;
      for (i64 oy = 0; oy < oh; ++oy) {
        for (i64 ox = 0; ox < ow; ++ox) {
          const i64 base = (2 * oy) * wid + 2 * ox;
          // Row-major window order; ties keep the earliest index.
          i64 best = base;
          T best_v = xplane[base];
          const i64 cands[3] = {base + 1, base + wid, base + wid + 1};
          for (i64 cand : cands) {
            if (xplane[cand] > best_v) {
              best_v = xplane[cand];
              best = cand;
            }
          }
          yplane[oy * ow + ox] = best_v;
          aplane[oy * ow + ox] = static_cast<std::uint32_t>(plane * h * wid + best);
        }
      }
    }
  }
}

template <typename T>
void max_pool2d_backward(const Tensor<T>& gy, const std::vector<std::uint32_t>& argmax,
                         Tensor<T>& gx) {
  const i64 total = static_cast<i64>(gy.size());
  // Each input element receives gradient from at most one pooled output, so
  // scattering by argmax writes each gx element at most once.
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < total; ++i) gx[argmax[i]] += gy[i];
}

template <typename T>
void dense_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, Tensor<T>& y) {
  const i64 n_count = x.dim(0), in = x.dim(1);
  const i64 out = w.dim(0);
#pragma omp parallel for collapse(2) schedule(static)
  for (i64 n = 0; n < n_count; ++n) {
    for (i64 j = 0; j < out; ++j) {
      const T* xrow = x.data() + n * in;
      const T* wrow = w.data() + j * in;
      T acc = b[j];
      for (i64 i = 0; i < in; ++i) acc += xrow[i] * wrow[i];
      y[n * out + j] = acc;
    }
  }
}

template <typename T>
void dense_backward_input(const Tensor<T>& gy, const Tensor<T>& w, Tensor<T>& gx) {
  const i64 n_count = gx.dim(0), in = gx.dim(1);
  const i64 out = w.dim(0);
#pragma omp parallel for schedule(static)
  for (i64 n = 0; n < n_count; ++n) {
    T* gxrow = gx.data() + n * in;
    for (i64 j = 0; j < out; ++j) {
      const T g = gy[n * out + j];
      const T* wrow = w.data() + j * in;
      for (i64 i = 0; i < in; ++i) gxrow[i] += g * wrow[i];
    }
  }
}

template <typename T>
void dense_backward_weights(const Tensor<T>& gy, const Tensor<T>& x, Tensor<T>& gw) {
  const i64 out = gw.dim(0), in = gw.dim(1);
  const i64 n_count = x.dim(0);
#pragma omp parallel for schedule(static)
  for (i64 j = 0; j < out; ++j) {
    T* gwrow = gw.data() + j * in;
    for (i64 n = 0; n < n_count; ++n) {
      const T g = gy[n * out + j];
      const T* xrow = x.data() + n * in;
      for (i64 i = 0; i < in; ++i) gwrow[i] += g * xrow[i];
    }
  }
}

template <typename T>
void dense_backward_bias(const Tensor<T>& gy, Tensor<T>& gb) {
  const i64 out = gb.dim(0);
  const i64 n_count = gy.dim(0);
#pragma omp parallel for schedule(static)
  for (i64 j = 0; j < out; ++j) {
    T acc{};
    for (i64 n = 0; n < n_count; ++n) acc += gy[n * out + j];
    gb[j] += acc;
  }
}

template <typename T>
void relu_forward(const Tensor<T>& x, Tensor<T>& y) {
  const i64 total = static_cast<i64>(x.size());
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < total; ++i) y[i] = x[i] > T{} ? x[i] : T{};
}

template <typename T>
void relu_backward(const Tensor<T>& gy, const Tensor<T>& x, Tensor<T>& gx) {
  const i64 total = static_cast<i64>(x.size());
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < total; ++i) {
    if (x[i] > T{}) gx[i] += gy[i];
  }
}

namespace {

/// Channel geometry shared by the batch-norm kernels: [N, C, H, W] has
/// `count = N*H*W` values per channel at stride plan (plane = H*W); rank-2
/// input [N, C] degenerates to plane = 1.
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
#pragma omp parallel for schedule(static)
  for (i64 c = 0; c < c_count; ++c) {
    T sum{};
    for (i64 n = 0; n < n_count; ++n) {
      const T* p = x.data() + (n * c_count + c) * plane;
      for (i64 i = 0; i < plane; ++i) sum += p[i];
    }
    const T mu = sum / static_cast<T>(count);
    T sq{};
    for (i64 n = 0; n < n_count; ++n) {
      const T* p = x.data() + (n * c_count + c) * plane;
      for (i64 i = 0; i < plane; ++i) {
        const T d = p[i] - mu;
        sq += d * d;
      }
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
#pragma omp parallel for collapse(2) schedule(static)
  for (i64 n = 0; n < n_count; ++n) {
    for (i64 c = 0; c < c_count; ++c) {
      const T inv = T{1} / std::sqrt(var[c] + epsilon);
      const T mu = mean[c], g = gamma[c], bt = beta[c];
      const i64 base = (n * c_count + c) * plane;
      for (i64 i = 0; i < plane; ++i) {
        const T h = (x[base + i] - mu) * inv;
        xhat[base + i] = h;
        y[base + i] = g * h + bt;
      }
    }
  }
}

template <typename T>
void batch_norm_backward_train(const Tensor<T>& gy, const Tensor<T>& xhat, const Tensor<T>& gamma,
                               const Tensor<T>& var, T epsilon, Tensor<T>& gx, Tensor<T>& ggamma,
                               Tensor<T>& gbeta) {
  const auto [n_count, c_count, plane] = channel_dims(gy);
  const i64 count = n_count * plane;
  std::vector<T> sum_gy(c_count), sum_gy_xhat(c_count);
#pragma omp parallel for schedule(static)
  for (i64 c = 0; c < c_count; ++c) {
    T s{}, sx{};
    for (i64 n = 0; n < n_count; ++n) {
      const i64 base = (n * c_count + c) * plane;
      for (i64 i = 0; i < plane; ++i) {
        s += gy[base + i];
        sx += gy[base + i] * xhat[base + i];
      }
    }
    sum_gy[c] = s;
    sum_gy_xhat[c] = sx;
    ggamma[c] += sx;
    gbeta[c] += s;
  }
#pragma omp parallel for collapse(2) schedule(static)
  for (i64 n = 0; n < n_count; ++n) {
    for (i64 c = 0; c < c_count; ++c) {
      const T inv = T{1} / std::sqrt(var[c] + epsilon);
      const T k = gamma[c] * inv;
      const T mean_gy = sum_gy[c] / static_cast<T>(count);
      const T mean_gy_xhat = sum_gy_xhat[c] / static_cast<T>(count);
      const i64 base = (n * c_count + c) * plane;
      for (i64 i = 0; i < plane; ++i) {
        gx[base + i] += k * (gy[base + i] - mean_gy - xhat[base + i] * mean_gy_xhat);
      }
    }
  }
}

template <typename T>
void batch_norm_backward_infer(const Tensor<T>& gy, const Tensor<T>& xhat, const Tensor<T>& gamma,
                               const Tensor<T>& var, T epsilon, Tensor<T>& gx, Tensor<T>& ggamma,
                               Tensor<T>& gbeta) {
  const auto [n_count, c_count, plane] = channel_dims(gy);
#pragma omp parallel for schedule(static)
  for (i64 c = 0; c < c_count; ++c) {
    T s{}, sx{};
    for (i64 n = 0; n < n_count; ++n) {
      const i64 base = (n * c_count + c) * plane;
      for (i64 i = 0; i < plane; ++i) {
        s += gy[base + i];
        sx += gy[base + i] * xhat[base + i];
      }
    }
    ggamma[c] += sx;
    gbeta[c] += s;
  }
#pragma omp parallel for collapse(2) schedule(static)
  for (i64 n = 0; n < n_count; ++n) {
    for (i64 c = 0; c < c_count; ++c) {
      const T k = gamma[c] / std::sqrt(var[c] + epsilon);
      const i64 base = (n * c_count + c) * plane;
      for (i64 i = 0; i < plane; ++i) gx[base + i] += k * gy[base + i];
    }
  }
}

template <typename T>
void apply_mask(const Tensor<T>& x, const Tensor<T>& mask, Tensor<T>& y) {
  const i64 total = static_cast<i64>(x.size());
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < total; ++i) y[i] = x[i] * mask[i];
}

template <typename T>
void apply_mask_accumulate(const Tensor<T>& gy, const Tensor<T>& mask, Tensor<T>& gx) {
  const i64 total = static_cast<i64>(gy.size());
#pragma omp parallel for schedule(static)
  for (i64 i = 0; i < total; ++i) gx[i] += gy[i] * mask[i];
}

namespace {

/// Corner-aligned source coordinates for axis doubling: output index i maps
/// to i * (in - 1) / (2 * in - 1).
struct AxisTap {
  i64 lo, hi;
  double w_lo, w_hi;
};

std::vector<AxisTap> doubling_taps(i64 in) {
  const i64 out = 2 * in;
  std::vector<AxisTap> taps(out);
  for (i64 i = 0; i < out; ++i) {
    const double src = (in == 1) ? 0.0
                                 : static_cast<double>(i) * static_cast<double>(in - 1) /
                                       static_cast<double>(out - 1);
    i64 lo = static_cast<i64>(std::floor(src));
    if (lo > in - 2) lo = in - 2;
    if (lo < 0) lo = 0;
    const double f = src - static_cast<double>(lo);
    taps[i] = {lo, lo + 1 < in ? lo + 1 : lo, 1.0 - f, f};
  }
  return taps;
}

}  // namespace

template <typename T>
void upscale2x_forward(const Tensor<T>& x, Tensor<T>& y) {
  const i64 n_count = x.dim(0), c_count = x.dim(1), h = x.dim(2), wid = x.dim(3);
  const i64 oh = 2 * h, ow = 2 * wid;
  const auto ytaps = doubling_taps(h);
  const auto xtaps = doubling_taps(wid);
#pragma omp parallel for collapse(2) schedule(static)
  for (i64 n = 0; n < n_count; ++n) {
    for (i64 c = 0; c < c_count; ++c) {
      const T* xplane = x.data() + (n * c_count + c) * h * wid;
      T* yplane = y.data() + (n * c_count + c) * oh * ow;
      for (i64 oy = 0; oy < oh; ++oy) {
        const AxisTap& ty = ytaps[oy];
        const T* row_lo = xplane + ty.lo * wid;
        const T* row_hi = xplane + ty.hi * wid;
        for (i64 ox = 0; ox < ow; ++ox) {
          const AxisTap& tx = xtaps[ox];
          const double v = ty.w_lo * (tx.w_lo * row_lo[tx.lo] + tx.w_hi * row_lo[tx.hi]) +
                           ty.w_hi * (tx.w_lo * row_hi[tx.lo] + tx.w_hi * row_hi[tx.hi]);
          yplane[oy * ow + ox] = static_cast<T>(v);
        }
      }
    }
  }
}

template <typename T>
void upscale2x_backward(const Tensor<T>& gy, Tensor<T>& gx) {
  const i64 n_count = gx.dim(0), c_count = gx.dim(1), h = gx.dim(2), wid = gx.dim(3);
  const i64 oh = 2 * h, ow = 2 * wid;
  const auto ytaps = doubling_taps(h);
  const auto xtaps = doubling_taps(wid);
  // Gather form: collect, per source index, the output indices that read it.
  std::vector<std::vector<std::pair<i64, double>>> yreaders(h), xreaders(wid);
  for (i64 oy = 0; oy < oh; ++oy) {
    if (ytaps[oy].w_lo != 0.0) yreaders[ytaps[oy].lo].push_back({oy, ytaps[oy].w_lo});
    if (ytaps[oy].w_hi != 0.0) yreaders[ytaps[oy].hi].push_back({oy, ytaps[oy].w_hi});
  }
  for (i64 ox = 0; ox < ow; ++ox) {
    if (xtaps[ox].w_lo != 0.0) xreaders[xtaps[ox].lo].push_back({ox, xtaps[ox].w_lo});
    if (xtaps[ox].w_hi != 0.0) xreaders[xtaps[ox].hi].push_back({ox, xtaps[ox].w_hi});
  }
#pragma omp parallel for collapse(2) schedule(static)
  for (i64 n = 0; n < n_count; ++n) {
    for (i64 c = 0; c < c_count; ++c) {
      const T* gyplane = gy.data() + (n * c_count + c) * oh * ow;
      T* gxplane = gx.data() + (n * c_count + c) * h * wid;
      for (i64 iy = 0; iy < h; ++iy) {
        for (i64 ix = 0; ix < wid; ++ix) {
          double acc = 0.0;
          for (const auto& [oy, wy] : yreaders[iy]) {
            const T* gyrow = gyplane + oy * ow;
            for (const auto& [ox, wx] : xreaders[ix]) acc += wy * wx * gyrow[ox];
          }
          gxplane[iy * wid + ix] += static_cast<T>(acc);
        }
      }
    }
  }
}

double bilinear_sample(const GrayImage& image, double x, double y) {
  const int w = image.width, h = image.height;
  if (!(x > -1.0) || !(y > -1.0) || !(x < w) || !(y < h)) return 0.0;
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  const auto pix = [&](int px, int py) -> double {
    return image.contains(px, py) ? image.at(px, py) : 0.0;
  };
  const double top = (1.0 - fx) * pix(x0, y0) + fx * pix(x0 + 1, y0);
  const double bot = (1.0 - fx) * pix(x0, y0 + 1) + fx * pix(x0 + 1, y0 + 1);
  return (1.0 - fy) * top + fy * bot;
}

void warp_bilinear(const GrayImage& src, const InverseMap& inv, GrayImage& out) {
  const i64 h = out.height, w = out.width;
#pragma omp parallel for schedule(static)
  for (i64 y = 0; y < h; ++y) {
    double* row = out.pixels.data() + y * w;
    for (i64 x = 0; x < w; ++x) {
      const double sx = inv.a * x - inv.b * y + inv.tx;
      const double sy = inv.b * x + inv.a * y + inv.ty;
      row[x] = bilinear_sample(src, sx, sy);
    }
  }
}

void heatmap_truncated(const double* points_xy, std::size_t point_count, double radius,
                       GrayImage& out) {
  const i64 h = out.height, w = out.width;
  const double r2 = radius * radius;
  const std::size_t np = point_count;
#pragma omp parallel for schedule(static)
  for (i64 y = 0; y < h; ++y) {
    double* row = out.pixels.data() + y * w;
    std::fill(row, row + w, 0.0);
    // Candidate x-intervals on this row: pixels within `radius` of some
    // landmark. Only candidates are evaluated; all other pixels stay zero.
    for (std::size_t p = 0; p < np; ++p) {
      const double px = points_xy[2 * p], py = points_xy[2 * p + 1];
      const double dy = static_cast<double>(y) - py;
      const double rem = r2 - dy * dy;
      if (rem < 0.0) continue;
      const double half = std::sqrt(rem) + 1e-9;  // conservative; exact test below
      const i64 x0 = std::max<i64>(0, static_cast<i64>(std::ceil(px - half)));
      const i64 x1 = std::min<i64>(w - 1, static_cast<i64>(std::floor(px + half)));
      for (i64 x = x0; x <= x1; ++x) {
        if (row[x] != 0.0) continue;  // already evaluated via another landmark
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t q = 0; q < np; ++q) {
          const double ddx = static_cast<double>(x) - points_xy[2 * q];
          const double ddy = static_cast<double>(y) - points_xy[2 * q + 1];
          const double d2 = ddx * ddx + ddy * ddy;
          if (d2 < best) best = d2;
        }
        if (best <= r2) row[x] = 1.0 / (1.0 + std::sqrt(best));
      }
    }
  }
}

#define DAN_INSTANTIATE_KERNELS(T)                                                                \
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

DAN_INSTANTIATE_KERNELS(float)
DAN_INSTANTIATE_KERNELS(double)

}  // namespace dan::kernels
