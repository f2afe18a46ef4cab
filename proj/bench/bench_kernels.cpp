// Timing harness comparing the OpenMP kernels against the serial reference
// implementations on layer shapes the network actually uses. Not part of the
// test suite; run manually, e.g. `dan_bench --reps 5`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "dan/kernels.hpp"
#include "dan/rng.hpp"
#include "dan/tensor.hpp"

namespace {

using dan::Tensor;

Tensor<float> random_tensor(std::vector<std::size_t> shape, dan::rng::Engine& engine) {
  Tensor<float> t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = static_cast<float>(dan::rng::uniform_range(engine, -1.0, 1.0));
  }
  return t;
}

double time_best_of(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

double max_abs_diff(const Tensor<float>& a, const Tensor<float>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return worst;
}

void report(const std::string& name, double par_ms, double ref_ms, double diff) {
  std::printf("%-28s %10.3f ms %10.3f ms %7.2fx   max |diff| %.3g\n", name.c_str(), par_ms,
              ref_ms, ref_ms / par_ms, diff);
}

}  // namespace

int main(int argc, char** argv) {
  int reps = 3;
  for (int i = 1; i < argc - 1; ++i) {
    if (std::strcmp(argv[i], "--reps") == 0) reps = std::atoi(argv[i + 1]);
  }
  std::printf("%-28s %13s %13s %9s\n", "kernel", "parallel", "reference", "speedup");

  dan::rng::Engine engine(7);
  namespace k = dan::kernels;
  namespace ref = dan::kernels::ref;

  {  // early conv layer: widest spatial extent the net sees
    const Tensor<float> x = random_tensor({4, 64, 112, 112}, engine);
    const Tensor<float> w = random_tensor({64, 64, 3, 3}, engine);
    Tensor<float> par({4, 64, 112, 112}), serial({4, 64, 112, 112});
    const double par_ms = time_best_of(reps, [&] { k::conv2d_forward(x, w, 1, 1, par); });
    const double ref_ms = time_best_of(reps, [&] { ref::conv2d_forward(x, w, 1, 1, serial); });
    report("conv 64x112x112 3x3", par_ms, ref_ms, max_abs_diff(par, serial));

    Tensor<float> gx_par({4, 64, 112, 112}), gx_ref({4, 64, 112, 112});
    const double bpar = time_best_of(reps, [&] {
      gx_par.fill(0);
      k::conv2d_backward_input(par, w, 1, 1, gx_par);
    });
    const double bref = time_best_of(reps, [&] {
      gx_ref.fill(0);
      ref::conv2d_backward_input(par, w, 1, 1, gx_ref);
    });
    report("conv backward input", bpar, bref, max_abs_diff(gx_par, gx_ref));

    Tensor<float> gw_par({64, 64, 3, 3}), gw_ref({64, 64, 3, 3});
    const double wpar = time_best_of(reps, [&] {
      gw_par.fill(0);
      k::conv2d_backward_weights(par, x, 1, 1, gw_par);
    });
    const double wref = time_best_of(reps, [&] {
      gw_ref.fill(0);
      ref::conv2d_backward_weights(par, x, 1, 1, gw_ref);
    });
    report("conv backward weights", wpar, wref, max_abs_diff(gw_par, gw_ref));
  }

  {  // deep conv layer: many channels, small plane
    const Tensor<float> x = random_tensor({4, 512, 14, 14}, engine);
    const Tensor<float> w = random_tensor({512, 512, 3, 3}, engine);
    Tensor<float> par({4, 512, 14, 14}), serial({4, 512, 14, 14});
    const double par_ms = time_best_of(reps, [&] { k::conv2d_forward(x, w, 1, 1, par); });
    const double ref_ms = time_best_of(reps, [&] { ref::conv2d_forward(x, w, 1, 1, serial); });
    report("conv 512x14x14 3x3", par_ms, ref_ms, max_abs_diff(par, serial));
  }

  {  // fully connected layer over flattened deep features
    const Tensor<float> x = random_tensor({16, 25088}, engine);
    const Tensor<float> w = random_tensor({256, 25088}, engine);
    const Tensor<float> b = random_tensor({256}, engine);
    Tensor<float> par({16, 256}), serial({16, 256});
    const double par_ms = time_best_of(reps, [&] { k::dense_forward(x, w, b, par); });
    const double ref_ms = time_best_of(reps, [&] { ref::dense_forward(x, w, b, serial); });
    report("dense 25088 -> 256", par_ms, ref_ms, max_abs_diff(par, serial));
  }

  {  // max pooling on the widest layer
    const Tensor<float> x = random_tensor({4, 64, 112, 112}, engine);
    Tensor<float> par({4, 64, 56, 56}), serial({4, 64, 56, 56});
    std::vector<std::uint32_t> apar, aref;
    const double par_ms = time_best_of(reps, [&] { k::max_pool2d_forward(x, par, apar); });
    const double ref_ms = time_best_of(reps, [&] { ref::max_pool2d_forward(x, serial, aref); });
    report("max pool 112 -> 56", par_ms, ref_ms, max_abs_diff(par, serial));
  }

  {  // landmark heatmap rendering
    std::vector<double> points(2 * 68);
    for (auto& v : points) v = dan::rng::uniform_range(engine, 10.0, 102.0);
    dan::GrayImage par(112, 112), serial(112, 112);
    const double par_ms =
        time_best_of(reps, [&] { k::heatmap_truncated(points.data(), 68, 16.0, par); });
    const double ref_ms =
        time_best_of(reps, [&] { ref::heatmap_truncated(points.data(), 68, 16.0, serial); });
    double diff = 0.0;
    for (std::size_t i = 0; i < par.pixels.size(); ++i) {
      diff = std::max(diff, std::abs(par.pixels[i] - serial.pixels[i]));
    }
    report("heatmap 112x112", par_ms, ref_ms, diff);
  }

  {  // similarity warp of a full image
    dan::GrayImage src(448, 448);
    for (auto& v : src.pixels) v = dan::rng::uniform_unit(engine);
    dan::GrayImage par(112, 112), serial(112, 112);
    const dan::kernels::InverseMap inv = {3.7, 0.41, 12.0, -5.0};
    const double par_ms = time_best_of(reps, [&] { k::warp_bilinear(src, inv, par); });
    const double ref_ms = time_best_of(reps, [&] { ref::warp_bilinear(src, inv, serial); });
    double diff = 0.0;
    for (std::size_t i = 0; i < par.pixels.size(); ++i) {
      diff = std::max(diff, std::abs(par.pixels[i] - serial.pixels[i]));
    }
    report("warp 448 -> 112", par_ms, ref_ms, diff);
  }

  {  // feature image upscale
    const Tensor<float> x = random_tensor({16, 1, 56, 56}, engine);
    Tensor<float> par({16, 1, 112, 112}), serial({16, 1, 112, 112});
    const double par_ms = time_best_of(reps, [&] { k::upscale2x_forward(x, par); });
    const double ref_ms = time_best_of(reps, [&] { ref::upscale2x_forward(x, serial); });
    report("upscale 56 -> 112", par_ms, ref_ms, max_abs_diff(par, serial));
  }

  return 0;
}
