#include "dan/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dan {

const std::array<const char*, 8> kConvLayerNames = {"conv1a", "conv1b", "conv2a", "conv2b",
                                                    "conv3a", "conv3b", "conv4a", "conv4b"};

namespace {

int shrink(int full, int divisor) {
  const int v = full / divisor;
  if (v < 1) throw std::invalid_argument("channel divisor leaves an empty layer");
  return v;
}

Tensor<float> he_uniform(std::vector<std::size_t> shape, std::size_t fan_in, rng::Engine& engine) {
  Tensor<float> t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = static_cast<float>(rng::uniform_range(engine, -bound, bound));
  }
  return t;
}

BatchNormParams make_bn(std::size_t channels) {
  BatchNormParams bn;
  bn.gamma = Tensor<float>::full({channels}, 1.0f);
  bn.beta = Tensor<float>({channels});
  bn.running_mean = Tensor<float>({channels});
  bn.running_var = Tensor<float>::full({channels}, 1.0f);
  return bn;
}

Tensor<float> image_to_tensor(const GrayImage& img) {
  Tensor<float> t({1, 1, static_cast<std::size_t>(img.height), static_cast<std::size_t>(img.width)});
  for (std::size_t i = 0; i < img.pixels.size(); ++i) t[i] = static_cast<float>(img.pixels[i]);
  return t;
}

GrayImage plane_to_image(const Tensor<float>& t) {
  GrayImage img(static_cast<int>(t.dim(3)), static_cast<int>(t.dim(2)));
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = t[i];
  return img;
}

bool is_zero_or_empty(const GrayImage& img) {
  for (double v : img.pixels) {
    if (v != 0.0) return false;
  }
  return true;
}

}  // namespace

StageConfig StageConfig::first_stage(int channel_divisor) {
  StageConfig cfg;
  cfg.input_channels = 1;
  for (int& c : cfg.conv_channels) c = shrink(c, channel_divisor);
  cfg.fc1_units = shrink(cfg.fc1_units, channel_divisor);
  cfg.feature_input_units = 0;
  cfg.validate();
  return cfg;
}

StageConfig StageConfig::later_stage(int channel_divisor) {
  StageConfig cfg = first_stage(channel_divisor);
  cfg.input_channels = 3;
  cfg.feature_input_units = cfg.fc1_units;
  cfg.validate();
  return cfg;
}

void StageConfig::validate() const {
  if (input_channels < 1) throw std::invalid_argument("stage config: input channels must be positive");
  for (int c : conv_channels) {
    if (c < 1) throw std::invalid_argument("stage config: conv channels must be positive");
  }
  if (fc1_units < 1) throw std::invalid_argument("stage config: fc1 units must be positive");
  if (feature_input_units < 0) {
    throw std::invalid_argument("stage config: feature input units must be non-negative");
  }
}

StageParams init_stage_params(const StageConfig& config, rng::Engine& engine) {
  config.validate();
  StageParams p;
  p.config = config;
  int in_ch = config.input_channels;
  for (std::size_t i = 0; i < 8; ++i) {
    const int out_ch = config.conv_channels[i];
    const std::size_t fan_in = static_cast<std::size_t>(in_ch) * 9;
    p.conv[i].weights = he_uniform({static_cast<std::size_t>(out_ch),
                                    static_cast<std::size_t>(in_ch), 3, 3},
                                   fan_in, engine);
    p.conv[i].bn = make_bn(static_cast<std::size_t>(out_ch));
    in_ch = out_ch;
  }
  const std::size_t flat = static_cast<std::size_t>(config.conv_channels[7]) * 7 * 7;
  p.fc1_weights = he_uniform({static_cast<std::size_t>(config.fc1_units), flat}, flat, engine);
  p.fc1_bias = Tensor<float>({static_cast<std::size_t>(config.fc1_units)});
  p.fc1_bn = make_bn(static_cast<std::size_t>(config.fc1_units));
  // The landmark layer starts at zero: an untrained stage is an identity
  // refinement, so adding a stage can never hurt before training starts.
  p.fc2_weights = Tensor<float>({static_cast<std::size_t>(StageConfig::kLandmarkOutputs),
                                 static_cast<std::size_t>(config.fc1_units)});
  p.fc2_bias = Tensor<float>({static_cast<std::size_t>(StageConfig::kLandmarkOutputs)});
  if (config.has_feature_path()) {
    const std::size_t fin = static_cast<std::size_t>(config.feature_input_units);
    p.feature_weights = he_uniform({static_cast<std::size_t>(config.feature_units()), fin}, fin, engine);
    p.feature_bias = Tensor<float>({static_cast<std::size_t>(config.feature_units())});
  }
  return p;
}

DanModel init_model(const Shape& canonical, std::size_t stage_count, int channel_divisor,
                    rng::Engine& engine, double heatmap_radius) {
  if (stage_count < 1) throw std::invalid_argument("init_model: need at least one stage");
  if (!(heatmap_radius > 0.0)) throw std::invalid_argument("init_model: heatmap radius must be positive");
  DanModel model;
  model.canonical_shape = canonical;
  model.heatmap_radius = heatmap_radius;
  model.stages.push_back(init_stage_params(StageConfig::first_stage(channel_divisor), engine));
  for (std::size_t t = 1; t < stage_count; ++t) {
    StageConfig cfg = StageConfig::later_stage(channel_divisor);
    cfg.feature_input_units = model.stages[t - 1].config.fc1_units;
    model.stages.push_back(init_stage_params(cfg, engine));
  }
  return model;
}

std::uint64_t hash_stage_params(const StageParams& p) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  const auto mix_bytes = [&h](const void* data, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  const auto mix_tensor = [&](const Tensor<float>& t) {
    if (!t.empty()) mix_bytes(t.data(), t.size() * sizeof(float));
  };
  const auto mix_bn = [&](const BatchNormParams& bn) {
    mix_tensor(bn.gamma);
    mix_tensor(bn.beta);
    mix_tensor(bn.running_mean);
    mix_tensor(bn.running_var);
  };
  for (const auto& block : p.conv) {
    mix_tensor(block.weights);
    mix_bn(block.bn);
  }
  mix_tensor(p.fc1_weights);
  mix_tensor(p.fc1_bias);
  mix_bn(p.fc1_bn);
  mix_tensor(p.fc2_weights);
  mix_tensor(p.fc2_bias);
  mix_tensor(p.feature_weights);
  mix_tensor(p.feature_bias);
  return h;
}

// ---------------------------------------------------------------------------

template <typename T>
StageNet<T> lift_stage(const StageParams& params, bool trainable) {
  params.config.validate();
  StageNet<T> net;
  net.config = params.config;
  for (std::size_t i = 0; i < 8; ++i) {
    net.conv_weights[i] = ad::leaf(params.conv[i].weights.template cast<T>(), trainable);
    auto& bn = net.conv_bn[i];
    bn = ad::BatchNormState<T>(params.conv[i].bn.gamma.size(), trainable);
    bn.gamma->value = params.conv[i].bn.gamma.template cast<T>();
    bn.beta->value = params.conv[i].bn.beta.template cast<T>();
    bn.running_mean = params.conv[i].bn.running_mean.template cast<T>();
    bn.running_var = params.conv[i].bn.running_var.template cast<T>();
    bn.epsilon = static_cast<T>(params.conv[i].bn.epsilon);
    bn.momentum = static_cast<T>(params.conv[i].bn.momentum);
  }
  net.fc1_weights = ad::leaf(params.fc1_weights.template cast<T>(), trainable);
  net.fc1_bias = ad::leaf(params.fc1_bias.template cast<T>(), trainable);
  net.fc1_bn = ad::BatchNormState<T>(params.fc1_bn.gamma.size(), trainable);
  net.fc1_bn.gamma->value = params.fc1_bn.gamma.template cast<T>();
  net.fc1_bn.beta->value = params.fc1_bn.beta.template cast<T>();
  net.fc1_bn.running_mean = params.fc1_bn.running_mean.template cast<T>();
  net.fc1_bn.running_var = params.fc1_bn.running_var.template cast<T>();
  net.fc1_bn.epsilon = static_cast<T>(params.fc1_bn.epsilon);
  net.fc1_bn.momentum = static_cast<T>(params.fc1_bn.momentum);
  net.fc2_weights = ad::leaf(params.fc2_weights.template cast<T>(), trainable);
  net.fc2_bias = ad::leaf(params.fc2_bias.template cast<T>(), trainable);
  if (params.config.has_feature_path()) {
    net.feature_weights = ad::leaf(params.feature_weights.template cast<T>(), trainable);
    net.feature_bias = ad::leaf(params.feature_bias.template cast<T>(), trainable);
  }
  return net;
}

template <typename T>
void store_stage(const StageNet<T>& net, StageParams& params) {
  for (std::size_t i = 0; i < 8; ++i) {
    params.conv[i].weights = net.conv_weights[i]->value.template cast<float>();
    params.conv[i].bn.gamma = net.conv_bn[i].gamma->value.template cast<float>();
    params.conv[i].bn.beta = net.conv_bn[i].beta->value.template cast<float>();
    params.conv[i].bn.running_mean = net.conv_bn[i].running_mean.template cast<float>();
    params.conv[i].bn.running_var = net.conv_bn[i].running_var.template cast<float>();
  }
  params.fc1_weights = net.fc1_weights->value.template cast<float>();
  params.fc1_bias = net.fc1_bias->value.template cast<float>();
  params.fc1_bn.gamma = net.fc1_bn.gamma->value.template cast<float>();
  params.fc1_bn.beta = net.fc1_bn.beta->value.template cast<float>();
  params.fc1_bn.running_mean = net.fc1_bn.running_mean.template cast<float>();
  params.fc1_bn.running_var = net.fc1_bn.running_var.template cast<float>();
  params.fc2_weights = net.fc2_weights->value.template cast<float>();
  params.fc2_bias = net.fc2_bias->value.template cast<float>();
  if (net.config.has_feature_path()) {
    params.feature_weights = net.feature_weights->value.template cast<float>();
    params.feature_bias = net.feature_bias->value.template cast<float>();
  }
}

template <typename T>
std::vector<ad::NodePtr<T>> StageNet<T>::trainable_parameters() const {
  std::vector<ad::NodePtr<T>> out;
  for (std::size_t i = 0; i < 8; ++i) {
    out.push_back(conv_weights[i]);
    out.push_back(conv_bn[i].gamma);
    out.push_back(conv_bn[i].beta);
  }
  out.push_back(fc1_weights);
  out.push_back(fc1_bias);
  out.push_back(fc1_bn.gamma);
  out.push_back(fc1_bn.beta);
  out.push_back(fc2_weights);
  out.push_back(fc2_bias);
  if (config.has_feature_path()) {
    out.push_back(feature_weights);
    out.push_back(feature_bias);
  }
  return out;
}

template <typename T>
StageGraph<T> stage_graph(StageNet<T>& net, ad::NodePtr<T> input, ad::Mode mode,
                          double dropout_rate, rng::Engine* engine) {
  const auto& s = input->value.shape();
  if (s.size() != 4 || s[1] != static_cast<std::size_t>(net.config.input_channels) ||
      s[2] != static_cast<std::size_t>(kFrame) || s[3] != static_cast<std::size_t>(kFrame)) {
    throw std::invalid_argument("stage_graph: expected input [N, " +
                                std::to_string(net.config.input_channels) + ", 112, 112], got " +
                                shape_to_string(s));
  }
  StageGraph<T> g;
  ad::NodePtr<T> x = std::move(input);
  for (std::size_t i = 0; i < 8; ++i) {
    x = ad::conv2d(x, net.conv_weights[i], 1, 1);
    g.taps.push_back({kConvLayerNames[i], x});
    x = ad::relu(ad::batch_norm(x, net.conv_bn[i], mode));
    if (i % 2 == 1) {
      x = ad::max_pool2d(x);
      g.taps.push_back({"pool" + std::to_string(i / 2 + 1), x});
    }
  }
  x = ad::dropout(ad::flatten(x), dropout_rate, mode, engine);
  ad::NodePtr<T> fc1 = ad::dense(x, net.fc1_weights, net.fc1_bias);
  g.taps.push_back({"fc1", fc1});
  g.fc1 = ad::relu(ad::batch_norm(fc1, net.fc1_bn, mode));
  g.delta = ad::dense(g.fc1, net.fc2_weights, net.fc2_bias);
  g.taps.push_back({"fc2", g.delta});
  return g;
}

template <typename T>
ad::NodePtr<T> feature_image_graph(const StageNet<T>& net, ad::NodePtr<T> fc1_prev) {
  if (!net.config.has_feature_path()) {
    throw std::invalid_argument("feature_image_graph: stage has no feature path");
  }
  const auto& s = fc1_prev->value.shape();
  if (s.size() != 2 || s[1] != static_cast<std::size_t>(net.config.feature_input_units)) {
    throw std::invalid_argument("feature_image_graph: expected input [N, " +
                                std::to_string(net.config.feature_input_units) + "], got " +
                                shape_to_string(s));
  }
  const std::size_t n = s[0];
  ad::NodePtr<T> x = ad::relu(ad::dense(std::move(fc1_prev), net.feature_weights, net.feature_bias));
  x = ad::reshape(std::move(x), {n, 1, static_cast<std::size_t>(kFeatureMapSide),
                                 static_cast<std::size_t>(kFeatureMapSide)});
  return ad::upscale2x(std::move(x));
}

// ---------------------------------------------------------------------------

StageEvalResult stage_forward(const StageParams& params, const GrayImage& image,
                              const GrayImage& heatmap, const GrayImage& feature) {
  const auto square = [](const GrayImage& img) {
    return img.width == kFrame && img.height == kFrame;
  };
  if (!square(image)) throw std::invalid_argument("stage_forward: image must be 112x112");
  StageNet<float> net = lift_stage<float>(params, false);
  ad::NodePtr<float> input;
  if (params.config.input_channels == 1) {
    if (!(heatmap.empty() || (square(heatmap) && is_zero_or_empty(heatmap))) ||
        !(feature.empty() || (square(feature) && is_zero_or_empty(feature)))) {
      throw std::invalid_argument(
          "stage_forward: a single-channel stage takes empty or zero heatmap/feature images");
    }
    input = ad::constant(image_to_tensor(image));
  } else {
    if (!square(heatmap) || !square(feature)) {
      throw std::invalid_argument("stage_forward: heatmap and feature images must be 112x112");
    }
    input = ad::concat_channels<float>({ad::constant(image_to_tensor(image)),
                                        ad::constant(image_to_tensor(heatmap)),
                                        ad::constant(image_to_tensor(feature))});
  }
  StageGraph<float> g = stage_graph(net, input, ad::Mode::kInfer, 0.0, nullptr);
  StageEvalResult out;
  out.delta.assign(g.delta->value.data(), g.delta->value.data() + g.delta->value.size());
  out.fc1.assign(g.fc1->value.data(), g.fc1->value.data() + g.fc1->value.size());
  return out;
}

DanRunner::DanRunner(const DanModel& model)
    : canonical_(model.canonical_shape),
      heatmap_radius_(model.heatmap_radius),
      nets_(std::make_shared<std::vector<StageNet<float>>>()) {
  if (model.stages.empty()) throw std::invalid_argument("DanRunner: model has no stages");
  if (model.stages[0].config.input_channels != 1) {
    throw std::invalid_argument("DanRunner: first stage must take a single channel");
  }
  for (std::size_t t = 0; t < model.stages.size(); ++t) {
    const StageParams& p = model.stages[t];
    if (t > 0) {
      if (!p.config.has_feature_path() || p.config.input_channels != 3) {
        throw std::invalid_argument("DanRunner: later stages need 3 input channels and a feature path");
      }
      if (p.config.feature_input_units != model.stages[t - 1].config.fc1_units) {
        throw std::invalid_argument("DanRunner: feature path width does not match previous stage");
      }
    }
    configs_.push_back(p.config);
    nets_->push_back(lift_stage<float>(p, false));
  }
}

DanRunner::Trace DanRunner::run_trace(const GrayImage& canonical_image, const Shape& init,
                                      std::size_t stage_limit) const {
  if (canonical_image.width != kFrame || canonical_image.height != kFrame) {
    throw std::invalid_argument("DanRunner: expected a 112x112 canonical image");
  }
  Trace trace;
  const std::size_t limit = std::min(stage_limit, configs_.size());
  if (limit == 0) return trace;
  const GrayImage standardized = standardize_image(canonical_image);
  auto nets = nets_;  // shared ownership; infer-mode graphs never write to them
  Shape current = init;
  for (std::size_t t = 0; t < limit; ++t) {
    SimilarityTransform tf;  // identity for the first stage
    ad::NodePtr<float> input;
    if (t == 0) {
      input = ad::constant(image_to_tensor(standardized));
    } else {
      tf = estimate_similarity(current, canonical_);
      const GrayImage warped = warp_image(standardized, tf, kFrame, kFrame);
      const GrayImage heat =
          generate_heatmap(apply_transform(tf, current), kFrame, kFrame, heatmap_radius_);
      ad::NodePtr<float> fc1_prev = ad::constant(Tensor<float>(
          {1, static_cast<std::size_t>(configs_[t].feature_input_units)}, trace.fc1[t - 1]));
      ad::NodePtr<float> feature = feature_image_graph((*nets)[t], std::move(fc1_prev));
      input = ad::concat_channels<float>({ad::constant(image_to_tensor(warped)),
                                          ad::constant(image_to_tensor(heat)), std::move(feature)});
    }
    StageGraph<float> g = stage_graph((*nets)[t], std::move(input), ad::Mode::kInfer, 0.0, nullptr);
    const Shape base = apply_transform(tf, current);
    Shape refined;
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
      refined[i] = {base[i].x + static_cast<double>(g.delta->value[2 * i]),
                    base[i].y + static_cast<double>(g.delta->value[2 * i + 1])};
    }
    current = apply_transform(invert_transform(tf), refined);
    trace.shapes.push_back(current);
    trace.fc1.emplace_back(g.fc1->value.data(), g.fc1->value.data() + g.fc1->value.size());
    trace.transforms.push_back(tf);
  }
  return trace;
}

std::vector<Shape> DanRunner::run(const GrayImage& canonical_image, const Shape& init) const {
  return run_trace(canonical_image, init, configs_.size()).shapes;
}

DanRunner::ConnectionImages DanRunner::connection_forward(std::size_t next_stage,
                                                          const GrayImage& canonical_image,
                                                          const Shape& current,
                                                          std::span<const float> fc1_prev) const {
  if (next_stage == 0 || next_stage >= configs_.size()) {
    throw std::invalid_argument("connection_forward: stage index out of range");
  }
  if (fc1_prev.size() != static_cast<std::size_t>(configs_[next_stage].feature_input_units)) {
    throw std::invalid_argument("connection_forward: fc1 length does not match the feature path");
  }
  if (canonical_image.width != kFrame || canonical_image.height != kFrame) {
    throw std::invalid_argument("connection_forward: expected a 112x112 canonical image");
  }
  const GrayImage standardized = standardize_image(canonical_image);
  ConnectionImages out;
  out.transform = estimate_similarity(current, canonical_);
  out.warped = warp_image(standardized, out.transform, kFrame, kFrame);
  out.heatmap = generate_heatmap(apply_transform(out.transform, current), kFrame, kFrame,
                                 heatmap_radius_);
  auto nets = nets_;
  ad::NodePtr<float> fc1_node = ad::constant(
      Tensor<float>({1, fc1_prev.size()}, std::vector<float>(fc1_prev.begin(), fc1_prev.end())));
  out.feature = plane_to_image(feature_image_graph((*nets)[next_stage], std::move(fc1_node))->value);
  return out;
}

#define DAN_INSTANTIATE_MODEL(T)                                                               \
  template StageNet<T> lift_stage<T>(const StageParams&, bool);                                \
  template void store_stage<T>(const StageNet<T>&, StageParams&);                              \
  template std::vector<ad::NodePtr<T>> StageNet<T>::trainable_parameters() const;              \
  template StageGraph<T> stage_graph<T>(StageNet<T>&, ad::NodePtr<T>, ad::Mode, double,        \
                                        rng::Engine*);                                         \
  template ad::NodePtr<T> feature_image_graph<T>(const StageNet<T>&, ad::NodePtr<T>);

DAN_INSTANTIATE_MODEL(float)
DAN_INSTANTIATE_MODEL(double)

}  // namespace dan
