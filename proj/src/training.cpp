#include "dan/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>

#include "dan/imaging.hpp"

namespace dan {

// ---------------------------------------------------------------------------
// Optimizer.

template <typename T>
void adam_step(Tensor<T>& params, const Tensor<T>& grads, AdamState<T>& state,
               double learning_rate) {
  if (!params.same_shape(grads) || !params.same_shape(state.m) || !params.same_shape(state.v)) {
    throw std::invalid_argument("adam_step: shape mismatch between params " +
                                shape_to_string(params.shape()) + ", grads " +
                                shape_to_string(grads.shape()) + ", state " +
                                shape_to_string(state.m.shape()));
  }
  if (!(learning_rate > 0.0)) throw std::invalid_argument("adam_step: step size must be positive");
  state.step += 1;
  const double b1 = state.config.beta1, b2 = state.config.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = static_cast<double>(grads[i]);
    const double m = b1 * static_cast<double>(state.m[i]) + (1.0 - b1) * g;
    const double v = b2 * static_cast<double>(state.v[i]) + (1.0 - b2) * g * g;
    state.m[i] = static_cast<T>(m);
    state.v[i] = static_cast<T>(v);
    const double step = learning_rate * (m / correction1) /
                        (std::sqrt(v / correction2) + state.config.epsilon);
    params[i] = static_cast<T>(static_cast<double>(params[i]) - step);
  }
}

template void adam_step<float>(Tensor<float>&, const Tensor<float>&, AdamState<float>&, double);
template void adam_step<double>(Tensor<double>&, const Tensor<double>&, AdamState<double>&, double);

// ---------------------------------------------------------------------------
// Loss.

double interpupil_loss(const Shape& predicted, const Shape& truth) {
  const double ipd = interpupil_distance(truth);
  if (!(ipd > 0.0)) throw std::invalid_argument("interpupil_loss: zero inter-pupil distance");
  double total = 0.0;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) total += distance(predicted[i], truth[i]);
  return total / (static_cast<double>(kLandmarkCount) * ipd);
}

namespace {

template <typename T>
class InterpupilLossNode final : public ad::Node<T> {
 public:
  InterpupilLossNode(ad::NodePtr<T> delta, std::vector<LossContext> contexts)
      : contexts_(std::move(contexts)) {
    const auto& s = delta->value.shape();
    if (s.size() != 2 || s[1] != 2 * kLandmarkCount || s[0] != contexts_.size() ||
        contexts_.empty()) {
      throw std::invalid_argument("loss: expected delta [" + std::to_string(contexts_.size()) +
                                  ", 136], got " + shape_to_string(s));
    }
    for (const LossContext& ctx : contexts_) {
      if (!(ctx.interpupil > 0.0) || !std::isfinite(ctx.interpupil)) {
        throw std::invalid_argument("loss: inter-pupil distance must be positive and finite");
      }
    }
    double total = 0.0;
    for (std::size_t n = 0; n < contexts_.size(); ++n) {
      total += sample_loss(delta->value, n, nullptr, T{});
    }
    this->value = Tensor<T>({1}, {static_cast<T>(total / static_cast<double>(contexts_.size()))});
    this->inputs_ = {std::move(delta)};
    this->requires_grad = this->inputs_[0]->requires_grad;
  }

  void backprop() override {
    ad::Node<T>& delta = *this->inputs_[0];
    if (!delta.requires_grad) return;
    const T upstream = this->grad[0];
    for (std::size_t n = 0; n < contexts_.size(); ++n) {
      sample_loss(delta.value, n, &delta.grad, upstream);
    }
  }

 private:
  /// Per-sample normalized error; when `grad` is given, also accumulates
  /// upstream * d(error)/d(delta) into it.
  double sample_loss(const Tensor<T>& delta, std::size_t n, Tensor<T>* grad, T upstream) const {
    const LossContext& ctx = contexts_[n];
    const std::size_t row = n * 2 * kLandmarkCount;
    const double norm = static_cast<double>(contexts_.size()) *
                        static_cast<double>(kLandmarkCount) * ctx.interpupil;
    double total = 0.0;
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
      const Vec2 p = {ctx.base[i].x + static_cast<double>(delta[row + 2 * i]),
                      ctx.base[i].y + static_cast<double>(delta[row + 2 * i + 1])};
      const Vec2 q = ctx.inverse(p);
      const Vec2 r = q - ctx.truth[i];
      const double d = std::hypot(r.x, r.y);
      total += d;
      if (grad != nullptr && d > 0.0) {
        const double k = static_cast<double>(upstream) / (norm * d);
        (*grad)[row + 2 * i] += static_cast<T>((r.x * ctx.inverse.a + r.y * ctx.inverse.b) * k);
        (*grad)[row + 2 * i + 1] +=
            static_cast<T>((-r.x * ctx.inverse.b + r.y * ctx.inverse.a) * k);
      }
    }
    return total / (static_cast<double>(kLandmarkCount) * ctx.interpupil);
  }

  std::vector<LossContext> contexts_;
};

}  // namespace

template <typename T>
ad::NodePtr<T> interpupil_loss_node(ad::NodePtr<T> delta, std::vector<LossContext> contexts) {
  return std::make_shared<InterpupilLossNode<T>>(std::move(delta), std::move(contexts));
}

template ad::NodePtr<float> interpupil_loss_node<float>(ad::NodePtr<float>, std::vector<LossContext>);
template ad::NodePtr<double> interpupil_loss_node<double>(ad::NodePtr<double>, std::vector<LossContext>);

// ---------------------------------------------------------------------------
// Augmentation.

const std::array<std::size_t, kLandmarkCount>& mirror_permutation() {
  static const std::array<std::size_t, kLandmarkCount> perm = {
      // jaw
      16, 15, 14, 13, 12, 11, 10, 9, 8, 7, 6, 5, 4, 3, 2, 1, 0,
      // brows
      26, 25, 24, 23, 22, 21, 20, 19, 18, 17,
      // nose bridge and base
      27, 28, 29, 30, 35, 34, 33, 32, 31,
      // eyes
      45, 44, 43, 42, 47, 46, 39, 38, 37, 36, 41, 40,
      // outer mouth
      54, 53, 52, 51, 50, 49, 48, 59, 58, 57, 56, 55,
      // inner mouth
      64, 63, 62, 61, 60, 67, 66, 65};
  return perm;
}

Shape mirror_shape(const Shape& shape, int image_width) {
  if (image_width <= 0) throw std::invalid_argument("mirror_shape: width must be positive");
  const auto& perm = mirror_permutation();
  Shape out;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    out[i] = {static_cast<double>(image_width - 1) - shape[perm[i]].x, shape[perm[i]].y};
  }
  return out;
}

GrayImage mirror_image(const GrayImage& image) {
  if (image.empty()) throw std::invalid_argument("mirror_image: empty image");
  GrayImage out(image.width, image.height);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) out.at(x, y) = image.at(image.width - 1 - x, y);
  }
  return out;
}

namespace {

BoundingBox transform_box(const SimilarityTransform& t, const BoundingBox& box) {
  const Vec2 corners[4] = {t({box.x, box.y}), t({box.x + box.width, box.y}),
                           t({box.x, box.y + box.height}),
                           t({box.x + box.width, box.y + box.height})};
  double x0 = corners[0].x, x1 = corners[0].x, y0 = corners[0].y, y1 = corners[0].y;
  for (const Vec2& c : corners) {
    x0 = std::min(x0, c.x);
    x1 = std::max(x1, c.x);
    y0 = std::min(y0, c.y);
    y1 = std::max(y1, c.y);
  }
  return {x0, y0, x1 - x0, y1 - y0};
}

BoundingBox grown_shape_box(const Shape& shape) {
  const BoundingBox sb = shape_bbox(shape);
  const Vec2 c = sb.center();
  const double w = sb.width * 1.05, h = sb.height * 1.05;
  return {c.x - w / 2.0, c.y - h / 2.0, w, h};
}

}  // namespace

std::vector<TrainSample> augment(const FaceRecord& record, rng::Engine& engine, std::size_t count,
                                 const AugmentParams& params) {
  if (record.image.empty()) throw std::invalid_argument("augment: record has no image");
  std::vector<TrainSample> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const bool mirrored = rng::uniform_unit(engine) < params.mirror_prob;
    const double angle_deg = rng::normal(engine, 0.0, params.rotation_stddev_deg);
    double scale = rng::normal(engine, 1.0, params.scale_stddev);
    const GrayImage& base_img = record.image;
    const Shape truth0 = mirrored ? mirror_shape(record.truth, base_img.width) : record.truth;
    const BoundingBox sb = shape_bbox(truth0);
    const double tstd = params.translation_frac * sb.larger_side();
    const double shift_x = rng::normal(engine, 0.0, tstd);
    const double shift_y = rng::normal(engine, 0.0, tstd);
    if (scale < 0.05) scale = 0.05;  // keep the warp invertible under extreme draws

    const double angle = angle_deg * 3.14159265358979323846 / 180.0;
    const Vec2 c = sb.center();
    SimilarityTransform t;
    t.a = scale * std::cos(angle);
    t.b = scale * std::sin(angle);
    t.tx = c.x - (t.a * c.x - t.b * c.y) + shift_x;
    t.ty = c.y - (t.b * c.x + t.a * c.y) + shift_y;

    TrainSample sample;
    const GrayImage img = mirrored ? mirror_image(base_img) : base_img;
    sample.image = warp_image(img, t, img.width, img.height);
    sample.truth = apply_transform(t, truth0);
    if (record.box.has_value()) {
      BoundingBox dbox = *record.box;
      if (mirrored) {
        dbox.x = static_cast<double>(base_img.width - 1) - (dbox.x + dbox.width);
      }
      sample.box = transform_box(t, dbox);
    } else {
      sample.box = grown_shape_box(sample.truth);
    }
    out.push_back(std::move(sample));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stage-wise training.

void TrainConfig::validate() const {
  if (stages < 1) throw std::invalid_argument("train config: need at least one stage");
  if (channel_divisor < 1) throw std::invalid_argument("train config: channel divisor must be positive");
  if (!(heatmap_radius > 0.0)) throw std::invalid_argument("train config: heatmap radius must be positive");
  if (!(canonical_margin >= 0.0) || !(canonical_margin < 0.5)) {
    throw std::invalid_argument("train config: canonical margin must lie in [0, 0.5)");
  }
  if (!(step_size > 0.0)) throw std::invalid_argument("train config: step size must be positive");
  if (batch_size < 2) throw std::invalid_argument("train config: batch size must be at least 2");
  if (!(dropout_rate >= 0.0) || !(dropout_rate <= 1.0)) {
    throw std::invalid_argument("train config: dropout rate must lie in [0, 1]");
  }
  if (augment_count < 1) throw std::invalid_argument("train config: augment count must be positive");
  if (validation_size < 1) throw std::invalid_argument("train config: validation size must be positive");
  if (max_epochs < 1) throw std::invalid_argument("train config: max epochs must be positive");
  if (patience < 1) throw std::invalid_argument("train config: patience must be positive");
  if (!(target_val_error >= 0.0)) throw std::invalid_argument("train config: target error must be non-negative");
  if (!(adam.beta1 >= 0.0) || !(adam.beta1 < 1.0) || !(adam.beta2 >= 0.0) || !(adam.beta2 < 1.0) ||
      !(adam.epsilon > 0.0)) {
    throw std::invalid_argument("train config: bad Adam constants");
  }
}

namespace {

/// Cached per-sample inputs for the stage being trained; everything upstream
/// of the trained parameters is frozen, so it is computed exactly once.
struct StageFeed {
  std::vector<float> image;     // standardized canonical-frame input plane
  std::vector<float> heatmap;   // empty for the first stage
  std::vector<float> fc1_prev;  // empty for the first stage
  Shape base;                   // canonical-frame landmarks the delta refines
  SimilarityTransform inverse;  // canonical frame -> original image
  Shape truth;
  double interpupil = 0.0;
};

std::vector<float> image_plane(const GrayImage& img) {
  std::vector<float> out(img.pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(img.pixels[i]);
  return out;
}

StageFeed build_feed(const TrainSample& sample, std::size_t stage_index, const Shape& canonical,
                     double radius, const DanRunner* prefix) {
  StageFeed feed;
  feed.truth = sample.truth;
  feed.interpupil = interpupil_distance(sample.truth);
  if (!(feed.interpupil > 0.0)) {
    throw std::invalid_argument("training: sample with zero inter-pupil distance");
  }
  const Shape init = place_shape_in_bbox(canonical, sample.box);
  const SimilarityTransform pre = estimate_similarity(init, canonical);
  const GrayImage canon = warp_image(sample.image, pre, kFrame, kFrame);
  const GrayImage standardized = standardize_image(canon);
  const Shape init_c = apply_transform(pre, init);
  if (stage_index == 0) {
    feed.image = image_plane(standardized);
    feed.base = init_c;
    feed.inverse = invert_transform(pre);
    return feed;
  }
  const DanRunner::Trace trace = prefix->run_trace(canon, init_c, stage_index);
  const Shape& prev = trace.shapes.back();
  const SimilarityTransform frame_tf = estimate_similarity(prev, canonical);
  feed.image = image_plane(warp_image(standardized, frame_tf, kFrame, kFrame));
  feed.base = apply_transform(frame_tf, prev);
  feed.heatmap = image_plane(generate_heatmap(feed.base, kFrame, kFrame, radius));
  feed.fc1_prev = trace.fc1.back();
  feed.inverse = invert_transform(compose(frame_tf, pre));
  return feed;
}

std::vector<StageFeed> build_feeds(std::span<const TrainSample> samples, std::size_t stage_index,
                                   const Shape& canonical, double radius, const DanRunner* prefix) {
  std::vector<StageFeed> feeds(samples.size());
  std::string error;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(samples.size()); ++i) {
    try {
      feeds[i] = build_feed(samples[i], stage_index, canonical, radius, prefix);
    } catch (const std::exception& e) {
#pragma omp critical
      if (error.empty()) error = e.what();
    }
  }
  if (!error.empty()) throw std::runtime_error("training input preparation failed: " + error);
  return feeds;
}

/// Contiguous index ranges of roughly batch_size; a remainder of one sample
/// is folded into the final batch so batch normalization always sees at
/// least two.
std::vector<std::pair<std::size_t, std::size_t>> plan_batches(std::size_t n,
                                                              std::size_t batch_size) {
  std::vector<std::pair<std::size_t, std::size_t>> plan;
  std::size_t begin = 0;
  while (begin < n) {
    std::size_t end = std::min(n, begin + batch_size);
    if (n - end == 1) end = n;
    plan.push_back({begin, end});
    begin = end;
  }
  return plan;
}

/// Assemble the graph input for feeds[indices[begin..end)]; the feature image
/// is decoded in-graph so the trained stage's feature path receives
/// gradients.
ad::NodePtr<float> batch_input(StageNet<float>& net, std::span<const StageFeed> feeds,
                               std::span<const std::size_t> indices) {
  const std::size_t b = indices.size();
  const std::size_t plane = static_cast<std::size_t>(kFrame) * kFrame;
  Tensor<float> images({b, 1, static_cast<std::size_t>(kFrame), static_cast<std::size_t>(kFrame)});
  for (std::size_t i = 0; i < b; ++i) {
    std::copy(feeds[indices[i]].image.begin(), feeds[indices[i]].image.end(),
              images.data() + i * plane);
  }
  if (!net.config.has_feature_path()) return ad::constant(std::move(images));
  Tensor<float> heats({b, 1, static_cast<std::size_t>(kFrame), static_cast<std::size_t>(kFrame)});
  Tensor<float> fc1({b, static_cast<std::size_t>(net.config.feature_input_units)});
  for (std::size_t i = 0; i < b; ++i) {
    std::copy(feeds[indices[i]].heatmap.begin(), feeds[indices[i]].heatmap.end(),
              heats.data() + i * plane);
    std::copy(feeds[indices[i]].fc1_prev.begin(), feeds[indices[i]].fc1_prev.end(),
              fc1.data() + i * net.config.feature_input_units);
  }
  ad::NodePtr<float> feature = feature_image_graph(net, ad::constant(std::move(fc1)));
  return ad::concat_channels<float>(
      {ad::constant(std::move(images)), ad::constant(std::move(heats)), std::move(feature)});
}

std::vector<LossContext> batch_contexts(std::span<const StageFeed> feeds,
                                        std::span<const std::size_t> indices) {
  std::vector<LossContext> out;
  out.reserve(indices.size());
  for (std::size_t idx : indices) {
    const StageFeed& f = feeds[idx];
    out.push_back({f.base, f.inverse, f.truth, f.interpupil});
  }
  return out;
}

double interocular_error(const Shape& predicted, const Shape& truth) {
  const double norm = interocular_distance(truth);
  double total = 0.0;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) total += distance(predicted[i], truth[i]);
  return total / (static_cast<double>(kLandmarkCount) * norm);
}

/// Mean inter-ocular validation error of the stage under its current
/// parameters (infer mode).
double validation_error(StageNet<float>& net, std::span<const StageFeed> feeds,
                        std::size_t batch_size) {
  double total = 0.0;
  std::vector<std::size_t> indices;
  for (const auto& [begin, end] : plan_batches(feeds.size(), batch_size)) {
    indices.resize(end - begin);
    std::iota(indices.begin(), indices.end(), begin);
    ad::NodePtr<float> input = batch_input(net, feeds, indices);
    StageGraph<float> g = stage_graph(net, std::move(input), ad::Mode::kInfer, 0.0, nullptr);
    for (std::size_t i = 0; i < indices.size(); ++i) {
      const StageFeed& f = feeds[indices[i]];
      Shape pred;
      for (std::size_t j = 0; j < kLandmarkCount; ++j) {
        const Vec2 p = {f.base[j].x + static_cast<double>(g.delta->value[i * 136 + 2 * j]),
                        f.base[j].y + static_cast<double>(g.delta->value[i * 136 + 2 * j + 1])};
        pred[j] = f.inverse(p);
      }
      total += interocular_error(pred, f.truth);
    }
  }
  return total / static_cast<double>(feeds.size());
}

StageParams snapshot_stage(const StageNet<float>& net) {
  StageParams snap;
  snap.config = net.config;
  store_stage(net, snap);
  return snap;
}

}  // namespace

StageTrainResult train_stage(DanModel& model, std::size_t stage_index,
                             std::span<const TrainSample> train, std::span<const TrainSample> val,
                             const TrainConfig& config) {
  config.validate();
  if (stage_index >= model.stages.size()) {
    throw std::invalid_argument("train_stage: stage index out of range");
  }
  if (train.size() < 2) throw std::invalid_argument("train_stage: need at least two training samples");
  if (val.empty()) throw std::invalid_argument("train_stage: need validation samples");

  // Inputs to this stage depend only on the frozen prefix, so they are
  // precomputed once for every sample.
  DanModel prefix_model;
  std::unique_ptr<DanRunner> prefix;
  if (stage_index > 0) {
    prefix_model.canonical_shape = model.canonical_shape;
    prefix_model.heatmap_radius = model.heatmap_radius;
    prefix_model.stages.assign(model.stages.begin(),
                               model.stages.begin() + static_cast<std::ptrdiff_t>(stage_index));
    prefix = std::make_unique<DanRunner>(prefix_model);
  }
  const std::vector<StageFeed> train_feeds =
      build_feeds(train, stage_index, model.canonical_shape, model.heatmap_radius, prefix.get());
  const std::vector<StageFeed> val_feeds =
      build_feeds(val, stage_index, model.canonical_shape, model.heatmap_radius, prefix.get());

  StageNet<float> net = lift_stage<float>(model.stages[stage_index], true);
  const std::vector<ad::NodePtr<float>> params = net.trainable_parameters();
  std::vector<AdamState<float>> adam;
  adam.reserve(params.size());
  for (const auto& p : params) adam.emplace_back(p->value.shape(), config.adam);

  StageTrainResult result;
  result.baseline_val_error = validation_error(net, val_feeds, config.batch_size);
  result.best_val_error = result.baseline_val_error;
  StageParams best = snapshot_stage(net);

  rng::Engine dropout_engine(rng::derive_seed(config.seed, 200 + stage_index));
  std::vector<std::size_t> order(train_feeds.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    rng::Engine shuffle_engine(rng::derive_seed(config.seed, 100 + stage_index, epoch));
    rng::shuffle(order.begin(), order.end(), shuffle_engine);

    double loss_sum = 0.0;
    for (const auto& [begin, end] : plan_batches(order.size(), config.batch_size)) {
      const std::span<const std::size_t> indices(order.data() + begin, end - begin);
      ad::NodePtr<float> input = batch_input(net, train_feeds, indices);
      StageGraph<float> g =
          stage_graph(net, std::move(input), ad::Mode::kTrain, config.dropout_rate, &dropout_engine);
      ad::NodePtr<float> loss = interpupil_loss_node(g.delta, batch_contexts(train_feeds, indices));
      ad::backward(loss);
      for (std::size_t p = 0; p < params.size(); ++p) {
        adam_step(params[p]->value, params[p]->grad, adam[p], config.step_size);
      }
      loss_sum += static_cast<double>(loss->value[0]) * static_cast<double>(indices.size());
    }

    const double val_error = validation_error(net, val_feeds, config.batch_size);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.epochs.push_back({epoch, loss_sum / static_cast<double>(train_feeds.size()), val_error,
                             seconds});

    if (val_error < result.best_val_error) {
      result.best_val_error = val_error;
      best = snapshot_stage(net);
      stale = 0;
    } else {
      ++stale;
    }
    if (config.target_val_error > 0.0 && val_error <= config.target_val_error) break;
    if (stale >= config.patience) break;
  }

  model.stages[stage_index] = std::move(best);
  return result;
}

TrainResult train_model(std::span<const FaceRecord> records, const TrainConfig& config) {
  config.validate();
  if (records.size() < config.validation_size + 2) {
    throw std::invalid_argument("train_model: need at least validation_size + 2 records");
  }

  std::vector<Shape> shapes;
  shapes.reserve(records.size());
  for (const FaceRecord& r : records) shapes.push_back(r.truth);
  const Shape canonical =
      compute_canonical_shape(shapes, static_cast<double>(kFrame), config.canonical_margin);

  DatasetSplit split = split_validation(std::vector<FaceRecord>(records.begin(), records.end()),
                                        config.validation_size, rng::derive_seed(config.seed, 2));

  std::vector<TrainSample> val_samples;
  val_samples.reserve(split.validation.size());
  for (const FaceRecord& r : split.validation) {
    val_samples.push_back({r.image, r.truth, r.box.has_value() ? *r.box : training_box(r)});
  }

  // Augmented copies are generated record-parallel with per-record seeds, so
  // the pool is reproducible independent of thread count.
  std::vector<std::vector<TrainSample>> per_record(split.training.size());
  std::string error;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(split.training.size()); ++i) {
    try {
      rng::Engine engine(rng::derive_seed(config.seed, 3, static_cast<std::uint64_t>(i)));
      per_record[i] =
          augment(split.training[i], engine, config.augment_count, config.augment_params);
    } catch (const std::exception& e) {
#pragma omp critical
      if (error.empty()) error = e.what();
    }
  }
  if (!error.empty()) throw std::runtime_error("augmentation failed: " + error);
  std::vector<TrainSample> train_samples;
  train_samples.reserve(split.training.size() * config.augment_count);
  for (auto& group : per_record) {
    for (auto& sample : group) train_samples.push_back(std::move(sample));
  }

  rng::Engine init_engine(rng::derive_seed(config.seed, 1));
  TrainResult result;
  result.model = init_model(canonical, config.stages, config.channel_divisor, init_engine,
                            config.heatmap_radius);

  double previous_best = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < config.stages; ++t) {
    StageTrainResult stage_result =
        train_stage(result.model, t, train_samples, val_samples, config);
    if (config.adaptive_stages && t > 0 && stage_result.best_val_error >= previous_best) {
      result.model.stages.resize(t);  // the stage did not help; drop it
      break;
    }
    previous_best = stage_result.best_val_error;
    result.stages.push_back(std::move(stage_result));
  }
  return result;
}

}  // namespace dan
