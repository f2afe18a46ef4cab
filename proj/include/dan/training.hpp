#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "dan/autodiff.hpp"
#include "dan/dataset.hpp"
#include "dan/geometry.hpp"
#include "dan/model.hpp"
#include "dan/rng.hpp"
#include "dan/tensor.hpp"

namespace dan {

// ---------------------------------------------------------------------------
// Optimizer.

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  Tensor<T> m, v;
  std::int64_t step = 0;
  AdamConfig config;

  AdamState() = default;
  AdamState(std::vector<std::size_t> shape, AdamConfig cfg = {})
      : m(shape), v(std::move(shape)), config(cfg) {}
};

/// One bias-corrected Adam update; shapes of params/grads/state must agree.
template <typename T>
void adam_step(Tensor<T>& params, const Tensor<T>& grads, AdamState<T>& state,
               double learning_rate);

// ---------------------------------------------------------------------------
// Loss.

/// Mean landmark distance between prediction and truth divided by the truth's
/// inter-pupil distance.
double interpupil_loss(const Shape& predicted, const Shape& truth);

/// Per-sample context for the differentiable loss head: the stage's output
/// delta is added to `base` (canonical-frame landmarks), mapped back to the
/// original image by `inverse`, and compared against `truth` there.
struct LossContext {
  Shape base;
  SimilarityTransform inverse;
  Shape truth;
  double interpupil;
};

/// Differentiable head over a [N, 136] delta batch; value is the mean of the
/// per-sample inter-pupil normalized errors.
template <typename T>
ad::NodePtr<T> interpupil_loss_node(ad::NodePtr<T> delta, std::vector<LossContext> contexts);

// ---------------------------------------------------------------------------
// Augmentation.

struct AugmentParams {
  double mirror_prob = 0.5;
  double rotation_stddev_deg = 20.0;
  double scale_stddev = 0.1;
  /// Translation stddev as a fraction of the larger shape-bbox side.
  double translation_frac = 0.05;
};

/// Landmark index permutation under horizontal mirroring (iBUG numbering).
const std::array<std::size_t, kLandmarkCount>& mirror_permutation();
Shape mirror_shape(const Shape& shape, int image_width);
GrayImage mirror_image(const GrayImage& image);

struct TrainSample {
  GrayImage image;
  Shape truth;
  BoundingBox box;
};

/// `count` independently perturbed copies of a record: optional mirror, then
/// rotation/scale about the shape-bbox center plus translation. A record
/// without a detector box gets the ground-truth substitute box; detector
/// boxes are carried through the transform by their corners.
std::vector<TrainSample> augment(const FaceRecord& record, rng::Engine& engine, std::size_t count,
                                 const AugmentParams& params);

// ---------------------------------------------------------------------------
// Stage-wise training.

struct TrainConfig {
  std::size_t stages = 2;
  int channel_divisor = 1;
  double heatmap_radius = 16.0;
  double canonical_margin = 0.1;

  double step_size = 1e-3;
  AdamConfig adam;
  std::size_t batch_size = 64;
  double dropout_rate = 0.5;

  std::size_t augment_count = 10;
  AugmentParams augment_params;

  std::size_t validation_size = 100;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  /// Optional early-exit threshold on validation error; 0 disables it.
  double target_val_error = 0.0;

  /// When set, a stage whose best validation error fails to improve on the
  /// previous stage's is dropped and training stops.
  bool adaptive_stages = false;

  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;     // 1-based
  double train_loss = 0.0;   // mean inter-pupil training loss
  double val_error = 0.0;    // mean inter-ocular validation error
  double seconds = 0.0;
};

struct StageTrainResult {
  std::vector<EpochRecord> epochs;
  double baseline_val_error = 0.0;  // before the first update
  double best_val_error = 0.0;      // of the snapshot written back
};

/// Train one stage with earlier stages frozen; the stage's parameters are
/// replaced by the best-validation snapshot observed (including the
/// untrained baseline).
StageTrainResult train_stage(DanModel& model, std::size_t stage_index,
                             std::span<const TrainSample> train, std::span<const TrainSample> val,
                             const TrainConfig& config);

struct TrainResult {
  DanModel model;
  std::vector<StageTrainResult> stages;
};

/// End-to-end training: canonical shape from the training shapes, validation
/// split, augmentation, then sequential per-stage training.
TrainResult train_model(std::span<const FaceRecord> records, const TrainConfig& config);

}  // namespace dan
