#include "dan/training.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

#include "dan/rng.hpp"
#include "synthetic.hpp"

namespace dan {
namespace {

TEST(AdamStep, FirstStepMovesByLearningRate) {
  // With bias correction the very first update is ~lr * sign(grad) for any
  // gradient magnitude (m_hat / sqrt(v_hat) = g / |g| up to epsilon).
  Tensor<double> params({3}, {1.0, -2.0, 0.5});
  const Tensor<double> grads({3}, {100.0, -0.001, 5.0});
  AdamState<double> state({3});
  adam_step(params, grads, state, 0.01);
  EXPECT_NEAR(params[0], 1.0 - 0.01, 1e-6);
  EXPECT_NEAR(params[1], -2.0 + 0.01, 1e-4);  // epsilon bites on tiny gradients
  EXPECT_NEAR(params[2], 0.5 - 0.01, 1e-6);
  EXPECT_EQ(state.step, 1);
}

TEST(AdamStep, MatchesClosedFormForTwoSteps) {
  const AdamConfig cfg;
  Tensor<double> params({1}, {0.0});
  AdamState<double> state({1}, cfg);
  const double g1 = 0.3, g2 = -0.2, lr = 0.1;

  adam_step(params, Tensor<double>({1}, {g1}), state, lr);
  adam_step(params, Tensor<double>({1}, {g2}), state, lr);

  double m = 0.0, v = 0.0, x = 0.0;
  for (int t = 1; t <= 2; ++t) {
    const double g = t == 1 ? g1 : g2;
    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
    const double mh = m / (1 - std::pow(cfg.beta1, t));
    const double vh = v / (1 - std::pow(cfg.beta2, t));
    x -= lr * mh / (std::sqrt(vh) + cfg.epsilon);
  }
  EXPECT_NEAR(params[0], x, 1e-15);
  EXPECT_EQ(state.step, 2);
}

TEST(AdamStep, RejectsShapeMismatch) {
  Tensor<double> params({3});
  AdamState<double> state({3});
  EXPECT_THROW(adam_step(params, Tensor<double>({2}), state, 0.1), std::invalid_argument);
}

TEST(InterpupilLoss, ZeroForPerfectPrediction) {
  const Shape s = test::face_template(test::FaceParams{});
  EXPECT_DOUBLE_EQ(interpupil_loss(s, s), 0.0);
}

TEST(InterpupilLoss, MatchesHandComputation) {
  Shape truth = test::place_face(test::FaceParams{}, {60.0, 60.0}, 40.0, 0.0);
  Shape pred = truth;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) pred[i].y += 2.0;  // uniform 2 px offset
  const double expected = 2.0 / interpupil_distance(truth);
  EXPECT_NEAR(interpupil_loss(pred, truth), expected, 1e-12);
}

TEST(InterpupilLossNode, ValueMatchesScalarLoss) {
  rng::Engine engine(41);
  std::vector<LossContext> contexts;
  Tensor<double> delta({2, 136});
  for (std::size_t n = 0; n < 2; ++n) {
    LossContext ctx;
    ctx.truth = test::place_face(test::random_face_params(engine), {70.0, 66.0}, 35.0, 0.1);
    ctx.base = place_shape_in_bbox(compute_canonical_shape({&ctx.truth, 1}), {10, 10, 92, 92});
    SimilarityTransform fwd{1.3, 0.2, 4.0, -2.0};
    ctx.inverse = invert_transform(fwd);
    ctx.interpupil = interpupil_distance(ctx.truth);
    contexts.push_back(ctx);
    for (std::size_t i = 0; i < 136; ++i) {
      delta[n * 136 + i] = rng::uniform_range(engine, -1.0, 1.0);
    }
  }
  ad::NodePtr<double> node = interpupil_loss_node(ad::constant(delta), contexts);

  double expected = 0.0;
  for (std::size_t n = 0; n < 2; ++n) {
    Shape mapped;
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
      mapped[i] = {contexts[n].base[i].x + delta[n * 136 + 2 * i],
                   contexts[n].base[i].y + delta[n * 136 + 2 * i + 1]};
    }
    mapped = apply_transform(contexts[n].inverse, mapped);
    expected += interpupil_loss(mapped, contexts[n].truth);
  }
  expected /= 2.0;
  EXPECT_NEAR(node->value[0], expected, 1e-12);
}

TEST(InterpupilLossNode, GradientMatchesFiniteDifferences) {
  rng::Engine engine(42);
  std::vector<LossContext> contexts;
  Tensor<double> delta({2, 136});
  for (std::size_t n = 0; n < 2; ++n) {
    LossContext ctx;
    ctx.truth = test::place_face(test::random_face_params(engine), {70.0, 66.0}, 35.0, -0.05);
    ctx.base = place_shape_in_bbox(compute_canonical_shape({&ctx.truth, 1}), {12, 8, 90, 95});
    ctx.inverse = invert_transform(SimilarityTransform{0.9, -0.15, 2.0, 5.0});
    ctx.interpupil = interpupil_distance(ctx.truth);
    contexts.push_back(ctx);
    for (std::size_t i = 0; i < 136; ++i) {
      delta[n * 136 + i] = rng::uniform_range(engine, -2.0, 2.0);
    }
  }
  const auto loss = [&] {
    return interpupil_loss_node(ad::constant(delta), contexts)->value[0];
  };
  ad::NodePtr<double> leaf_node = ad::leaf(delta, true);
  ad::NodePtr<double> node = interpupil_loss_node(leaf_node, contexts);
  ad::backward(node);
  const ad::FdCheckReport report =
      ad::finite_difference_check(loss, delta, leaf_node->grad, 1e-5, 1e-4);
  EXPECT_TRUE(report.pass) << "max rel " << report.max_rel_error;
}

// -- mirroring --------------------------------------------------------------

TEST(MirrorPermutation, IsAnInvolutionWithKnownFixedPoints) {
  const auto& perm = mirror_permutation();
  const std::set<std::size_t> expected_fixed = {8, 27, 28, 29, 30, 33, 51, 57, 62, 66};
  std::set<std::size_t> seen;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    EXPECT_EQ(perm[perm[i]], i) << i;
    EXPECT_TRUE(seen.insert(perm[i]).second);  // a true permutation
    if (perm[i] == i) {
      EXPECT_TRUE(expected_fixed.count(i)) << i;
    }
  }
  for (std::size_t i : expected_fixed) EXPECT_EQ(perm[i], i);
  // spot checks: jaw endpoints and eye corners swap
  EXPECT_EQ(perm[0], 16u);
  EXPECT_EQ(perm[36], 45u);
  EXPECT_EQ(perm[39], 42u);
  EXPECT_EQ(perm[48], 54u);
}

TEST(MirrorShape, TemplateIsMirrorSymmetric) {
  // The template builds its sides trigonometrically, so symmetry holds to
  // rounding error rather than bitwise.
  const Shape s = test::face_template(test::FaceParams{});
  const auto& perm = mirror_permutation();
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    EXPECT_NEAR(s[perm[i]].x, -s[i].x, 1e-12) << i;
    EXPECT_NEAR(s[perm[i]].y, s[i].y, 1e-12) << i;
  }
}

TEST(MirrorShape, DoubleMirrorIsIdentity) {
  rng::Engine engine(43);
  const Shape s = test::place_face(test::random_face_params(engine), {70.0, 70.0}, 30.0, 0.2);
  const Shape twice = mirror_shape(mirror_shape(s, 140), 140);
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    EXPECT_DOUBLE_EQ(twice[i].x, s[i].x);
    EXPECT_DOUBLE_EQ(twice[i].y, s[i].y);
  }
}

TEST(MirrorImage, FlipsColumnsExactly) {
  GrayImage img(3, 2);
  for (int i = 0; i < 6; ++i) img.pixels[i] = static_cast<double>(i);
  const GrayImage m = mirror_image(img);
  EXPECT_EQ(m.at(0, 0), 2.0);
  EXPECT_EQ(m.at(2, 0), 0.0);
  EXPECT_EQ(m.at(1, 1), 4.0);
  const GrayImage twice = mirror_image(m);
  EXPECT_EQ(twice.pixels, img.pixels);
}

// -- augmentation -----------------------------------------------------------

FaceRecord one_record(std::uint64_t seed) {
  return test::synthetic_corpus(1, seed, {}).front();
}

AugmentParams zero_variance() {
  AugmentParams p;
  p.mirror_prob = 0.0;
  p.rotation_stddev_deg = 0.0;
  p.scale_stddev = 0.0;
  p.translation_frac = 0.0;
  return p;
}

TEST(Augment, ZeroVarianceReproducesTheRecord) {
  const FaceRecord record = one_record(51);
  rng::Engine engine(1);
  const std::vector<TrainSample> samples = augment(record, engine, 2, zero_variance());
  ASSERT_EQ(samples.size(), 2u);
  for (const TrainSample& s : samples) {
    EXPECT_EQ(s.image.pixels, record.image.pixels);
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
      EXPECT_NEAR(s.truth[i].x, record.truth[i].x, 1e-12);
      EXPECT_NEAR(s.truth[i].y, record.truth[i].y, 1e-12);
    }
    EXPECT_NEAR(s.box.x, record.box->x, 1e-12);
    EXPECT_NEAR(s.box.width, record.box->width, 1e-12);
  }
}

TEST(Augment, CertainMirrorGivesExactMirror) {
  const FaceRecord record = one_record(52);
  AugmentParams params = zero_variance();
  params.mirror_prob = 1.0;
  rng::Engine engine(2);
  const std::vector<TrainSample> samples = augment(record, engine, 1, params);
  ASSERT_EQ(samples.size(), 1u);

  const GrayImage expected_img = mirror_image(record.image);
  const Shape expected_shape = mirror_shape(record.truth, record.image.width);
  EXPECT_EQ(samples[0].image.pixels, expected_img.pixels);
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    EXPECT_NEAR(samples[0].truth[i].x, expected_shape[i].x, 1e-12);
    EXPECT_NEAR(samples[0].truth[i].y, expected_shape[i].y, 1e-12);
  }
  // the detector box flips too: x' = (W - 1) - (x + w)
  const double w = record.image.width - 1.0;
  EXPECT_NEAR(samples[0].box.x, w - (record.box->x + record.box->width), 1e-9);
  EXPECT_NEAR(samples[0].box.y, record.box->y, 1e-9);
  EXPECT_NEAR(samples[0].box.width, record.box->width, 1e-9);
}

TEST(Augment, DeterministicForEqualSeeds) {
  const FaceRecord record = one_record(53);
  AugmentParams params;  // defaults: everything active
  rng::Engine e1(77), e2(77), e3(78);
  const std::vector<TrainSample> a = augment(record, e1, 3, params);
  const std::vector<TrainSample> b = augment(record, e2, 3, params);
  const std::vector<TrainSample> c = augment(record, e3, 3, params);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(a[k].image.pixels, b[k].image.pixels);
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
      EXPECT_EQ(a[k].truth[i].x, b[k].truth[i].x);
      EXPECT_EQ(a[k].truth[i].y, b[k].truth[i].y);
    }
  }
  bool differs = false;
  for (std::size_t k = 0; k < 3 && !differs; ++k) {
    differs = a[k].image.pixels != c[k].image.pixels;
  }
  EXPECT_TRUE(differs);
}

TEST(Augment, PerturbedCopiesKeepLandmarksOnFeatures) {
  // The warped image must follow the warped landmarks: the pupils stay dark.
  const FaceRecord record = one_record(54);
  AugmentParams params;
  params.mirror_prob = 0.5;
  rng::Engine engine(9);
  const std::vector<TrainSample> samples = augment(record, engine, 6, params);
  for (const TrainSample& s : samples) {
    // eye centers (pupil marks) are rendered darker than the head disc
    const Vec2 left = 0.5 * (s.truth[37] + s.truth[40]);
    const Vec2 right = 0.5 * (s.truth[43] + s.truth[46]);
    for (const Vec2& p : {left, right}) {
      const int x = static_cast<int>(std::lround(p.x));
      const int y = static_cast<int>(std::lround(p.y));
      if (s.image.contains(x, y)) {
        double local = 0.0;
        int count = 0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (s.image.contains(x + dx, y + dy)) {
              local += s.image.at(x + dx, y + dy);
              ++count;
            }
          }
        }
        local /= count;
        EXPECT_LT(local, 0.75) << "pupil region suspiciously bright";
      }
    }
  }
}

TEST(Augment, RecordWithoutBoxGetsGroundTruthSubstitute) {
  FaceRecord record = one_record(55);
  record.box.reset();
  rng::Engine engine(3);
  const std::vector<TrainSample> samples = augment(record, engine, 1, zero_variance());
  const BoundingBox expected = training_box(record);
  EXPECT_NEAR(samples[0].box.x, expected.x, 1e-12);
  EXPECT_NEAR(samples[0].box.width, expected.width, 1e-12);
}

// -- configuration and the training loop ------------------------------------

TEST(TrainConfig, ValidateCatchesBadValues) {
  TrainConfig config;
  config.stages = 0;
  EXPECT_THROW(config.validate(), std::invalid_argument);
  config = TrainConfig();
  config.batch_size = 1;
  EXPECT_THROW(config.validate(), std::invalid_argument);
  config = TrainConfig();
  config.dropout_rate = 1.5;
  EXPECT_THROW(config.validate(), std::invalid_argument);
  config = TrainConfig();
  config.augment_count = 0;
  EXPECT_THROW(config.validate(), std::invalid_argument);
  config = TrainConfig();
  config.max_epochs = 0;
  EXPECT_THROW(config.validate(), std::invalid_argument);
  config = TrainConfig();
  config.validate();  // defaults are fine
}

TrainConfig tiny_config() {
  TrainConfig config;
  config.stages = 2;
  config.channel_divisor = 64;
  config.step_size = 1e-3;
  config.batch_size = 8;
  config.dropout_rate = 0.0;
  config.augment_count = 2;
  config.validation_size = 2;
  config.max_epochs = 2;
  config.patience = 5;
  config.seed = 7;
  return config;
}

TEST(TrainModel, SmokeRunImprovesOrHoldsValidationError) {
  const std::vector<FaceRecord> records = test::synthetic_corpus(8, 61, {});
  const TrainResult result = train_model(records, tiny_config());
  ASSERT_EQ(result.model.stage_count(), 2u);
  ASSERT_EQ(result.stages.size(), 2u);
  for (const StageTrainResult& stage : result.stages) {
    ASSERT_FALSE(stage.epochs.empty());
    EXPECT_LE(stage.epochs.size(), 2u);
    // the snapshot rule guarantees the kept weights are never worse than the
    // untrained baseline
    EXPECT_LE(stage.best_val_error, stage.baseline_val_error + 1e-12);
    for (const EpochRecord& e : stage.epochs) {
      EXPECT_TRUE(std::isfinite(e.train_loss));
      EXPECT_TRUE(std::isfinite(e.val_error));
      EXPECT_GE(e.seconds, 0.0);
    }
  }
  // stage 2 starts from stage 1's best, so its baseline equals that error
  EXPECT_NEAR(result.stages[1].baseline_val_error, result.stages[0].best_val_error, 0.05);
}

TEST(TrainModel, DeterministicForEqualConfig) {
  const std::vector<FaceRecord> records = test::synthetic_corpus(8, 62, {});
  TrainConfig config = tiny_config();
  config.stages = 1;
  config.max_epochs = 1;
  const TrainResult a = train_model(records, config);
  const TrainResult b = train_model(records, config);
  ASSERT_EQ(a.model.stage_count(), 1u);
  EXPECT_EQ(hash_stage_params(a.model.stages[0]), hash_stage_params(b.model.stages[0]));
  EXPECT_EQ(a.stages[0].epochs[0].train_loss, b.stages[0].epochs[0].train_loss);
  EXPECT_EQ(a.stages[0].epochs[0].val_error, b.stages[0].epochs[0].val_error);
}

TEST(TrainModel, TargetValErrorStopsEarly) {
  const std::vector<FaceRecord> records = test::synthetic_corpus(8, 63, {});
  TrainConfig config = tiny_config();
  config.stages = 1;
  config.max_epochs = 10;
  config.target_val_error = 1e9;  // already met by the baseline
  const TrainResult result = train_model(records, config);
  EXPECT_LE(result.stages[0].epochs.size(), 1u);
}

TEST(TrainModel, RejectsTooFewRecords) {
  const std::vector<FaceRecord> records = test::synthetic_corpus(2, 64, {});
  EXPECT_THROW(train_model(records, tiny_config()), std::exception);
}

}  // namespace
}  // namespace dan
