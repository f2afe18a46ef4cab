#include "dan/model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dan/errors.hpp"
#include "dan/gray_image.hpp"
#include "dan/rng.hpp"
#include "synthetic.hpp"

namespace dan {
namespace {

Shape test_canonical() {
  const std::vector<Shape> shapes = {test::face_template(test::FaceParams{})};
  return compute_canonical_shape(shapes);
}

GrayImage random_frame(std::uint64_t seed) {
  rng::Engine engine(seed);
  GrayImage img(kFrame, kFrame);
  for (double& p : img.pixels) p = rng::uniform_unit(engine);
  return img;
}

TEST(StageConfig, FirstAndLaterStageWidths) {
  const StageConfig first = StageConfig::first_stage();
  EXPECT_EQ(first.input_channels, 1);
  EXPECT_EQ(first.conv_channels, (std::array<int, 8>{64, 64, 128, 128, 256, 256, 512, 512}));
  EXPECT_EQ(first.fc1_units, 256);
  EXPECT_FALSE(first.has_feature_path());

  const StageConfig later = StageConfig::later_stage();
  EXPECT_EQ(later.input_channels, 3);
  EXPECT_EQ(later.feature_input_units, 256);
  EXPECT_TRUE(later.has_feature_path());
  EXPECT_EQ(later.feature_units(), 56 * 56);
}

TEST(StageConfig, ChannelDivisorShrinksEveryWidth) {
  const StageConfig cfg = StageConfig::later_stage(8);
  EXPECT_EQ(cfg.conv_channels, (std::array<int, 8>{8, 8, 16, 16, 32, 32, 64, 64}));
  EXPECT_EQ(cfg.fc1_units, 32);
  EXPECT_EQ(cfg.feature_input_units, 32);
  EXPECT_EQ(cfg.input_channels, 3);  // connection channels never shrink
}

TEST(StageConfig, ValidateRejectsBadWidths) {
  StageConfig cfg = StageConfig::first_stage();
  cfg.conv_channels[3] = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = StageConfig::first_stage();
  cfg.fc1_units = -1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = StageConfig::first_stage();
  cfg.input_channels = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(InitStageParams, ShapesAndInitialization) {
  rng::Engine engine(11);
  const StageConfig cfg = StageConfig::later_stage(4);
  const StageParams p = init_stage_params(cfg, engine);

  int in_ch = cfg.input_channels;
  for (std::size_t i = 0; i < 8; ++i) {
    const std::size_t out_ch = static_cast<std::size_t>(cfg.conv_channels[i]);
    ASSERT_EQ(p.conv[i].weights.shape(),
              (std::vector<std::size_t>{out_ch, static_cast<std::size_t>(in_ch), 3, 3}));
    EXPECT_EQ(p.conv[i].bn.gamma.size(), out_ch);
    EXPECT_EQ(p.conv[i].bn.running_var.size(), out_ch);
    for (std::size_t c = 0; c < out_ch; ++c) {
      EXPECT_EQ(p.conv[i].bn.gamma[c], 1.0f);
      EXPECT_EQ(p.conv[i].bn.beta[c], 0.0f);
      EXPECT_EQ(p.conv[i].bn.running_mean[c], 0.0f);
      EXPECT_EQ(p.conv[i].bn.running_var[c], 1.0f);
    }
    // He-style uniform bound sqrt(6 / fan_in)
    const double bound = std::sqrt(6.0 / (in_ch * 9.0));
    float max_abs = 0.0f;
    for (std::size_t k = 0; k < p.conv[i].weights.size(); ++k) {
      max_abs = std::max(max_abs, std::abs(p.conv[i].weights[k]));
    }
    EXPECT_LE(max_abs, bound + 1e-6);
    EXPECT_GT(max_abs, 0.1 * bound);  // actually randomized
    in_ch = cfg.conv_channels[i];
  }

  const std::size_t flat = static_cast<std::size_t>(cfg.conv_channels[7]) * 7 * 7;
  ASSERT_EQ(p.fc1_weights.shape(),
            (std::vector<std::size_t>{static_cast<std::size_t>(cfg.fc1_units), flat}));
  EXPECT_EQ(p.fc1_bias.size(), static_cast<std::size_t>(cfg.fc1_units));
  ASSERT_EQ(p.fc2_weights.shape(),
            (std::vector<std::size_t>{136, static_cast<std::size_t>(cfg.fc1_units)}));
  for (std::size_t i = 0; i < p.fc2_weights.size(); ++i) EXPECT_EQ(p.fc2_weights[i], 0.0f);
  for (std::size_t i = 0; i < p.fc2_bias.size(); ++i) EXPECT_EQ(p.fc2_bias[i], 0.0f);

  ASSERT_EQ(p.feature_weights.shape(),
            (std::vector<std::size_t>{56 * 56, static_cast<std::size_t>(cfg.feature_input_units)}));
  EXPECT_EQ(p.feature_bias.size(), static_cast<std::size_t>(56 * 56));

  const StageParams first = init_stage_params(StageConfig::first_stage(4), engine);
  EXPECT_EQ(first.feature_weights.size(), 0u);
}

TEST(StageGraph, FullSizeLayerShapesMatchSpecTable) {
  rng::Engine engine(12);
  const StageParams params = init_stage_params(StageConfig::first_stage(), engine);
  StageNet<float> net = lift_stage<float>(params, false);

  Tensor<float> input({1, 1, 112, 112});
  rng::Engine pixel_engine(13);
  for (std::size_t i = 0; i < input.size(); ++i) {
    input[i] = static_cast<float>(rng::uniform_unit(pixel_engine));
  }
  const StageGraph<float> g =
      stage_graph(net, ad::constant(std::move(input)), ad::Mode::kInfer, 0.0, nullptr);

  const std::vector<std::pair<std::string, std::vector<std::size_t>>> expected = {
      {"conv1a", {1, 64, 112, 112}}, {"conv1b", {1, 64, 112, 112}}, {"pool1", {1, 64, 56, 56}},
      {"conv2a", {1, 128, 56, 56}},  {"conv2b", {1, 128, 56, 56}},  {"pool2", {1, 128, 28, 28}},
      {"conv3a", {1, 256, 28, 28}},  {"conv3b", {1, 256, 28, 28}},  {"pool3", {1, 256, 14, 14}},
      {"conv4a", {1, 512, 14, 14}},  {"conv4b", {1, 512, 14, 14}},  {"pool4", {1, 512, 7, 7}},
      {"fc1", {1, 256}},             {"fc2", {1, 136}}};
  ASSERT_EQ(g.taps.size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_EQ(g.taps[i].first, expected[i].first);
    EXPECT_EQ(g.taps[i].second->value.shape(), expected[i].second) << expected[i].first;
  }
  EXPECT_EQ(g.delta.get(), g.taps.back().second.get());
  EXPECT_EQ(g.fc1->value.shape(), (std::vector<std::size_t>{1, 256}));
}

TEST(StageForward, ZeroFinalLayerGivesZeroDelta) {
  rng::Engine engine(14);
  const StageParams params = init_stage_params(StageConfig::first_stage(16), engine);
  const GrayImage image = random_frame(15);
  const StageEvalResult r = stage_forward(params, image, GrayImage(), GrayImage());
  ASSERT_EQ(r.delta.size(), 136u);
  for (float d : r.delta) EXPECT_EQ(d, 0.0f);
  EXPECT_EQ(r.fc1.size(), static_cast<std::size_t>(params.config.fc1_units));
}

TEST(StageForward, LaterStageTakesConnectionImages) {
  rng::Engine engine(16);
  const StageParams params = init_stage_params(StageConfig::later_stage(16), engine);
  const GrayImage image = random_frame(17);
  const GrayImage heatmap = random_frame(18);
  const GrayImage feature = random_frame(19);
  const StageEvalResult r = stage_forward(params, image, heatmap, feature);
  ASSERT_EQ(r.delta.size(), 136u);
  // missing connection inputs for a 3-channel stage are rejected
  EXPECT_THROW(stage_forward(params, image, GrayImage(), GrayImage()), std::invalid_argument);
}

TEST(DanRunner, ZeroModelKeepsInitialShape) {
  rng::Engine engine(21);
  const Shape canonical = test_canonical();
  const DanModel model = init_model(canonical, 2, 16, engine);
  const DanRunner runner(model);
  EXPECT_EQ(runner.stage_count(), 2u);

  const GrayImage image = random_frame(22);
  // start slightly off-canonical so inter-stage re-warping actually engages
  Shape init = canonical;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    init[i].x += 3.0;
    init[i].y -= 2.0;
  }
  const std::vector<Shape> stages = runner.run(image, init);
  ASSERT_EQ(stages.size(), 2u);
  for (const Shape& s : stages) {
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
      EXPECT_NEAR(s[i].x, init[i].x, 1e-9);
      EXPECT_NEAR(s[i].y, init[i].y, 1e-9);
    }
  }
}

TEST(DanRunner, ConnectionForwardShapes) {
  rng::Engine engine(23);
  const DanModel model = init_model(test_canonical(), 2, 16, engine);
  const DanRunner runner(model);
  const GrayImage image = random_frame(24);
  const Shape current = runner.canonical_shape();
  const std::vector<float> fc1(static_cast<std::size_t>(model.stages[0].config.fc1_units), 0.1f);
  const DanRunner::ConnectionImages conn = runner.connection_forward(1, image, current, fc1);
  EXPECT_EQ(conn.warped.width, kFrame);
  EXPECT_EQ(conn.warped.height, kFrame);
  EXPECT_EQ(conn.heatmap.width, kFrame);
  EXPECT_EQ(conn.feature.width, kFrame);
  double heat_max = 0.0;
  for (double p : conn.heatmap.pixels) heat_max = std::max(heat_max, p);
  EXPECT_GT(heat_max, 0.9);  // a landmark sits near some pixel center
}

TEST(LiftStore, RoundTripPreservesEveryParameter) {
  rng::Engine engine(25);
  const StageParams original = init_stage_params(StageConfig::later_stage(8), engine);
  const std::uint64_t before = hash_stage_params(original);

  StageNet<float> net = lift_stage<float>(original, true);
  EXPECT_FALSE(net.trainable_parameters().empty());
  StageParams restored = original;
  restored.fc1_bias.fill(42.0f);  // prove store overwrites
  store_stage(net, restored);
  EXPECT_EQ(hash_stage_params(restored), before);
}

TEST(LiftStore, DoubleLiftKeepsValues) {
  rng::Engine engine(26);
  const StageParams original = init_stage_params(StageConfig::first_stage(8), engine);
  StageNet<double> net = lift_stage<double>(original, true);
  StageParams restored = original;
  store_stage(net, restored);
  // float -> double -> float is exact
  EXPECT_EQ(hash_stage_params(restored), hash_stage_params(original));
}

TEST(ModelIo, SaveLoadRoundTripIsExact) {
  rng::Engine engine(27);
  DanModel model = init_model(test_canonical(), 2, 8, engine, 12.5);
  // make running statistics non-trivial so they are exercised by the container
  model.stages[0].conv[0].bn.running_mean[0] = 0.25f;
  model.stages[1].fc1_bn.running_var[1] = 3.5f;

  std::stringstream buffer(std::ios::in | std::ios::out | std::ios::binary);
  save_model(model, buffer);
  const std::string first = buffer.str();

  DanModel loaded = load_model(buffer);
  EXPECT_EQ(loaded.stage_count(), 2u);
  EXPECT_EQ(loaded.heatmap_radius, 12.5);
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    EXPECT_EQ(loaded.canonical_shape[i].x, model.canonical_shape[i].x);
    EXPECT_EQ(loaded.canonical_shape[i].y, model.canonical_shape[i].y);
  }
  for (std::size_t t = 0; t < 2; ++t) {
    EXPECT_EQ(hash_stage_params(loaded.stages[t]), hash_stage_params(model.stages[t]))
        << "stage " << t;
  }

  std::stringstream again(std::ios::in | std::ios::out | std::ios::binary);
  save_model(loaded, again);
  EXPECT_EQ(again.str(), first);  // byte-identical re-serialization
}

std::string serialized_model() {
  rng::Engine engine(28);
  const DanModel model = init_model(test_canonical(), 1, 16, engine);
  std::stringstream buffer(std::ios::in | std::ios::out | std::ios::binary);
  save_model(model, buffer);
  return buffer.str();
}

ModelIoError::Kind load_kind(std::string bytes) {
  std::istringstream in(std::move(bytes), std::ios::binary);
  try {
    load_model(in);
  } catch (const ModelIoError& e) {
    return e.kind();
  }
  throw std::logic_error("expected the load to fail");
}

TEST(ModelIo, TamperedByteFailsChecksum) {
  std::string bytes = serialized_model();
  bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x01);
  EXPECT_EQ(load_kind(std::move(bytes)), ModelIoError::Kind::kChecksumMismatch);
}

TEST(ModelIo, TruncationFailsChecksum) {
  std::string bytes = serialized_model();
  bytes.resize(bytes.size() - 100);
  EXPECT_EQ(load_kind(std::move(bytes)), ModelIoError::Kind::kChecksumMismatch);
}

TEST(ModelIo, TooShortIsMalformed) {
  EXPECT_EQ(load_kind(std::string("DAN1tiny")), ModelIoError::Kind::kMalformed);
}

TEST(ModelIo, WrongMagicIsMalformed) {
  std::string bytes = serialized_model();
  bytes[0] = 'X';
  EXPECT_EQ(load_kind(std::move(bytes)), ModelIoError::Kind::kMalformed);
}

TEST(ModelIo, FutureVersionByteIsVersionMismatch) {
  std::string bytes = serialized_model();
  bytes[3] = '2';
  EXPECT_EQ(load_kind(std::move(bytes)), ModelIoError::Kind::kVersionMismatch);
}

TEST(ModelIo, ManifestDescribesArchitecture) {
  const std::string bytes = serialized_model();
  const std::filesystem::path path =
      std::filesystem::temp_directory_path() / "dan_manifest_test.bin";
  {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  const std::string manifest = read_model_manifest(path);
  EXPECT_NE(manifest.find("format = dan-model"), std::string::npos);
  EXPECT_NE(manifest.find("stages = 1"), std::string::npos);
  EXPECT_NE(manifest.find("blob = canonical_shape f64 136"), std::string::npos);
  EXPECT_NE(manifest.find("stage0.conv1a.weights"), std::string::npos);
  std::filesystem::remove(path);
}

TEST(HashStageParams, SensitiveToAnyValue) {
  rng::Engine engine(29);
  const StageParams p = init_stage_params(StageConfig::first_stage(16), engine);
  StageParams q = p;
  q.conv[3].bn.running_mean[0] += 1e-6f;
  EXPECT_NE(hash_stage_params(p), hash_stage_params(q));
}

}  // namespace
}  // namespace dan
