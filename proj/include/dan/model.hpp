#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dan/autodiff.hpp"
#include "dan/geometry.hpp"
#include "dan/gray_image.hpp"
#include "dan/imaging.hpp"
#include "dan/rng.hpp"
#include "dan/tensor.hpp"

// Multi-stage landmark regressor. Every stage runs on a 112x112 canonical
// frame and predicts a landmark update in that frame; between stages the
// input image is re-warped by the similarity that maps the current estimate
// onto the canonical shape, and the next stage additionally receives a
// landmark heatmap and a feature image decoded from the previous stage's
// penultimate activations.

namespace dan {

inline constexpr int kFrame = 112;
inline constexpr int kFeatureMapSide = 56;  // feature images decode to 56x56, then double to 112x112

extern const std::array<const char*, 8> kConvLayerNames;  // conv1a .. conv4b

struct StageConfig {
  int input_channels = 1;
  std::array<int, 8> conv_channels{64, 64, 128, 128, 256, 256, 512, 512};
  int fc1_units = 256;
  /// fc1 width of the previous stage feeding this stage's feature-image
  /// decoder; 0 means no feature path (the first stage).
  int feature_input_units = 0;
  static constexpr int kLandmarkOutputs = static_cast<int>(2 * kLandmarkCount);

  bool has_feature_path() const { return feature_input_units > 0; }
  int feature_units() const { return kFeatureMapSide * kFeatureMapSide; }

  /// Full-size configuration; channel_divisor > 1 shrinks every width for
  /// desk-scale experiments.
  static StageConfig first_stage(int channel_divisor = 1);
  static StageConfig later_stage(int channel_divisor = 1);

  void validate() const;
};

struct BatchNormParams {
  Tensor<float> gamma, beta, running_mean, running_var;
  float epsilon = 1e-5f;
  float momentum = 0.9f;
};

struct ConvBlockParams {
  Tensor<float> weights;  // [out, in, 3, 3]
  BatchNormParams bn;
};

struct StageParams {
  StageConfig config;
  std::array<ConvBlockParams, 8> conv;
  Tensor<float> fc1_weights, fc1_bias;
  BatchNormParams fc1_bn;
  Tensor<float> fc2_weights, fc2_bias;
  Tensor<float> feature_weights, feature_bias;  // empty without a feature path
};

/// He-style uniform initialization for conv/dense weights; the final landmark
/// layer starts at zero so an untrained stage is an identity refinement.
StageParams init_stage_params(const StageConfig& config, rng::Engine& engine);

struct DanModel {
  Shape canonical_shape;
  double heatmap_radius = 16.0;
  std::vector<StageParams> stages;

  std::size_t stage_count() const { return stages.size(); }
};

DanModel init_model(const Shape& canonical, std::size_t stage_count, int channel_divisor,
                    rng::Engine& engine, double heatmap_radius = 16.0);

std::uint64_t hash_stage_params(const StageParams& params);

// ---------------------------------------------------------------------------
// Graph construction. A StageNet holds the stage parameters lifted into graph
// leaves once; stage_graph then splices them into a fresh per-batch graph.

template <typename T>
struct StageNet {
  StageConfig config;
  std::array<ad::NodePtr<T>, 8> conv_weights;
  std::array<ad::BatchNormState<T>, 8> conv_bn;
  ad::NodePtr<T> fc1_weights, fc1_bias;
  ad::BatchNormState<T> fc1_bn;
  ad::NodePtr<T> fc2_weights, fc2_bias;
  ad::NodePtr<T> feature_weights, feature_bias;

  std::vector<ad::NodePtr<T>> trainable_parameters() const;
};

template <typename T>
StageNet<T> lift_stage(const StageParams& params, bool trainable);

/// Write values (and batch-norm running statistics) back into float params.
template <typename T>
void store_stage(const StageNet<T>& net, StageParams& params);

template <typename T>
struct StageGraph {
  ad::NodePtr<T> delta;  // [N, 136] landmark update, canonical-frame pixels
  ad::NodePtr<T> fc1;    // [N, fc1_units] post-activation penultimate features
  /// Named layer outputs in feed-forward order (conv1a..conv4b, pool1..pool4,
  /// fc1, fc2), for shape inspection.
  std::vector<std::pair<std::string, ad::NodePtr<T>>> taps;
};

/// Feed-forward column on input [N, C, 112, 112]. Dropout applies before fc1
/// in train mode; `engine` may be null in infer mode or when rate is zero.
template <typename T>
StageGraph<T> stage_graph(StageNet<T>& net, ad::NodePtr<T> input, ad::Mode mode,
                          double dropout_rate, rng::Engine* engine);

/// Feature-image column: previous-stage fc1 [N, U] through a ReLU dense layer
/// to 3136 units, reshaped to 56x56 and doubled to [N, 1, 112, 112].
template <typename T>
ad::NodePtr<T> feature_image_graph(const StageNet<T>& net, ad::NodePtr<T> fc1_prev);

// ---------------------------------------------------------------------------
// Inference.

/// Single-image stage evaluation in infer mode. Stages without a feature path
/// take empty (or all-zero) heatmap/feature images.
struct StageEvalResult {
  std::vector<float> delta;  // 136, interleaved x0 y0 x1 y1 ...
  std::vector<float> fc1;
};
StageEvalResult stage_forward(const StageParams& params, const GrayImage& image,
                              const GrayImage& heatmap, const GrayImage& feature);

/// Inference engine over a trained model; holds lifted stage graphs and may be
/// shared across threads for concurrent read-only use.
class DanRunner {
 public:
  explicit DanRunner(const DanModel& model);

  std::size_t stage_count() const { return configs_.size(); }
  const Shape& canonical_shape() const { return canonical_; }
  double heatmap_radius() const { return heatmap_radius_; }

  /// Run every stage on an already-canonical image (standardized internally),
  /// starting from `init` in that image's coordinates; returns the estimate
  /// after each stage, all in the input image's coordinates.
  std::vector<Shape> run(const GrayImage& canonical_image, const Shape& init) const;

  struct Trace {
    std::vector<Shape> shapes;
    std::vector<std::vector<float>> fc1;
    /// In-frame similarity each stage normalized by (identity for stage 0).
    std::vector<SimilarityTransform> transforms;
  };
  Trace run_trace(const GrayImage& canonical_image, const Shape& init, std::size_t stage_limit) const;

  struct ConnectionImages {
    GrayImage warped;
    GrayImage heatmap;
    GrayImage feature;
    SimilarityTransform transform;
  };
  /// The inputs stage `next_stage` would receive given the current estimate
  /// and the previous stage's fc1 activations.
  ConnectionImages connection_forward(std::size_t next_stage, const GrayImage& canonical_image,
                                      const Shape& current, std::span<const float> fc1_prev) const;

 private:
  Shape canonical_;
  double heatmap_radius_ = 16.0;
  std::vector<StageConfig> configs_;
  std::shared_ptr<std::vector<StageNet<float>>> nets_;
};

// ---------------------------------------------------------------------------
// Container format: "DAN1" magic, a length-prefixed text manifest describing
// the architecture and blob table, raw little-endian blobs, and a trailing
// FNV-1a checksum of everything before it.

void save_model(const DanModel& model, std::ostream& out);
void save_model(const DanModel& model, const std::filesystem::path& path);
DanModel load_model(std::istream& in);
DanModel load_model(const std::filesystem::path& path);

/// Validate magic and checksum, then return the manifest text.
std::string read_model_manifest(const std::filesystem::path& path);

}  // namespace dan
