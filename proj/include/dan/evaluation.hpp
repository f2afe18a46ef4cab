#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dan/dataset.hpp"
#include "dan/geometry.hpp"
#include "dan/model.hpp"

namespace dan {

enum class ErrorKind { kInterOcular, kInterPupil, kBboxDiagonal };

std::string to_string(ErrorKind kind);
ErrorKind parse_error_kind(const std::string& text);

/// Mean landmark distance normalized by the chosen reference length; the
/// bbox-diagonal kind requires `box`.
double normalized_error(const Shape& predicted, const Shape& truth, ErrorKind kind,
                        const BoundingBox* box = nullptr);

/// Fraction of errors at or below each threshold (cumulative error curve).
std::vector<std::pair<double, double>> ced_curve(std::span<const double> errors,
                                                 std::span<const double> thresholds);

/// Exact area under the cumulative error curve up to alpha, normalized to
/// [0, 1]: mean over samples of max(0, alpha - e) / alpha.
double auc_alpha(std::span<const double> errors, double alpha);

/// Percentage of samples with error at or above the threshold.
double failure_rate_percent(std::span<const double> errors, double threshold = 0.08);

/// Full cascade on one image given a detector box: the canonical shape is
/// placed in the box, the image warped to the canonical frame, and every
/// stage's output mapped back to image coordinates.
struct AlignmentResult {
  std::vector<Shape> per_stage;
  SimilarityTransform pre_transform;  // image -> canonical frame
};
AlignmentResult align_with_box(const DanRunner& runner, const GrayImage& image,
                               const BoundingBox& box);

/// Detector-free two-step alignment: first pass from a centered square box
/// with side height_fraction * image height, second pass from the canonical
/// re-warp of the first estimate.
struct TwoStepInfo {
  double box_side = 0.0;
  Shape step1;
  bool fell_back = false;  // step 2 skipped because step 1 was degenerate
};
Shape two_step_align(const DanRunner& runner, const GrayImage& image,
                     double height_fraction = 0.46, TwoStepInfo* info = nullptr);

struct StageMetrics {
  double mean_error = 0.0;
  double auc = 0.0;
  double failure_rate = 0.0;  // percent
};

struct EvaluationReport {
  ErrorKind kind = ErrorKind::kInterOcular;
  double alpha = 0.08;
  double failure_threshold = 0.08;
  std::size_t record_count = 0;
  std::vector<StageMetrics> per_stage;
  std::vector<std::string> ids;       // per record
  std::vector<double> final_errors;   // per record, last stage
  std::vector<std::pair<double, double>> ced;  // final stage
};

/// Aggregate metrics from per-record, per-stage predictions. Exposed so the
/// metric path can be exercised with synthetic predictions.
EvaluationReport aggregate_report(std::span<const std::vector<Shape>> per_record_stages,
                                  std::span<const FaceRecord> records, ErrorKind kind, double alpha,
                                  double failure_threshold, std::size_t ced_points);

/// Run the cascade over every record (detector boxes required) and aggregate.
EvaluationReport evaluate_model(const DanModel& model, std::span<const FaceRecord> records,
                                ErrorKind kind, double alpha = 0.08,
                                double failure_threshold = 0.08, std::size_t ced_points = 100);

std::string format_report(const EvaluationReport& report);

}  // namespace dan
