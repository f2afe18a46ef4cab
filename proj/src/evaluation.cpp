#include "dan/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>

#include "dan/imaging.hpp"

namespace dan {

std::string to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInterOcular: return "inter-ocular";
    case ErrorKind::kInterPupil: return "inter-pupil";
    case ErrorKind::kBboxDiagonal: return "bbox-diagonal";
  }
  throw std::invalid_argument("unknown error kind");
}

ErrorKind parse_error_kind(const std::string& text) {
  if (text == "inter-ocular") return ErrorKind::kInterOcular;
  if (text == "inter-pupil") return ErrorKind::kInterPupil;
  if (text == "bbox-diagonal") return ErrorKind::kBboxDiagonal;
  throw std::invalid_argument("unknown error kind '" + text +
                              "' (expected inter-ocular, inter-pupil, or bbox-diagonal)");
}

double normalized_error(const Shape& predicted, const Shape& truth, ErrorKind kind,
                        const BoundingBox* box) {
  double reference = 0.0;
  switch (kind) {
    case ErrorKind::kInterOcular:
      reference = interocular_distance(truth);
      break;
    case ErrorKind::kInterPupil:
      reference = interpupil_distance(truth);
      break;
    case ErrorKind::kBboxDiagonal:
      if (box == nullptr) {
        throw std::invalid_argument("bbox-diagonal normalization needs a detector box");
      }
      reference = box->diagonal();
      break;
  }
  if (!(reference > 0.0)) {
    throw std::invalid_argument("normalization reference length must be positive");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) total += distance(predicted[i], truth[i]);
  return total / (static_cast<double>(kLandmarkCount) * reference);
}

std::vector<std::pair<double, double>> ced_curve(std::span<const double> errors,
                                                 std::span<const double> thresholds) {
  if (errors.empty()) throw std::invalid_argument("ced_curve: no errors");
  std::vector<double> sorted(errors.begin(), errors.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::pair<double, double>> curve;
  curve.reserve(thresholds.size());
  for (double t : thresholds) {
    const auto it = std::upper_bound(sorted.begin(), sorted.end(), t);
    curve.push_back({t, static_cast<double>(it - sorted.begin()) /
                            static_cast<double>(sorted.size())});
  }
  return curve;
}

double auc_alpha(std::span<const double> errors, double alpha) {
  if (errors.empty()) throw std::invalid_argument("auc_alpha: no errors");
  if (!(alpha > 0.0)) throw std::invalid_argument("auc_alpha: alpha must be positive");
  double total = 0.0;
  for (double e : errors) total += std::max(0.0, alpha - e);
  return total / (alpha * static_cast<double>(errors.size()));
}

double failure_rate_percent(std::span<const double> errors, double threshold) {
  if (errors.empty()) throw std::invalid_argument("failure_rate: no errors");
  std::size_t failures = 0;
  for (double e : errors) {
    if (e >= threshold) ++failures;
  }
  return 100.0 * static_cast<double>(failures) / static_cast<double>(errors.size());
}

AlignmentResult align_with_box(const DanRunner& runner, const GrayImage& image,
                               const BoundingBox& box) {
  const Shape init = place_shape_in_bbox(runner.canonical_shape(), box);
  const SimilarityTransform pre = estimate_similarity(init, runner.canonical_shape());
  const GrayImage canonical = warp_image(image, pre, kFrame, kFrame);
  const std::vector<Shape> canonical_stages =
      runner.run(canonical, apply_transform(pre, init));
  AlignmentResult result;
  result.pre_transform = pre;
  const SimilarityTransform back = invert_transform(pre);
  result.per_stage.reserve(canonical_stages.size());
  for (const Shape& s : canonical_stages) result.per_stage.push_back(apply_transform(back, s));
  return result;
}

Shape two_step_align(const DanRunner& runner, const GrayImage& image, double height_fraction,
                     TwoStepInfo* info) {
  if (!(height_fraction > 0.0)) {
    throw std::invalid_argument("two_step_align: height fraction must be positive");
  }
  const double side = height_fraction * static_cast<double>(image.height);
  if (side > static_cast<double>(image.width)) {
    throw std::invalid_argument("two_step_align: centered square box exceeds image width");
  }
  const BoundingBox first_box = {(static_cast<double>(image.width) - side) / 2.0,
                                 (static_cast<double>(image.height) - side) / 2.0, side, side};
  const Shape step1 = align_with_box(runner, image, first_box).per_stage.back();
  if (info != nullptr) {
    info->box_side = side;
    info->step1 = step1;
    info->fell_back = false;
  }

  // Second pass: re-warp the original image so the first estimate sits in the
  // canonical frame, then align from the first estimate's box there.
  SimilarityTransform refit;
  try {
    refit = estimate_similarity(step1, runner.canonical_shape());
  } catch (const std::exception&) {
    if (info != nullptr) info->fell_back = true;
    return step1;
  }
  const GrayImage rewarped = warp_image(image, refit, kFrame, kFrame);
  const BoundingBox second_box = shape_bbox(apply_transform(refit, step1));
  const Shape refined =
      align_with_box(runner, rewarped, second_box).per_stage.back();
  return apply_transform(invert_transform(refit), refined);
}

EvaluationReport aggregate_report(std::span<const std::vector<Shape>> per_record_stages,
                                  std::span<const FaceRecord> records, ErrorKind kind, double alpha,
                                  double failure_threshold, std::size_t ced_points) {
  if (per_record_stages.size() != records.size() || records.empty()) {
    throw std::invalid_argument("aggregate_report: prediction/record count mismatch");
  }
  const std::size_t stage_count = per_record_stages.front().size();
  for (const auto& stages : per_record_stages) {
    if (stages.size() != stage_count || stage_count == 0) {
      throw std::invalid_argument("aggregate_report: inconsistent stage counts");
    }
  }

  EvaluationReport report;
  report.kind = kind;
  report.alpha = alpha;
  report.failure_threshold = failure_threshold;
  report.record_count = records.size();

  std::vector<std::vector<double>> errors(stage_count);
  for (auto& e : errors) e.reserve(records.size());
  for (std::size_t r = 0; r < records.size(); ++r) {
    const BoundingBox* box = records[r].box.has_value() ? &*records[r].box : nullptr;
    for (std::size_t s = 0; s < stage_count; ++s) {
      errors[s].push_back(
          normalized_error(per_record_stages[r][s], records[r].truth, kind, box));
    }
    report.ids.push_back(records[r].id);
  }
  for (std::size_t s = 0; s < stage_count; ++s) {
    StageMetrics m;
    double total = 0.0;
    for (double e : errors[s]) total += e;
    m.mean_error = total / static_cast<double>(errors[s].size());
    m.auc = auc_alpha(errors[s], alpha);
    m.failure_rate = failure_rate_percent(errors[s], failure_threshold);
    report.per_stage.push_back(m);
  }
  report.final_errors = errors.back();

  if (ced_points > 0) {
    std::vector<double> thresholds(ced_points);
    for (std::size_t i = 0; i < ced_points; ++i) {
      thresholds[i] = alpha * static_cast<double>(i + 1) / static_cast<double>(ced_points);
    }
    report.ced = ced_curve(report.final_errors, thresholds);
  }
  return report;
}

EvaluationReport evaluate_model(const DanModel& model, std::span<const FaceRecord> records,
                                ErrorKind kind, double alpha, double failure_threshold,
                                std::size_t ced_points) {
  if (records.empty()) throw std::invalid_argument("evaluate_model: no records");
  for (const FaceRecord& r : records) {
    if (!r.box.has_value()) {
      throw std::invalid_argument("evaluate_model: record '" + r.id + "' has no detector box");
    }
  }
  const DanRunner runner(model);
  std::vector<std::vector<Shape>> predictions(records.size());
  std::string error;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(records.size()); ++i) {
    try {
      predictions[i] = align_with_box(runner, records[i].image, *records[i].box).per_stage;
    } catch (const std::exception& e) {
#pragma omp critical
      if (error.empty()) error = records[i].id + ": " + e.what();
    }
  }
  if (!error.empty()) throw std::runtime_error("evaluation failed: " + error);
  return aggregate_report(predictions, records, kind, alpha, failure_threshold, ced_points);
}

std::string format_report(const EvaluationReport& report) {
  char buffer[160];
  std::string out;
  out += "normalization = " + to_string(report.kind) + "\n";
  std::snprintf(buffer, sizeof(buffer), "alpha = %.6f\n", report.alpha);
  out += buffer;
  std::snprintf(buffer, sizeof(buffer), "failure_threshold = %.6f\n", report.failure_threshold);
  out += buffer;
  out += "records = " + std::to_string(report.record_count) + "\n";
  for (std::size_t s = 0; s < report.per_stage.size(); ++s) {
    const StageMetrics& m = report.per_stage[s];
    std::snprintf(buffer, sizeof(buffer),
                  "stage%zu_mean_error = %.6f\nstage%zu_auc = %.6f\nstage%zu_failure_rate = %.4f\n",
                  s + 1, m.mean_error, s + 1, m.auc, s + 1, m.failure_rate);
    out += buffer;
  }
  return out;
}

}  // namespace dan
