#include "dan/evaluation.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "dan/rng.hpp"
#include "synthetic.hpp"

namespace dan {
namespace {

Shape shifted(const Shape& s, double dx, double dy) {
  Shape out = s;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    out[i].x += dx;
    out[i].y += dy;
  }
  return out;
}

TEST(ErrorKind, RoundTripsThroughStrings) {
  for (ErrorKind kind : {ErrorKind::kInterOcular, ErrorKind::kInterPupil, ErrorKind::kBboxDiagonal}) {
    EXPECT_EQ(parse_error_kind(to_string(kind)), kind);
  }
  EXPECT_EQ(to_string(ErrorKind::kInterOcular), "inter-ocular");
  EXPECT_EQ(to_string(ErrorKind::kInterPupil), "inter-pupil");
  EXPECT_EQ(to_string(ErrorKind::kBboxDiagonal), "bbox-diagonal");
  EXPECT_THROW(parse_error_kind("eye-banana"), std::invalid_argument);
}

TEST(NormalizedError, MatchesHandComputedReferences) {
  const Shape truth = test::place_face(test::FaceParams{}, {70.0, 66.0}, 35.0, 0.0);
  const Shape pred = shifted(truth, 3.0, -4.0);  // every landmark off by 5 px
  const BoundingBox box{20.0, 30.0, 90.0, 120.0};

  EXPECT_NEAR(normalized_error(pred, truth, ErrorKind::kInterOcular),
              5.0 / interocular_distance(truth), 1e-12);
  EXPECT_NEAR(normalized_error(pred, truth, ErrorKind::kInterPupil),
              5.0 / interpupil_distance(truth), 1e-12);
  EXPECT_NEAR(normalized_error(pred, truth, ErrorKind::kBboxDiagonal, &box),
              5.0 / std::hypot(90.0, 120.0), 1e-12);
}

TEST(NormalizedError, EyeDistanceDefinitions) {
  const Shape s = test::place_face(test::FaceParams{}, {70.0, 66.0}, 35.0, 0.0);
  // outer-corner distance uses landmarks 36 and 45
  EXPECT_NEAR(interocular_distance(s), distance(s[36], s[45]), 1e-12);
  // pupil distance uses the eye-ring centroids (36..41 and 42..47)
  Vec2 left{0, 0}, right{0, 0};
  for (std::size_t i = 36; i < 42; ++i) left = left + s[i];
  for (std::size_t i = 42; i < 48; ++i) right = right + s[i];
  left = (1.0 / 6.0) * left;
  right = (1.0 / 6.0) * right;
  EXPECT_NEAR(interpupil_distance(s), distance(left, right), 1e-12);
  EXPECT_GT(interocular_distance(s), interpupil_distance(s));
}

TEST(NormalizedError, BboxDiagonalNeedsBox) {
  const Shape s = test::face_template(test::FaceParams{});
  EXPECT_THROW(normalized_error(s, s, ErrorKind::kBboxDiagonal, nullptr), std::invalid_argument);
}

TEST(NormalizedError, InvariantUnderRigidMotion) {
  rng::Engine engine(71);
  const Shape truth = test::place_face(test::random_face_params(engine), {70.0, 66.0}, 35.0, 0.0);
  const Shape pred = shifted(truth, 1.0, 2.0);
  const double before = normalized_error(pred, truth, ErrorKind::kInterOcular);

  const SimilarityTransform rot{std::cos(0.7), std::sin(0.7), 31.0, -8.0};
  const double after = normalized_error(apply_transform(rot, pred), apply_transform(rot, truth),
                                        ErrorKind::kInterOcular);
  EXPECT_NEAR(before, after, 1e-12);
}

TEST(CedCurve, MatchesCountingOracle) {
  const std::vector<double> errors = {0.01, 0.02, 0.02, 0.05, 0.07, 0.40};
  const std::vector<double> thresholds = {0.005, 0.01, 0.02, 0.03, 0.07, 0.5};
  const auto curve = ced_curve(errors, thresholds);
  ASSERT_EQ(curve.size(), thresholds.size());
  for (std::size_t i = 0; i < curve.size(); ++i) {
    EXPECT_EQ(curve[i].first, thresholds[i]);
    std::size_t count = 0;
    for (double e : errors) count += e <= thresholds[i];
    EXPECT_DOUBLE_EQ(curve[i].second, static_cast<double>(count) / errors.size());
  }
  // monotone nondecreasing, ends at 1 for a threshold beyond the max error
  for (std::size_t i = 1; i < curve.size(); ++i) EXPECT_GE(curve[i].second, curve[i - 1].second);
  EXPECT_DOUBLE_EQ(curve.back().second, 1.0);
}

TEST(AucAlpha, MatchesGridIntegration) {
  rng::Engine engine(72);
  std::vector<double> errors(400);
  for (double& e : errors) e = rng::uniform_range(engine, 0.0, 0.2);
  const double alpha = 0.08;

  // Midpoint integration of the empirical CED over [0, alpha].
  const std::size_t grid = 100000;
  double integral = 0.0;
  for (std::size_t i = 0; i < grid; ++i) {
    const double t = alpha * (static_cast<double>(i) + 0.5) / static_cast<double>(grid);
    std::size_t count = 0;
    for (double e : errors) count += e <= t;
    integral += static_cast<double>(count) / static_cast<double>(errors.size());
  }
  integral /= static_cast<double>(grid);  // already normalized by alpha

  EXPECT_NEAR(auc_alpha(errors, alpha), integral, 1e-4);
}

TEST(AucAlpha, ClosedFormCases) {
  EXPECT_DOUBLE_EQ(auc_alpha(std::vector<double>{0.0, 0.0}, 0.08), 1.0);
  EXPECT_DOUBLE_EQ(auc_alpha(std::vector<double>{1.0, 2.0}, 0.08), 0.0);
  EXPECT_DOUBLE_EQ(auc_alpha(std::vector<double>{0.04}, 0.08), 0.5);
  EXPECT_THROW(auc_alpha(std::vector<double>{0.1}, 0.0), std::invalid_argument);
}

TEST(FailureRate, ThresholdIsInclusive) {
  EXPECT_DOUBLE_EQ(failure_rate_percent(std::vector<double>{0.04, 0.10}, 0.08), 50.0);
  EXPECT_DOUBLE_EQ(failure_rate_percent(std::vector<double>{0.08}, 0.08), 100.0);
  EXPECT_DOUBLE_EQ(failure_rate_percent(std::vector<double>{0.0, 0.01, 0.079}, 0.08), 0.0);
}

// -- alignment paths --------------------------------------------------------

DanModel zero_model(std::size_t stages, std::uint64_t seed) {
  std::vector<Shape> shapes;
  for (const FaceRecord& r : test::synthetic_corpus(4, seed, {})) shapes.push_back(r.truth);
  rng::Engine engine(seed);
  return init_model(compute_canonical_shape(shapes), stages, 32, engine);
}

TEST(AlignWithBox, ZeroModelReturnsBoxPlacedCanonical) {
  const DanModel model = zero_model(2, 81);
  const DanRunner runner(model);
  const FaceRecord record = test::synthetic_corpus(1, 82, {}).front();
  const BoundingBox box = *record.box;

  const AlignmentResult result = align_with_box(runner, record.image, box);
  ASSERT_EQ(result.per_stage.size(), 2u);
  const Shape expected = place_shape_in_bbox(runner.canonical_shape(), box);
  for (const Shape& s : result.per_stage) {
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
      EXPECT_NEAR(s[i].x, expected[i].x, 1e-6);
      EXPECT_NEAR(s[i].y, expected[i].y, 1e-6);
    }
  }
  // the pre-transform maps the initial estimate into the canonical frame
  const Shape warped_init = apply_transform(result.pre_transform, expected);
  const BoundingBox wb = shape_bbox(warped_init);
  EXPECT_GT(wb.x, 0.0);
  EXPECT_LT(wb.x + wb.width, 112.0);
}

TEST(TwoStepAlign, UsesCenteredSquareAndMatchesStepOneForZeroModel) {
  const DanModel model = zero_model(1, 83);
  const DanRunner runner(model);
  GrayImage image(160, 200, 0.5);

  TwoStepInfo info;
  const Shape final_shape = two_step_align(runner, image, 0.46, &info);
  EXPECT_NEAR(info.box_side, 0.46 * 200.0, 1e-9);

  // step 1 of a zero model is the canonical shape placed in that square
  const double side = info.box_side;
  const BoundingBox square{(160.0 - side) / 2.0, (200.0 - side) / 2.0, side, side};
  const Shape expected = place_shape_in_bbox(runner.canonical_shape(), square);
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    EXPECT_NEAR(info.step1[i].x, expected[i].x, 1e-6);
    EXPECT_NEAR(info.step1[i].y, expected[i].y, 1e-6);
  }
  // and the second pass cannot move a zero model's estimate
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    EXPECT_NEAR(final_shape[i].x, info.step1[i].x, 1e-6);
    EXPECT_NEAR(final_shape[i].y, info.step1[i].y, 1e-6);
  }
  EXPECT_FALSE(info.fell_back);
}

TEST(TwoStepAlign, RejectsBoxWiderThanImage) {
  const DanModel model = zero_model(1, 84);
  const DanRunner runner(model);
  GrayImage tall(40, 200, 0.5);  // 0.46 * 200 = 92 > 40
  EXPECT_THROW(two_step_align(runner, tall, 0.46, nullptr), std::invalid_argument);
}

// -- aggregation ------------------------------------------------------------

TEST(AggregateReport, PerfectPredictionsScorePerfectly) {
  std::vector<FaceRecord> records = test::synthetic_corpus(5, 85, {});
  std::vector<std::vector<Shape>> per_record;
  for (const FaceRecord& r : records) per_record.push_back({r.truth, r.truth});

  const EvaluationReport report =
      aggregate_report(per_record, records, ErrorKind::kInterOcular, 0.08, 0.08, 10);
  EXPECT_EQ(report.record_count, 5u);
  ASSERT_EQ(report.per_stage.size(), 2u);
  for (const StageMetrics& m : report.per_stage) {
    EXPECT_NEAR(m.mean_error, 0.0, 1e-15);
    EXPECT_NEAR(m.auc, 1.0, 1e-15);
    EXPECT_DOUBLE_EQ(m.failure_rate, 0.0);
  }
  ASSERT_EQ(report.final_errors.size(), 5u);
  ASSERT_EQ(report.ids.size(), 5u);
  EXPECT_EQ(report.ids[0], records[0].id);
  ASSERT_EQ(report.ced.size(), 10u);
  EXPECT_NEAR(report.ced.back().first, 0.08, 1e-12);
  for (const auto& [threshold, fraction] : report.ced) EXPECT_DOUBLE_EQ(fraction, 1.0);
}

TEST(AggregateReport, LaterStageCanBeWorse) {
  std::vector<FaceRecord> records = test::synthetic_corpus(3, 86, {});
  std::vector<std::vector<Shape>> per_record;
  for (const FaceRecord& r : records) {
    per_record.push_back({r.truth, shifted(r.truth, 5.0, 0.0)});
  }
  const EvaluationReport report =
      aggregate_report(per_record, records, ErrorKind::kInterPupil, 0.08, 0.08, 5);
  EXPECT_NEAR(report.per_stage[0].mean_error, 0.0, 1e-15);
  EXPECT_GT(report.per_stage[1].mean_error, 0.0);
  // final errors reflect the last stage
  EXPECT_GT(report.final_errors[0], 0.0);
}

TEST(AggregateReport, ValidatesShapeCounts) {
  std::vector<FaceRecord> records = test::synthetic_corpus(2, 87, {});
  std::vector<std::vector<Shape>> per_record = {{records[0].truth}, {}};
  EXPECT_THROW(
      aggregate_report(per_record, records, ErrorKind::kInterOcular, 0.08, 0.08, 5),
      std::invalid_argument);
}

// -- end-to-end evaluation --------------------------------------------------

TEST(EvaluateModel, ZeroModelIsExactWhenTruthSitsAtBoxPlacedCanonical) {
  const DanModel model = zero_model(2, 88);
  const DanRunner runner(model);

  // Build records whose ground truth is exactly where a zero model predicts.
  std::vector<FaceRecord> records = test::synthetic_corpus(3, 89, {});
  for (FaceRecord& r : records) {
    r.truth = place_shape_in_bbox(runner.canonical_shape(), *r.box);
  }
  const EvaluationReport report = evaluate_model(model, records, ErrorKind::kInterOcular);
  EXPECT_EQ(report.record_count, 3u);
  for (const StageMetrics& m : report.per_stage) {
    EXPECT_NEAR(m.mean_error, 0.0, 1e-6);
    EXPECT_NEAR(m.auc, 1.0, 1e-4);
  }
}

TEST(EvaluateModel, BoxlessRecordIsAnError) {
  const DanModel model = zero_model(1, 90);
  std::vector<FaceRecord> records = test::synthetic_corpus(2, 91, {});
  records[1].box.reset();
  try {
    evaluate_model(model, records, ErrorKind::kInterOcular);
    FAIL() << "expected a missing-box failure";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find(records[1].id), std::string::npos) << e.what();
  }
}

TEST(FormatReport, ListsPerStageMetrics) {
  std::vector<FaceRecord> records = test::synthetic_corpus(2, 92, {});
  std::vector<std::vector<Shape>> per_record;
  for (const FaceRecord& r : records) per_record.push_back({r.truth, r.truth});
  const EvaluationReport report =
      aggregate_report(per_record, records, ErrorKind::kInterOcular, 0.08, 0.08, 5);
  const std::string text = format_report(report);
  EXPECT_NE(text.find("normalization = inter-ocular"), std::string::npos) << text;
  EXPECT_NE(text.find("records = 2"), std::string::npos);
  EXPECT_NE(text.find("stage1_mean_error"), std::string::npos);
  EXPECT_NE(text.find("stage2_mean_error"), std::string::npos);
  EXPECT_NE(text.find("stage2_auc"), std::string::npos);
  EXPECT_NE(text.find("stage2_failure_rate"), std::string::npos);
}

}  // namespace
}  // namespace dan
