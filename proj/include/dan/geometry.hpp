#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>

namespace dan {

inline constexpr std::size_t kLandmarkCount = 68;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
inline double distance(Vec2 a, Vec2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Fixed set of 68 landmark positions following the iBUG numbering
/// (0-based): 0-16 jaw, 17-26 brows, 27-35 nose, 36-41 left eye,
/// 42-47 right eye, 48-67 mouth.
struct Shape {
  std::array<Vec2, kLandmarkCount> points{};

  Vec2& operator[](std::size_t i) { return points[i]; }
  const Vec2& operator[](std::size_t i) const { return points[i]; }
  auto begin() { return points.begin(); }
  auto end() { return points.end(); }
  auto begin() const { return points.begin(); }
  auto end() const { return points.end(); }
};

/// Similarity map p -> [[a, -b], [b, a]] p + (tx, ty); positive determinant
/// a^2 + b^2 means scale without reflection.
struct SimilarityTransform {
  double a = 1.0;
  double b = 0.0;
  double tx = 0.0;
  double ty = 0.0;

  Vec2 operator()(Vec2 p) const { return {a * p.x - b * p.y + tx, b * p.x + a * p.y + ty}; }
  double scale() const { return std::sqrt(a * a + b * b); }
};

struct BoundingBox {
  double x = 0.0;
  double y = 0.0;
  double width = 0.0;
  double height = 0.0;

  Vec2 center() const { return {x + width / 2.0, y + height / 2.0}; }
  double larger_side() const { return width > height ? width : height; }
  double diagonal() const { return std::hypot(width, height); }
};

Shape apply_transform(const SimilarityTransform& t, const Shape& s);

/// Least-squares similarity aligning src onto dst. Throws std::invalid_argument
/// when points are not finite or src has zero spread.
SimilarityTransform estimate_similarity(const Shape& src, const Shape& dst);

/// Inverse map; throws std::invalid_argument when the transform is singular.
SimilarityTransform invert_transform(const SimilarityTransform& t);

/// Composition: (compose(outer, inner))(p) == outer(inner(p)).
SimilarityTransform compose(const SimilarityTransform& outer, const SimilarityTransform& inner);

Vec2 shape_centroid(const Shape& s);
BoundingBox shape_bbox(const Shape& s);

/// Mean shape of the set under iterated Procrustes alignment, oriented so the
/// eye axis is horizontal, then scaled and centered so its bounding box fits a
/// `frame`-sized square with `margin_fraction` of the frame left free on each
/// side of the longest extent.
Shape compute_canonical_shape(std::span<const Shape> shapes, double frame = 112.0,
                              double margin_fraction = 0.1);

/// Scale and translate `canonical` so that the larger side of its bounding box
/// matches the larger side of `box`, centers coinciding.
Shape place_shape_in_bbox(const Shape& canonical, const BoundingBox& box);

Vec2 left_eye_center(const Shape& s);
Vec2 right_eye_center(const Shape& s);

/// Distance between outer eye corners (landmarks 36 and 45).
double interocular_distance(const Shape& s);

/// Distance between eye centroids (landmarks 36-41 vs 42-47).
double interpupil_distance(const Shape& s);

}  // namespace dan
