#include "dan/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace dan {

namespace {

void require_finite(const Shape& s, const char* what) {
  for (const Vec2& p : s.points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw std::invalid_argument(std::string(what) + ": landmark coordinates must be finite");
    }
  }
}

/// Translate centroid to the origin and scale the root-mean-square landmark
/// radius to one.
Shape normalize_for_mean(const Shape& s) {
  const Vec2 c = shape_centroid(s);
  double sq = 0.0;
  for (const Vec2& p : s.points) {
    const Vec2 d = p - c;
    sq += d.x * d.x + d.y * d.y;
  }
  const double rms = std::sqrt(sq / static_cast<double>(kLandmarkCount));
  if (!(rms > 0.0)) throw std::invalid_argument("canonical shape: degenerate input shape");
  Shape out;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    out[i] = {(s[i].x - c.x) / rms, (s[i].y - c.y) / rms};
  }
  return out;
}

}  // namespace

Shape apply_transform(const SimilarityTransform& t, const Shape& s) {
  Shape out;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) out[i] = t(s[i]);
  return out;
}

SimilarityTransform estimate_similarity(const Shape& src, const Shape& dst) {
  require_finite(src, "estimate_similarity");
  require_finite(dst, "estimate_similarity");
  const Vec2 cs = shape_centroid(src);
  const Vec2 cd = shape_centroid(dst);
  double denom = 0.0, dot = 0.0, cross = 0.0;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    const Vec2 p = src[i] - cs;
    const Vec2 q = dst[i] - cd;
    denom += p.x * p.x + p.y * p.y;
    dot += p.x * q.x + p.y * q.y;
    cross += p.x * q.y - p.y * q.x;
  }
  if (!(denom > 0.0)) {
    throw std::invalid_argument("estimate_similarity: source shape has zero spread");
  }
  SimilarityTransform t;
  t.a = dot / denom;
  t.b = cross / denom;
  t.tx = cd.x - (t.a * cs.x - t.b * cs.y);
  t.ty = cd.y - (t.b * cs.x + t.a * cs.y);
  return t;
}

SimilarityTransform invert_transform(const SimilarityTransform& t) {
  const double det = t.a * t.a + t.b * t.b;
  if (!(det > 0.0) || !std::isfinite(det)) {
    throw std::invalid_argument("invert_transform: singular similarity transform");
  }
  SimilarityTransform inv;
  inv.a = t.a / det;
  inv.b = -t.b / det;
  inv.tx = -(inv.a * t.tx - inv.b * t.ty);
  inv.ty = -(inv.b * t.tx + inv.a * t.ty);
  return inv;
}

SimilarityTransform compose(const SimilarityTransform& outer, const SimilarityTransform& inner) {
  SimilarityTransform t;
  t.a = outer.a * inner.a - outer.b * inner.b;
  t.b = outer.b * inner.a + outer.a * inner.b;
  const Vec2 moved = outer({inner.tx, inner.ty});
  t.tx = moved.x;
  t.ty = moved.y;
  return t;
}

Vec2 shape_centroid(const Shape& s) {
  double sx = 0.0, sy = 0.0;
  for (const Vec2& p : s.points) {
    sx += p.x;
    sy += p.y;
  }
  return {sx / static_cast<double>(kLandmarkCount), sy / static_cast<double>(kLandmarkCount)};
}

BoundingBox shape_bbox(const Shape& s) {
  double x0 = std::numeric_limits<double>::infinity(), y0 = x0;
  double x1 = -x0, y1 = -x0;
  for (const Vec2& p : s.points) {
    x0 = std::min(x0, p.x);
    y0 = std::min(y0, p.y);
    x1 = std::max(x1, p.x);
    y1 = std::max(y1, p.y);
  }
  return {x0, y0, x1 - x0, y1 - y0};
}

Shape compute_canonical_shape(std::span<const Shape> shapes, double frame,
                              double margin_fraction) {
  if (shapes.empty()) throw std::invalid_argument("canonical shape: empty shape set");
  if (!(frame > 0.0) || !(margin_fraction >= 0.0) || !(margin_fraction < 0.5)) {
    throw std::invalid_argument("canonical shape: invalid frame or margin");
  }
  for (const Shape& s : shapes) require_finite(s, "canonical shape");

  // Procrustes mean: align every shape to the current mean, re-average,
  // renormalize; iterate to a fixed point.
  Shape mean = normalize_for_mean(shapes[0]);
  for (int iter = 0; iter < 100; ++iter) {
    Shape accum;
    for (const Shape& s : shapes) {
      const Shape aligned = apply_transform(estimate_similarity(s, mean), s);
      for (std::size_t i = 0; i < kLandmarkCount; ++i) {
        accum[i].x += aligned[i].x / static_cast<double>(shapes.size());
        accum[i].y += aligned[i].y / static_cast<double>(shapes.size());
      }
    }
    const Shape next = normalize_for_mean(accum);
    double movement = 0.0;
    for (std::size_t i = 0; i < kLandmarkCount; ++i) movement = std::max(movement, distance(mean[i], next[i]));
    mean = next;
    if (movement < 1e-8) break;
  }

  // The Procrustes mean inherits an arbitrary orientation from the inputs;
  // canonicalize it by leveling the eye axis (left eye on the left).
  const Vec2 eye = right_eye_center(mean) - left_eye_center(mean);
  const double norm = std::hypot(eye.x, eye.y);
  if (norm > 0.0) {
    const SimilarityTransform derotate{eye.x / norm, -eye.y / norm, 0.0, 0.0};
    mean = apply_transform(derotate, mean);
  }

  // Fit the bounding box into the frame, margin on each side of the longest
  // extent, box center on the frame center.
  const BoundingBox box = shape_bbox(mean);
  const double longest = box.larger_side();
  if (!(longest > 0.0)) throw std::invalid_argument("canonical shape: degenerate mean shape");
  const double target = frame * (1.0 - 2.0 * margin_fraction);
  const double scale = target / longest;
  const Vec2 box_c = box.center();
  const double frame_c = (frame - 1.0) / 2.0;  // pixel-center convention
  Shape out;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    out[i] = {(mean[i].x - box_c.x) * scale + frame_c, (mean[i].y - box_c.y) * scale + frame_c};
  }
  return out;
}

Shape place_shape_in_bbox(const Shape& canonical, const BoundingBox& box) {
  if (!(box.width > 0.0) || !(box.height > 0.0)) {
    throw std::invalid_argument("place_shape_in_bbox: box sides must be positive");
  }
  const BoundingBox sb = shape_bbox(canonical);
  const double side = sb.larger_side();
  if (!(side > 0.0)) throw std::invalid_argument("place_shape_in_bbox: degenerate shape");
  const double scale = box.larger_side() / side;
  const Vec2 sc = sb.center();
  const Vec2 bc = box.center();
  Shape out;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    out[i] = {(canonical[i].x - sc.x) * scale + bc.x, (canonical[i].y - sc.y) * scale + bc.y};
  }
  return out;
}

Vec2 left_eye_center(const Shape& s) {
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 36; i <= 41; ++i) {
    sx += s[i].x;
    sy += s[i].y;
  }
  return {sx / 6.0, sy / 6.0};
}

Vec2 right_eye_center(const Shape& s) {
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 42; i <= 47; ++i) {
    sx += s[i].x;
    sy += s[i].y;
  }
  return {sx / 6.0, sy / 6.0};
}

double interocular_distance(const Shape& s) { return distance(s[36], s[45]); }

double interpupil_distance(const Shape& s) {
  return distance(left_eye_center(s), right_eye_center(s));
}

}  // namespace dan
