#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dan/geometry.hpp"
#include "dan/gray_image.hpp"

namespace dan {

/// One annotated face: grayscale image, 68 ground-truth landmarks, and an
/// optional detector box. `id` is the file stem the record was loaded from.
struct FaceRecord {
  std::string id;
  GrayImage image;
  Shape truth;
  std::optional<BoundingBox> box;
};

/// 68-point landmark text format:
///   version: 1
///   n_points: 68
///   {
///   x y          (68 lines)
///   }
/// Tolerant of CRLF endings and repeated spaces. Throws PtsParseError.
Shape parse_pts(std::string_view text);
std::string serialize_pts(const Shape& shape);
Shape load_pts(const std::filesystem::path& path);
void save_pts(const Shape& shape, const std::filesystem::path& path);

/// Binary 8-bit PGM (P5, maxval <= 255); intensities scale to [0, 1].
/// Throws PgmError.
GrayImage decode_pgm(std::string_view bytes);
std::string encode_pgm(const GrayImage& image);
GrayImage load_pgm(const std::filesystem::path& path);
void save_pgm(const GrayImage& image, const std::filesystem::path& path);

/// Detector-box manifest: one `stem x y width height` line per record.
std::unordered_map<std::string, BoundingBox> parse_bbox_manifest(std::string_view text);
std::unordered_map<std::string, BoundingBox> load_bbox_manifest(const std::filesystem::path& path);

struct LoadReport {
  std::vector<std::string> warnings;  // orphans, parse failures, odd coordinates
  std::size_t loaded = 0;
  std::size_t skipped = 0;
};

/// Load every .pgm/.pts pair under `root` (non-recursive), in lexicographic
/// order of the file stems. Records take boxes from the optional manifest.
/// In strict mode any defective pair raises; otherwise defective pairs are
/// skipped and reported.
std::vector<FaceRecord> load_dataset(const std::filesystem::path& root,
                                     const std::filesystem::path& bbox_manifest_path,
                                     bool strict, LoadReport* report);

/// Ground-truth-derived substitute detector box: the shape's bounding box
/// grown 5% about its center. Used during training when no detector box is
/// available.
BoundingBox training_box(const FaceRecord& record);

struct DatasetSplit {
  std::vector<FaceRecord> training;
  std::vector<FaceRecord> validation;
};

/// Seeded shuffle, then the first `validation_size` records become the
/// validation set. Throws if fewer than validation_size + 1 records exist.
DatasetSplit split_validation(std::vector<FaceRecord> records, std::size_t validation_size,
                              std::uint64_t seed);

}  // namespace dan
