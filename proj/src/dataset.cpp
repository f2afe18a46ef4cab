#include "dan/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "dan/errors.hpp"
#include "dan/rng.hpp"

namespace dan {

namespace {

struct Line {
  std::string_view text;  // trimmed
  int number;             // 1-based, counting every physical line
};

/// Physical lines with CR/whitespace trimmed; blank lines are dropped but
/// keep their effect on numbering.
std::vector<Line> nonblank_lines(std::string_view text) {
  std::vector<Line> lines;
  int number = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, (nl == std::string_view::npos ? text.size() : nl) - pos);
    ++number;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) {
      line.remove_suffix(1);
    }
    while (!line.empty() && (line.front() == ' ' || line.front() == '\t')) {
      line.remove_prefix(1);
    }
    if (!line.empty()) lines.push_back({line, number});
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return lines;
}

/// Splits "key: value"; returns false when there is no colon.
bool split_header(std::string_view line, std::string_view& key, std::string_view& value) {
  const std::size_t colon = line.find(':');
  if (colon == std::string_view::npos) return false;
  key = line.substr(0, colon);
  value = line.substr(colon + 1);
  while (!key.empty() && key.back() == ' ') key.remove_suffix(1);
  while (!value.empty() && value.front() == ' ') value.remove_prefix(1);
  return true;
}

bool parse_double(std::string_view token, double& out) {
  const char* begin = token.data();
  const char* end = begin + token.size();
  const auto result = std::from_chars(begin, end, out);
  return result.ec == std::errc{} && result.ptr == end && std::isfinite(out);
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
    std::size_t end = pos;
    while (end < line.size() && line[end] != ' ' && line[end] != '\t') ++end;
    if (end > pos) fields.push_back(line.substr(pos, end - pos));
    pos = end;
  }
  return fields;
}

}  // namespace

Shape parse_pts(std::string_view text) {
  using Kind = PtsParseError::Kind;
  const std::vector<Line> lines = nonblank_lines(text);
  std::size_t at = 0;
  const auto next = [&](Kind kind, const char* what) -> const Line& {
    if (at >= lines.size()) {
      const int line = lines.empty() ? 1 : lines.back().number + 1;
      throw PtsParseError(kind, line, std::string("unexpected end of file, expected ") + what);
    }
    return lines[at++];
  };

  {
    const Line& line = next(Kind::kBadHeader, "version header");
    std::string_view key, value;
    double version = 0.0;
    if (!split_header(line.text, key, value) || key != "version" ||
        !parse_double(value, version)) {
      throw PtsParseError(Kind::kBadHeader, line.number, "expected 'version: <number>'");
    }
    if (version != 1.0) {
      throw PtsParseError(Kind::kBadHeader, line.number, "unsupported version");
    }
  }
  {
    const Line& line = next(Kind::kBadHeader, "n_points header");
    std::string_view key, value;
    double declared = 0.0;
    if (!split_header(line.text, key, value) || key != "n_points" ||
        !parse_double(value, declared)) {
      throw PtsParseError(Kind::kBadHeader, line.number, "expected 'n_points: <count>'");
    }
    if (declared != static_cast<double>(kLandmarkCount)) {
      throw PtsParseError(Kind::kWrongPointCount, line.number,
                          "expected 68 points, file declares " + std::string(value));
    }
  }
  {
    const Line& line = next(Kind::kMissingBrace, "'{'");
    if (line.text != "{") {
      throw PtsParseError(Kind::kMissingBrace, line.number, "expected '{' before the points");
    }
  }

  Shape shape;
  for (std::size_t i = 0; i < kLandmarkCount; ++i) {
    const Line& line = next(Kind::kTruncated, "a coordinate pair");
    if (line.text == "}") {
      throw PtsParseError(Kind::kTruncated, line.number,
                          "only " + std::to_string(i) + " of 68 points before '}'");
    }
    const std::vector<std::string_view> fields = split_fields(line.text);
    if (fields.size() != 2 || !parse_double(fields[0], shape[i].x) ||
        !parse_double(fields[1], shape[i].y)) {
      throw PtsParseError(Kind::kBadNumber, line.number,
                          "expected two numbers, got '" + std::string(line.text) + "'");
    }
  }
  {
    const Line& line = next(Kind::kMissingBrace, "'}'");
    if (line.text != "}") {
      throw PtsParseError(Kind::kMissingBrace, line.number, "expected '}' after the points");
    }
  }
  if (at < lines.size()) {
    throw PtsParseError(Kind::kBadHeader, lines[at].number, "unexpected content after '}'");
  }
  return shape;
}

std::string serialize_pts(const Shape& shape) {
  std::string out = "version: 1\nn_points: 68\n{\n";
  char buffer[64];
  for (const Vec2& p : shape) {
    std::snprintf(buffer, sizeof(buffer), "%.6f %.6f\n", p.x, p.y);
    out += buffer;
  }
  out += "}\n";
  return out;
}

Shape load_pts(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_pts(buffer.str());
}

void save_pts(const Shape& shape, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << serialize_pts(shape);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// PGM.

namespace {

/// Reads the next header integer, skipping whitespace and '#' comments.
int pgm_header_int(std::string_view bytes, std::size_t& pos, const char* what) {
  using Kind = PgmError::Kind;
  while (pos < bytes.size()) {
    const unsigned char c = static_cast<unsigned char>(bytes[pos]);
    if (c == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(c)) {
      ++pos;
    } else {
      break;
    }
  }
  std::size_t end = pos;
  while (end < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[end]))) ++end;
  if (end == pos) {
    throw PgmError(pos >= bytes.size() ? Kind::kTruncated : Kind::kBadHeader,
                   std::string("expected ") + what + " in header");
  }
  int value = 0;
  const auto result = std::from_chars(bytes.data() + pos, bytes.data() + end, value);
  if (result.ec != std::errc{}) {
    throw PgmError(Kind::kBadHeader, std::string(what) + " out of range");
  }
  pos = end;
  return value;
}

}  // namespace

GrayImage decode_pgm(std::string_view bytes) {
  using Kind = PgmError::Kind;
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw PgmError(Kind::kBadMagic, "expected binary magic 'P5'");
  }
  std::size_t pos = 2;
  const int width = pgm_header_int(bytes, pos, "width");
  const int height = pgm_header_int(bytes, pos, "height");
  const int maxval = pgm_header_int(bytes, pos, "maxval");
  if (width <= 0 || height <= 0) {
    throw PgmError(Kind::kBadHeader, "image extents must be positive");
  }
  if (maxval < 1 || maxval > 255) {
    throw PgmError(Kind::kBadMaxval, "maxval " + std::to_string(maxval) + " outside [1, 255]");
  }
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw PgmError(Kind::kBadHeader, "expected single whitespace after maxval");
  }
  ++pos;
  const std::size_t pixel_count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (bytes.size() - pos < pixel_count) {
    throw PgmError(Kind::kTruncated, "raster has " + std::to_string(bytes.size() - pos) +
                                         " bytes, needs " + std::to_string(pixel_count));
  }
  GrayImage image(width, height);
  const double scale = 1.0 / static_cast<double>(maxval);
  for (std::size_t i = 0; i < pixel_count; ++i) {
    image.pixels[i] = static_cast<double>(static_cast<unsigned char>(bytes[pos + i])) * scale;
  }
  return image;
}

std::string encode_pgm(const GrayImage& image) {
  if (image.empty()) throw std::invalid_argument("encode_pgm: empty image");
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) +
                    "\n255\n";
  out.reserve(out.size() + image.pixels.size());
  for (double v : image.pixels) {
    const double clamped = std::min(1.0, std::max(0.0, v));
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(clamped * 255.0))));
  }
  return out;
}

GrayImage load_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return decode_pgm(buffer.str());
}

void save_pgm(const GrayImage& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const std::string bytes = encode_pgm(image);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Detector boxes and dataset loading.

std::unordered_map<std::string, BoundingBox> parse_bbox_manifest(std::string_view text) {
  std::unordered_map<std::string, BoundingBox> boxes;
  for (const Line& line : nonblank_lines(text)) {
    if (line.text.front() == '#') continue;
    const std::vector<std::string_view> fields = split_fields(line.text);
    BoundingBox box;
    if (fields.size() != 5 || !parse_double(fields[1], box.x) || !parse_double(fields[2], box.y) ||
        !parse_double(fields[3], box.width) || !parse_double(fields[4], box.height)) {
      throw std::runtime_error("bbox manifest line " + std::to_string(line.number) +
                               ": expected 'stem x y width height'");
    }
    if (!(box.width > 0.0) || !(box.height > 0.0)) {
      throw std::runtime_error("bbox manifest line " + std::to_string(line.number) +
                               ": box extents must be positive");
    }
    if (!boxes.emplace(std::string(fields[0]), box).second) {
      throw std::runtime_error("bbox manifest line " + std::to_string(line.number) +
                               ": duplicate stem '" + std::string(fields[0]) + "'");
    }
  }
  return boxes;
}

std::unordered_map<std::string, BoundingBox> load_bbox_manifest(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_bbox_manifest(buffer.str());
}

namespace {

void add_warning(LoadReport* report, const std::string& message) {
  if (report != nullptr) report->warnings.push_back(message);
}

}  // namespace

std::vector<FaceRecord> load_dataset(const std::filesystem::path& root,
                                     const std::filesystem::path& bbox_manifest_path,
                                     bool strict, LoadReport* report) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) {
    throw std::runtime_error("dataset root " + root.string() + " is not a directory");
  }
  std::unordered_map<std::string, BoundingBox> boxes;
  if (!bbox_manifest_path.empty()) boxes = load_bbox_manifest(bbox_manifest_path);

  struct PairPaths {
    fs::path image, points;
  };
  std::map<std::string, PairPaths> stems;  // ordered => lexicographic output
  for (const fs::directory_entry& entry : fs::directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const fs::path& p = entry.path();
    if (p.extension() == ".pgm") {
      stems[p.stem().string()].image = p;
    } else if (p.extension() == ".pts") {
      stems[p.stem().string()].points = p;
    }
  }

  std::vector<FaceRecord> records;
  records.reserve(stems.size());
  std::size_t matched_boxes = 0;
  for (const auto& [stem, paths] : stems) {
    if (paths.image.empty() || paths.points.empty()) {
      const std::string message =
          stem + ": missing " + (paths.image.empty() ? "image" : "landmark") + " file";
      if (strict) throw std::runtime_error(message);
      add_warning(report, message);
      if (report != nullptr) ++report->skipped;
      continue;
    }
    FaceRecord record;
    record.id = stem;
    try {
      record.image = load_pgm(paths.image);
      record.truth = load_pts(paths.points);
    } catch (const std::exception& e) {
      if (strict) throw;
      add_warning(report, stem + ": " + e.what());
      if (report != nullptr) ++report->skipped;
      continue;
    }
    bool odd = false;
    for (const Vec2& p : record.truth) {
      if (p.x < -0.5 * record.image.width || p.x > 1.5 * record.image.width ||
          p.y < -0.5 * record.image.height || p.y > 1.5 * record.image.height) {
        odd = true;
      }
    }
    if (odd) add_warning(report, stem + ": landmarks far outside the image bounds");
    const auto box = boxes.find(stem);
    if (box != boxes.end()) {
      record.box = box->second;
      ++matched_boxes;
    }
    records.push_back(std::move(record));
    if (report != nullptr) ++report->loaded;
  }
  if (matched_boxes < boxes.size()) {
    add_warning(report, std::to_string(boxes.size() - matched_boxes) +
                            " detector box entries match no record");
  }
  return records;
}

BoundingBox training_box(const FaceRecord& record) {
  const BoundingBox sb = shape_bbox(record.truth);
  const Vec2 c = sb.center();
  const double w = sb.width * 1.05, h = sb.height * 1.05;
  return {c.x - w / 2.0, c.y - h / 2.0, w, h};
}

DatasetSplit split_validation(std::vector<FaceRecord> records, std::size_t validation_size,
                              std::uint64_t seed) {
  if (records.size() < validation_size + 1) {
    throw std::invalid_argument("split_validation: need more than validation_size records");
  }
  rng::Engine engine(seed);
  rng::shuffle(records.begin(), records.end(), engine);
  DatasetSplit split;
  split.validation.assign(records.begin(),
                          records.begin() + static_cast<std::ptrdiff_t>(validation_size));
  split.training.assign(records.begin() + static_cast<std::ptrdiff_t>(validation_size),
                        records.end());
  return split;
}

}  // namespace dan
