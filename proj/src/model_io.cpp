#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dan/errors.hpp"
#include "dan/model.hpp"

// Container layout: the 4-byte magic "DAN1", a little-endian u32 manifest
// length, the ASCII manifest, the blobs in manifest order (little-endian
// float32/float64), and a trailing little-endian u64 FNV-1a checksum of every
// preceding byte. The manifest lists one `key = value` per line: the
// architecture summary first, then one `blob = <name> <dtype> <dims...>`
// line per tensor.

namespace dan {

namespace {

constexpr char kMagic[4] = {'D', 'A', 'N', '1'};

std::uint64_t fnv1a(const char* data, std::size_t len) {
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ull;
  }
  return h;
}

void append_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_f32(std::string& out, float v) { append_u32(out, std::bit_cast<std::uint32_t>(v)); }
void append_f64(std::string& out, double v) { append_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint32_t read_u32(const std::string& buf, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
  return v;
}

std::uint64_t read_u64(const std::string& buf, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
  return v;
}

std::string format_double(double v) {
  char tmp[40];
  std::snprintf(tmp, sizeof(tmp), "%.17g", v);
  return tmp;
}

/// Visit every tensor of a stage in container order as (name, tensor).
template <typename Params, typename Fn>
void for_each_stage_tensor(Params& p, const std::string& prefix, Fn&& fn) {
  for (std::size_t i = 0; i < 8; ++i) {
    const std::string base = prefix + "." + kConvLayerNames[i];
    fn(base + ".weights", p.conv[i].weights);
    fn(base + ".bn.gamma", p.conv[i].bn.gamma);
    fn(base + ".bn.beta", p.conv[i].bn.beta);
    fn(base + ".bn.running_mean", p.conv[i].bn.running_mean);
    fn(base + ".bn.running_variance", p.conv[i].bn.running_var);
  }
  fn(prefix + ".fc1.weights", p.fc1_weights);
  fn(prefix + ".fc1.bias", p.fc1_bias);
  fn(prefix + ".fc1.bn.gamma", p.fc1_bn.gamma);
  fn(prefix + ".fc1.bn.beta", p.fc1_bn.beta);
  fn(prefix + ".fc1.bn.running_mean", p.fc1_bn.running_mean);
  fn(prefix + ".fc1.bn.running_variance", p.fc1_bn.running_var);
  fn(prefix + ".fc2.weights", p.fc2_weights);
  fn(prefix + ".fc2.bias", p.fc2_bias);
  if (p.config.has_feature_path()) {
    fn(prefix + ".feature.weights", p.feature_weights);
    fn(prefix + ".feature.bias", p.feature_bias);
  }
}

[[noreturn]] void malformed(const std::string& why) {
  throw ModelIoError(ModelIoError::Kind::kMalformed, why);
}

struct BlobDesc {
  std::string name;
  std::string dtype;
  std::vector<std::size_t> dims;

  std::size_t count() const {
    std::size_t n = 1;
    for (std::size_t d : dims) n *= d;
    return n;
  }
};

struct Manifest {
  std::map<std::string, std::string> keys;
  std::vector<BlobDesc> blobs;
};

Manifest parse_manifest(const std::string& text) {
  Manifest m;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::size_t eq = line.find(" = ");
    if (eq == std::string::npos) malformed("manifest line without key: " + line);
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 3);
    if (key == "blob") {
      std::istringstream fields(value);
      BlobDesc blob;
      fields >> blob.name >> blob.dtype;
      if (blob.name.empty() || (blob.dtype != "f32" && blob.dtype != "f64")) {
        malformed("bad blob descriptor: " + value);
      }
      long long d = 0;
      while (fields >> d) {
        if (d <= 0) malformed("bad blob extent in: " + value);
        blob.dims.push_back(static_cast<std::size_t>(d));
      }
      if (blob.dims.empty()) malformed("blob without extents: " + value);
      m.blobs.push_back(std::move(blob));
    } else {
      if (!m.keys.emplace(key, value).second) malformed("duplicate manifest key: " + key);
    }
  }
  return m;
}

const std::string& require_key(const Manifest& m, const std::string& key) {
  const auto it = m.keys.find(key);
  if (it == m.keys.end()) malformed("manifest key missing: " + key);
  return it->second;
}

long long parse_int(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size()) malformed("trailing characters in " + what + ": " + text);
    return v;
  } catch (const ModelIoError&) {
    throw;
  } catch (const std::exception&) {
    malformed("bad integer for " + what + ": " + text);
  }
}

double parse_double(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) malformed("trailing characters in " + what + ": " + text);
    return v;
  } catch (const ModelIoError&) {
    throw;
  } catch (const std::exception&) {
    malformed("bad number for " + what + ": " + text);
  }
}

std::string build_manifest(const DanModel& model) {
  std::ostringstream m;
  m << "format = dan-model\n";
  m << "stages = " << model.stages.size() << "\n";
  m << "frame = " << kFrame << "\n";
  m << "heatmap_radius = " << format_double(model.heatmap_radius) << "\n";
  for (std::size_t t = 0; t < model.stages.size(); ++t) {
    const StageConfig& cfg = model.stages[t].config;
    const std::string p = "stage" + std::to_string(t);
    m << p << ".input_channels = " << cfg.input_channels << "\n";
    m << p << ".conv_channels =";
    for (int c : cfg.conv_channels) m << " " << c;
    m << "\n";
    m << p << ".fc1_units = " << cfg.fc1_units << "\n";
    m << p << ".feature_input_units = " << cfg.feature_input_units << "\n";
  }
  m << "blob = canonical_shape f64 " << 2 * kLandmarkCount << "\n";
  for (std::size_t t = 0; t < model.stages.size(); ++t) {
    for_each_stage_tensor(model.stages[t], "stage" + std::to_string(t),
                          [&](const std::string& name, const Tensor<float>& tensor) {
                            m << "blob = " << name << " f32";
                            for (std::size_t d : tensor.shape()) m << " " << d;
                            m << "\n";
                          });
  }
  return m.str();
}

}  // namespace

void save_model(const DanModel& model, std::ostream& out) {
  if (model.stages.empty()) throw std::invalid_argument("save_model: model has no stages");
  const std::string manifest = build_manifest(model);
  std::string buf(kMagic, sizeof(kMagic));
  append_u32(buf, static_cast<std::uint32_t>(manifest.size()));
  buf += manifest;
  for (const Vec2& p : model.canonical_shape.points) {
    append_f64(buf, p.x);
    append_f64(buf, p.y);
  }
  for (std::size_t t = 0; t < model.stages.size(); ++t) {
    for_each_stage_tensor(model.stages[t], "stage" + std::to_string(t),
                          [&](const std::string&, const Tensor<float>& tensor) {
                            for (std::size_t i = 0; i < tensor.size(); ++i) append_f32(buf, tensor[i]);
                          });
  }
  append_u64(buf, fnv1a(buf.data(), buf.size()));
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("save_model: write failed");
}

void save_model(const DanModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_model: cannot open " + path.string());
  save_model(model, out);
  out.flush();
  if (!out) throw std::runtime_error("save_model: write failed for " + path.string());
}

namespace {

std::string read_validated(std::istream& in) {
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof(kMagic) + 4 + 8) malformed("container too short");
  if (buf.compare(0, 3, "DAN", 3) != 0) malformed("bad magic");
  if (buf[3] != kMagic[3]) {
    throw ModelIoError(ModelIoError::Kind::kVersionMismatch,
                       std::string("unsupported container version '") + buf[3] + "'");
  }
  const std::uint64_t stored = read_u64(buf, buf.size() - 8);
  const std::uint64_t actual = fnv1a(buf.data(), buf.size() - 8);
  if (stored != actual) {
    throw ModelIoError(ModelIoError::Kind::kChecksumMismatch,
                       "checksum mismatch (file truncated or corrupted)");
  }
  return buf;
}

}  // namespace

DanModel load_model(std::istream& in) {
  const std::string buf = read_validated(in);
  const std::size_t manifest_len = read_u32(buf, 4);
  if (8 + manifest_len + 8 > buf.size()) malformed("manifest length exceeds container");
  const Manifest manifest = parse_manifest(buf.substr(8, manifest_len));

  if (require_key(manifest, "format") != "dan-model") malformed("unknown format");
  const long long stages = parse_int(require_key(manifest, "stages"), "stages");
  if (stages < 1) malformed("container declares no stages");
  if (parse_int(require_key(manifest, "frame"), "frame") != kFrame) {
    malformed("unsupported frame size");
  }

  DanModel model;
  model.heatmap_radius = parse_double(require_key(manifest, "heatmap_radius"), "heatmap_radius");
  for (long long t = 0; t < stages; ++t) {
    const std::string p = "stage" + std::to_string(t);
    StageParams sp;
    sp.config.input_channels =
        static_cast<int>(parse_int(require_key(manifest, p + ".input_channels"), "input_channels"));
    {
      std::istringstream fields(require_key(manifest, p + ".conv_channels"));
      for (int& c : sp.config.conv_channels) {
        if (!(fields >> c) || c < 1) malformed(p + ": bad conv_channels");
      }
    }
    sp.config.fc1_units =
        static_cast<int>(parse_int(require_key(manifest, p + ".fc1_units"), "fc1_units"));
    sp.config.feature_input_units = static_cast<int>(
        parse_int(require_key(manifest, p + ".feature_input_units"), "feature_input_units"));
    try {
      sp.config.validate();
    } catch (const std::exception& e) {
      malformed(p + ": " + e.what());
    }
    model.stages.push_back(std::move(sp));
  }

  // Read blobs in manifest order, checking names against the expected layout.
  std::size_t pos = 8 + manifest_len;
  const std::size_t end = buf.size() - 8;
  std::size_t blob_index = 0;
  const auto take_blob = [&](const std::string& name, const std::string& dtype) -> const BlobDesc& {
    if (blob_index >= manifest.blobs.size()) malformed("missing blob: " + name);
    const BlobDesc& blob = manifest.blobs[blob_index++];
    if (blob.name != name) malformed("expected blob " + name + ", found " + blob.name);
    if (blob.dtype != dtype) malformed("blob " + name + " has dtype " + blob.dtype);
    return blob;
  };

  {
    const BlobDesc& blob = take_blob("canonical_shape", "f64");
    if (blob.count() != 2 * kLandmarkCount) malformed("canonical_shape has wrong extent");
    if (pos + 8 * blob.count() > end) malformed("container ends inside canonical_shape");
    for (Vec2& p : model.canonical_shape.points) {
      p.x = std::bit_cast<double>(read_u64(buf, pos));
      p.y = std::bit_cast<double>(read_u64(buf, pos + 8));
      pos += 16;
    }
  }
  for (std::size_t t = 0; t < model.stages.size(); ++t) {
    for_each_stage_tensor(
        model.stages[t], "stage" + std::to_string(t),
        [&](const std::string& name, Tensor<float>& tensor) {
          const BlobDesc& blob = take_blob(name, "f32");
          if (pos + 4 * blob.count() > end) malformed("container ends inside " + name);
          std::vector<float> values(blob.count());
          for (float& v : values) {
            v = std::bit_cast<float>(read_u32(buf, pos));
            pos += 4;
          }
          tensor = Tensor<float>(blob.dims, std::move(values));
        });
  }
  if (blob_index != manifest.blobs.size()) malformed("unexpected extra blobs in manifest");
  if (pos != end) malformed("trailing bytes after blobs");

  // Cross-check declared architecture against the loaded tensor shapes.
  for (std::size_t t = 0; t < model.stages.size(); ++t) {
    const StageParams& sp = model.stages[t];
    int in_ch = sp.config.input_channels;
    for (std::size_t i = 0; i < 8; ++i) {
      const auto& ws = sp.conv[i].weights.shape();
      if (ws != std::vector<std::size_t>{static_cast<std::size_t>(sp.config.conv_channels[i]),
                                         static_cast<std::size_t>(in_ch), 3, 3}) {
        malformed("stage" + std::to_string(t) + "." + kConvLayerNames[i] +
                  " weights do not match the declared architecture");
      }
      in_ch = sp.config.conv_channels[i];
    }
  }
  return model;
}

DanModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_model: cannot open " + path.string());
  return load_model(in);
}

std::string read_model_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_model_manifest: cannot open " + path.string());
  const std::string buf = read_validated(in);
  const std::size_t manifest_len = read_u32(buf, 4);
  if (8 + manifest_len + 8 > buf.size()) malformed("manifest length exceeds container");
  return buf.substr(8, manifest_len);
}

}  // namespace dan
