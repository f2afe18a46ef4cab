#include "dan/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace dan {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

[[noreturn]] void fail(int line, const std::string& message) {
  throw std::runtime_error("run config line " + std::to_string(line) + ": " + message);
}

double parse_double_or(int line, std::string_view value) {
  double out = 0.0;
  const auto result = std::from_chars(value.data(), value.data() + value.size(), out);
  if (result.ec != std::errc{} || result.ptr != value.data() + value.size() ||
      !std::isfinite(out)) {
    fail(line, "expected a number, got '" + std::string(value) + "'");
  }
  return out;
}

std::uint64_t parse_u64_or(int line, std::string_view value) {
  std::uint64_t out = 0;
  const auto result = std::from_chars(value.data(), value.data() + value.size(), out);
  if (result.ec != std::errc{} || result.ptr != value.data() + value.size()) {
    fail(line, "expected a non-negative integer, got '" + std::string(value) + "'");
  }
  return out;
}

bool parse_bool_or(int line, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  fail(line, "expected true or false, got '" + std::string(value) + "'");
}

std::string format_double(double v) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.17g", v);
  return buffer;
}

}  // namespace

void RunConfig::validate() const {
  if (data_dir.empty()) throw std::runtime_error("run config: data_dir must be set");
  if (model_out.empty()) throw std::runtime_error("run config: model_out must be set");
  train.validate();
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig config;
  using Setter = std::function<void(int, std::string_view)>;
  const std::map<std::string, Setter, std::less<>> setters = {
      {"data_dir", [&](int, std::string_view v) { config.data_dir = std::string(v); }},
      {"bbox_manifest", [&](int, std::string_view v) { config.bbox_manifest = std::string(v); }},
      {"model_out", [&](int, std::string_view v) { config.model_out = std::string(v); }},
      {"log_dir", [&](int, std::string_view v) { config.log_dir = std::string(v); }},
      {"strict_load", [&](int l, std::string_view v) { config.strict_load = parse_bool_or(l, v); }},
      {"stages",
       [&](int l, std::string_view v) {
         config.train.stages = static_cast<std::size_t>(parse_u64_or(l, v));
       }},
      {"channel_divisor",
       [&](int l, std::string_view v) {
         config.train.channel_divisor = static_cast<int>(parse_u64_or(l, v));
       }},
      {"heatmap_radius",
       [&](int l, std::string_view v) { config.train.heatmap_radius = parse_double_or(l, v); }},
      {"canonical_margin",
       [&](int l, std::string_view v) { config.train.canonical_margin = parse_double_or(l, v); }},
      {"step_size",
       [&](int l, std::string_view v) { config.train.step_size = parse_double_or(l, v); }},
      {"adam_beta1",
       [&](int l, std::string_view v) { config.train.adam.beta1 = parse_double_or(l, v); }},
      {"adam_beta2",
       [&](int l, std::string_view v) { config.train.adam.beta2 = parse_double_or(l, v); }},
      {"adam_epsilon",
       [&](int l, std::string_view v) { config.train.adam.epsilon = parse_double_or(l, v); }},
      {"batch_size",
       [&](int l, std::string_view v) {
         config.train.batch_size = static_cast<std::size_t>(parse_u64_or(l, v));
       }},
      {"dropout_rate",
       [&](int l, std::string_view v) { config.train.dropout_rate = parse_double_or(l, v); }},
      {"augment_count",
       [&](int l, std::string_view v) {
         config.train.augment_count = static_cast<std::size_t>(parse_u64_or(l, v));
       }},
      {"mirror_prob",
       [&](int l, std::string_view v) {
         config.train.augment_params.mirror_prob = parse_double_or(l, v);
       }},
      {"rotation_stddev_deg",
       [&](int l, std::string_view v) {
         config.train.augment_params.rotation_stddev_deg = parse_double_or(l, v);
       }},
      {"scale_stddev",
       [&](int l, std::string_view v) {
         config.train.augment_params.scale_stddev = parse_double_or(l, v);
       }},
      {"translation_frac",
       [&](int l, std::string_view v) {
         config.train.augment_params.translation_frac = parse_double_or(l, v);
       }},
      {"validation_size",
       [&](int l, std::string_view v) {
         config.train.validation_size = static_cast<std::size_t>(parse_u64_or(l, v));
       }},
      {"max_epochs",
       [&](int l, std::string_view v) {
         config.train.max_epochs = static_cast<std::size_t>(parse_u64_or(l, v));
       }},
      {"patience",
       [&](int l, std::string_view v) {
         config.train.patience = static_cast<std::size_t>(parse_u64_or(l, v));
       }},
      {"target_val_error",
       [&](int l, std::string_view v) { config.train.target_val_error = parse_double_or(l, v); }},
      {"adaptive_stages",
       [&](int l, std::string_view v) { config.train.adaptive_stages = parse_bool_or(l, v); }},
      {"seed", [&](int l, std::string_view v) { config.train.seed = parse_u64_or(l, v); }},
  };

  std::vector<std::string> seen;
  int line_number = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line =
        trim(text.substr(pos, (nl == std::string_view::npos ? text.size() : nl) - pos));
    ++line_number;
    pos = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) fail(line_number, "expected 'key = value'");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    const auto setter = setters.find(key);
    if (setter == setters.end()) fail(line_number, "unknown key '" + std::string(key) + "'");
    if (std::find(seen.begin(), seen.end(), setter->first) != seen.end()) {
      fail(line_number, "duplicate key '" + std::string(key) + "'");
    }
    seen.push_back(setter->first);
    setter->second(line_number, value);
  }
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str());
}

std::string serialize_run_config(const RunConfig& config) {
  std::string out;
  const auto emit = [&](const std::string& key, const std::string& value) {
    out += key + " = " + value + "\n";
  };
  emit("data_dir", config.data_dir);
  emit("bbox_manifest", config.bbox_manifest);
  emit("model_out", config.model_out);
  emit("log_dir", config.log_dir);
  emit("strict_load", config.strict_load ? "true" : "false");
  const TrainConfig& t = config.train;
  emit("stages", std::to_string(t.stages));
  emit("channel_divisor", std::to_string(t.channel_divisor));
  emit("heatmap_radius", format_double(t.heatmap_radius));
  emit("canonical_margin", format_double(t.canonical_margin));
  emit("step_size", format_double(t.step_size));
  emit("adam_beta1", format_double(t.adam.beta1));
  emit("adam_beta2", format_double(t.adam.beta2));
  emit("adam_epsilon", format_double(t.adam.epsilon));
  emit("batch_size", std::to_string(t.batch_size));
  emit("dropout_rate", format_double(t.dropout_rate));
  emit("augment_count", std::to_string(t.augment_count));
  emit("mirror_prob", format_double(t.augment_params.mirror_prob));
  emit("rotation_stddev_deg", format_double(t.augment_params.rotation_stddev_deg));
  emit("scale_stddev", format_double(t.augment_params.scale_stddev));
  emit("translation_frac", format_double(t.augment_params.translation_frac));
  emit("validation_size", std::to_string(t.validation_size));
  emit("max_epochs", std::to_string(t.max_epochs));
  emit("patience", std::to_string(t.patience));
  emit("target_val_error", format_double(t.target_val_error));
  emit("adaptive_stages", t.adaptive_stages ? "true" : "false");
  emit("seed", std::to_string(t.seed));
  return out;
}

}  // namespace dan
