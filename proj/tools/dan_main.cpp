#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dan/dataset.hpp"
#include "dan/evaluation.hpp"
#include "dan/model.hpp"
#include "dan/run_config.hpp"
#include "dan/training.hpp"

namespace {

namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<dan::FaceRecord> load_records(const std::string& data_dir, const std::string& manifest,
                                          bool strict) {
  dan::LoadReport report;
  std::vector<dan::FaceRecord> records =
      dan::load_dataset(data_dir, manifest.empty() ? fs::path() : fs::path(manifest), strict,
                        &report);
  for (const std::string& w : report.warnings) std::cerr << "warning: " << w << "\n";
  if (records.empty()) throw std::runtime_error("no usable records in " + data_dir);
  std::cout << "loaded " << records.size() << " records from " << data_dir << "\n";
  return records;
}

int run_train(const std::string& config_path) {
  dan::RunConfig config = dan::load_run_config(config_path);
  config.validate();
  const std::vector<dan::FaceRecord> records =
      load_records(config.data_dir, config.bbox_manifest, config.strict_load);

  dan::TrainResult result = dan::train_model(records, config.train);
  dan::save_model(result.model, config.model_out);
  std::cout << "model written to " << config.model_out << "\n";

  const fs::path log_dir = config.log_dir.empty()
                               ? fs::path(config.model_out).parent_path()
                               : fs::path(config.log_dir);
  for (std::size_t s = 0; s < result.stages.size(); ++s) {
    std::string csv = "epoch,train_loss,val_error,seconds\n";
    char buffer[160];
    for (const dan::EpochRecord& e : result.stages[s].epochs) {
      std::snprintf(buffer, sizeof(buffer), "%zu,%.8f,%.8f,%.3f\n", e.epoch, e.train_loss,
                    e.val_error, e.seconds);
      csv += buffer;
    }
    const fs::path log_path = log_dir / ("train_log_stage" + std::to_string(s + 1) + ".csv");
    write_text(log_path, csv);
    std::snprintf(buffer, sizeof(buffer),
                  "stage %zu: %zu epochs, validation error %.6f -> %.6f\n", s + 1,
                  result.stages[s].epochs.size(), result.stages[s].baseline_val_error,
                  result.stages[s].best_val_error);
    std::cout << buffer;
  }
  write_text(log_dir / "resolved_config.txt", dan::serialize_run_config(config));
  return 0;
}

int run_eval(const std::string& model_path, const std::string& data_dir,
             const std::string& manifest, const std::string& norm, double alpha,
             double failure_threshold, const std::string& out_dir, bool strict) {
  const dan::DanModel model = dan::load_model(model_path);
  const std::vector<dan::FaceRecord> records = load_records(data_dir, manifest, strict);
  const dan::EvaluationReport report =
      dan::evaluate_model(model, records, dan::parse_error_kind(norm), alpha, failure_threshold);

  const std::string text = dan::format_report(report);
  std::cout << text;
  const fs::path out(out_dir);
  write_text(out / "report.txt", text);

  char buffer[96];
  std::string errors_csv = "id,error\n";
  for (std::size_t i = 0; i < report.ids.size(); ++i) {
    std::snprintf(buffer, sizeof(buffer), "%s,%.8f\n", report.ids[i].c_str(),
                  report.final_errors[i]);
    errors_csv += buffer;
  }
  write_text(out / "errors.csv", errors_csv);

  std::string ced_csv = "threshold,fraction\n";
  for (const auto& [threshold, fraction] : report.ced) {
    std::snprintf(buffer, sizeof(buffer), "%.8f,%.8f\n", threshold, fraction);
    ced_csv += buffer;
  }
  write_text(out / "ced.csv", ced_csv);
  std::cout << "report written to " << out.string() << "\n";
  return 0;
}

int run_align(const std::string& model_path, const std::string& image_path,
              const std::vector<double>& box_values, bool two_step, const std::string& out_path) {
  if (two_step == !box_values.empty()) {
    throw std::runtime_error("pass exactly one of --bbox or --two-step");
  }
  const dan::DanModel model = dan::load_model(model_path);
  const dan::DanRunner runner(model);
  const dan::GrayImage image = dan::load_pgm(image_path);

  dan::Shape result;
  if (two_step) {
    dan::TwoStepInfo info;
    result = dan::two_step_align(runner, image, 0.46, &info);
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "step1 box side: %.3f\n", info.box_side);
    std::cout << buffer;
    if (info.fell_back) std::cout << "second pass skipped (degenerate first estimate)\n";
  } else {
    const dan::BoundingBox box = {box_values[0], box_values[1], box_values[2], box_values[3]};
    if (!(box.width > 0.0) || !(box.height > 0.0)) {
      throw std::runtime_error("--bbox extents must be positive");
    }
    result = dan::align_with_box(runner, image, box).per_stage.back();
  }
  write_text(out_path, dan::serialize_pts(result));
  std::cout << "landmarks written to " << out_path << "\n";
  return 0;
}

int run_ced(const std::string& errors_path, double alpha, std::size_t points,
            const std::string& out_path) {
  std::ifstream in(errors_path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + errors_path);
  std::vector<double> errors;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line == "id,error") continue;
    const std::size_t comma = line.rfind(',');
    if (comma == std::string::npos) {
      throw std::runtime_error(errors_path + " line " + std::to_string(line_number) +
                               ": expected 'id,error'");
    }
    try {
      errors.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw std::runtime_error(errors_path + " line " + std::to_string(line_number) +
                               ": bad error value");
    }
  }
  if (errors.empty()) throw std::runtime_error(errors_path + " holds no error rows");

  std::vector<double> thresholds(points);
  for (std::size_t i = 0; i < points; ++i) {
    thresholds[i] = alpha * static_cast<double>(i + 1) / static_cast<double>(points);
  }
  char buffer[96];
  std::string csv = "threshold,fraction\n";
  for (const auto& [threshold, fraction] : dan::ced_curve(errors, thresholds)) {
    std::snprintf(buffer, sizeof(buffer), "%.8f,%.8f\n", threshold, fraction);
    csv += buffer;
  }
  write_text(out_path, csv);
  std::snprintf(buffer, sizeof(buffer), "auc up to %.4f: %.6f\n", alpha,
                dan::auc_alpha(errors, alpha));
  std::cout << buffer;
  std::cout << "curve written to " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cascaded deep alignment for 68-point facial landmarks"};
  app.require_subcommand(1);

  std::string config_path;
  CLI::App* train = app.add_subcommand("train", "Train a model from a run-config file");
  train->add_option("--config", config_path, "Run configuration (key = value lines)")
      ->required()
      ->check(CLI::ExistingFile);

  std::string model_path, data_dir, manifest, norm = "inter-ocular", out_dir = ".";
  double alpha = 0.08, failure_threshold = 0.08;
  bool strict = false;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a model over a dataset directory");
  eval->add_option("--model", model_path, "Trained model container")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--data", data_dir, "Directory of .pgm/.pts pairs")
      ->required()
      ->check(CLI::ExistingDirectory);
  eval->add_option("--bbox", manifest, "Detector box manifest")->check(CLI::ExistingFile);
  eval->add_option("--norm", norm, "inter-ocular | inter-pupil | bbox-diagonal");
  eval->add_option("--alpha", alpha, "Area-under-curve cutoff");
  eval->add_option("--failure-threshold", failure_threshold, "Failure threshold");
  eval->add_option("--out", out_dir, "Output directory for report/errors/ced");
  eval->add_flag("--strict", strict, "Raise on any defective record");

  std::string align_model, image_path, out_pts;
  std::vector<double> box_values;
  bool two_step = false;
  CLI::App* align = app.add_subcommand("align", "Locate landmarks on one image");
  align->add_option("--model", align_model, "Trained model container")
      ->required()
      ->check(CLI::ExistingFile);
  align->add_option("--image", image_path, "Input image (binary 8-bit PGM)")
      ->required()
      ->check(CLI::ExistingFile);
  align->add_option("--bbox", box_values, "Detector box as x,y,width,height")
      ->delimiter(',')
      ->expected(4);
  align->add_flag("--two-step", two_step, "Detector-free two-pass alignment");
  align->add_option("--out", out_pts, "Output landmark file (.pts)")->required();

  std::string errors_path, ced_out;
  double ced_alpha = 0.08;
  std::size_t ced_points = 100;
  CLI::App* ced = app.add_subcommand("ced", "Recompute a cumulative error curve from errors.csv");
  ced->add_option("--errors", errors_path, "errors.csv from a previous eval")
      ->required()
      ->check(CLI::ExistingFile);
  ced->add_option("--alpha", ced_alpha, "Largest threshold");
  ced->add_option("--points", ced_points, "Number of curve samples");
  ced->add_option("--out", ced_out, "Output curve file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return run_train(config_path);
    if (eval->parsed()) {
      return run_eval(model_path, data_dir, manifest, norm, alpha, failure_threshold, out_dir,
                      strict);
    }
    if (align->parsed()) {
      return run_align(align_model, image_path, box_values, two_step, out_pts);
    }
    if (ced->parsed()) return run_ced(errors_path, ced_alpha, ced_points, ced_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
