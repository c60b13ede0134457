#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/classifier.hpp"
#include "core/dataset.hpp"
#include "core/detector.hpp"
#include "core/energymap.hpp"
#include "core/metrics.hpp"
#include "core/portion.hpp"
#include "core/synth.hpp"

namespace foodpipe {

// One JSON config drives every command; CLI flags override keys by dotted
// path. All relative paths resolve against the config file's directory.
class PipelineConfig {
public:
  static PipelineConfig from_file(const std::string& path);
  static PipelineConfig from_json(const nlohmann::json& j, const std::string& base_dir);

  // Dotted-path override; the value is parsed as JSON when possible and kept
  // as a string otherwise.
  void set_option(const std::string& key, const std::string& value);

  uint64_t seed() const;
  std::string config_hash() const;  // FNV-1a of the canonical JSON
  std::string resolve(const std::string& path) const;

  std::string data_dir() const { return resolve(path_value("data_dir", "data")); }
  std::string manifest_path() const;
  std::string out_dir() const { return resolve(path_value("out_dir", "out")); }
  std::string checkpoint_path(const std::string& name) const;

  SceneConfig scene_config() const;
  int scene_count() const;
  DetectorHyper detector_hyper() const;
  ClassifierHyper classifier_hyper() const;
  GanHyper gan_hyper() const;
  RegressorHyper regressor_hyper() const;
  double map_value_max() const;
  double split_val_frac() const;
  double split_test_frac() const;
  SplitTag eval_split() const;
  SplitTag infer_split() const;
  double match_iou() const;
  std::vector<double> eval_iou_thresholds() const;
  std::string regressor_map_source() const;  // "groundtruth" | "generated"

  const nlohmann::json& raw() const { return root_; }

private:
  std::string path_value(const std::string& key, const std::string& fallback) const;
  nlohmann::json root_;
  std::string base_dir_;
};

struct OccasionItem {
  BoundingBox bbox;
  std::string category;
  double confidence = 0.0;
  double kcal = 0.0;
  std::optional<double> gt_kcal;
};

struct OccasionResult {
  std::string image_id;
  std::vector<OccasionItem> items;
  double pred_total = 0.0;
  std::optional<double> gt_total;

  nlohmann::json to_json() const;
};

struct PipelineModels {
  std::unique_ptr<DetectorModel> detector;
  std::unique_ptr<ClassifierModel> classifier;
  std::unique_ptr<GeneratorModel> generator;
  std::unique_ptr<RegressorModel> regressor;
};

PipelineModels load_models(const PipelineConfig& config);

// The full dataflow for one image: detect, classify each crop, generate the
// energy map once, crop it per detection, fuse, regress. Groundtruth kcal is
// attached per item by class-agnostic IoU matching when annotations are given.
OccasionResult run_end_to_end(const PipelineConfig& config, const PipelineModels& models,
                              const RgbImage& image, const std::string& image_id,
                              const std::vector<FoodAnnotation>* groundtruth);

// Boxes plus "category: X kcal (Y)" labels; the parenthesized groundtruth
// appears only when available.
RgbImage render_annotated(const RgbImage& image, const OccasionResult& result);

// Predicted vs groundtruth occasion totals, one color per method, dashed y=x.
void plot_scatter(const std::map<std::string, std::vector<OccasionTotal>>& series,
                  const std::string& out_path);

// CLI command drivers. Each returns a short human-readable summary.
std::string cmd_generate_synthetic(const PipelineConfig& config);
std::string cmd_augment(const PipelineConfig& config);
std::string cmd_train_detector(const PipelineConfig& config);
std::string cmd_train_classifier(const PipelineConfig& config);
std::string cmd_train_energy_gan(const PipelineConfig& config);
std::string cmd_train_regressor(const PipelineConfig& config);
std::string cmd_infer(const PipelineConfig& config);
std::string cmd_evaluate(const PipelineConfig& config);
std::string cmd_plot(const PipelineConfig& config);

}  // namespace foodpipe
