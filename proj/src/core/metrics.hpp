#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "core/detection.hpp"

namespace foodpipe {

double iou(const BoundingBox& a, const BoundingBox& b);

// A detection with its predicted category, the unit of evaluation.
struct PredItem {
  BoundingBox bbox;
  double score = 0.0;
  std::string category;
};

struct MatchEntry {
  int pred_index = -1;             // into the input prediction list
  std::optional<int> matched_gt;   // index into the groundtruth list
  bool is_tp = false;
};

struct CategoryCounts {
  int tp = 0, fp = 0, fn = 0;
};

struct MatchResult {
  double iou_threshold = 0.5;
  std::map<std::string, std::vector<MatchEntry>> per_category;
  std::map<std::string, CategoryCounts> counts;
  int tp = 0, fp = 0, fn = 0;
};

// Greedy matching in descending score order. A prediction is a true positive
// iff its category equals an unmatched groundtruth's category and IoU is
// strictly above the threshold; IoU ties go to the lower groundtruth index.
MatchResult match_detections(const std::vector<PredItem>& preds,
                             const std::vector<FoodAnnotation>& gts, double iou_threshold);

// Both components are 0 when their denominator is 0.
std::pair<double, double> precision_recall(const MatchResult& match);

// All-point interpolated AP over score-ranked TP/FP flags. Returns 0 when
// n_gt is 0; whether such a category enters the mAP mean is decided there.
double average_precision(const std::vector<bool>& ranked_tp_flags, int n_gt);

struct ImageEval {
  std::vector<PredItem> preds;
  std::vector<FoodAnnotation> gts;
};

struct MapResult {
  std::vector<double> thresholds;
  std::vector<double> map_per_threshold;
  double map_mean = 0.0;  // mean over the supplied thresholds
  std::map<std::string, double> per_category_ap;  // at the first threshold
};

// Per-category AP pooled over the dataset, averaged into mAP per threshold.
// Categories with no groundtruth and no predictions are skipped, not
// zero-averaged; with predictions but no groundtruth they contribute AP 0.
MapResult mean_average_precision(const std::vector<ImageEval>& dataset,
                                 const std::vector<double>& thresholds);

// The ten thresholds {0.50, 0.55, ..., 0.95}.
std::vector<double> coco_thresholds();

double mae(const std::vector<double>& preds, const std::vector<double>& gts);

// 100 * sum|pred - gt| / sum gt.
double error_percentage(const std::vector<double>& preds, const std::vector<double>& gts);

struct PerItemEnergy {
  std::string image_id;
  double pred_kcal = 0.0;
  double gt_kcal = 0.0;
};

struct OccasionTotal {
  std::string image_id;
  double pred_total = 0.0;
  double gt_total = 0.0;
};

// Per-occasion sums, ordered by first appearance of each image_id.
std::vector<OccasionTotal> occasion_totals(const std::vector<PerItemEnergy>& per_item);

struct EvalReport {
  std::string method;
  std::string config_hash;
  uint64_t seed = 0;
  double map_50 = 0.0;
  double map_75 = 0.0;
  double map_5095 = 0.0;
  std::map<std::string, double> per_category_ap;  // at IoU 0.5
  double mae_kcal = 0.0;
  double ep_percent = 0.0;
  std::vector<OccasionTotal> occasions;

  std::string to_json_text() const;
  static EvalReport from_json_text(const std::string& text);
  std::string to_text_table() const;
};

}  // namespace foodpipe
