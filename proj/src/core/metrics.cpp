#include "core/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <json.hpp>

namespace foodpipe {

using nlohmann::json;

double iou(const BoundingBox& a, const BoundingBox& b) {
  if (!a.valid() || !b.valid())
    raise(ErrorKind::InvalidArgument, "iou of degenerate box");
  const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = ix * iy;
  if (inter <= 0.0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  return inter / uni;
}

MatchResult match_detections(const std::vector<PredItem>& preds,
                             const std::vector<FoodAnnotation>& gts, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0))
    raise(ErrorKind::InvalidArgument, "iou_threshold must be in (0,1], got ", iou_threshold);

  MatchResult result;
  result.iou_threshold = iou_threshold;

  std::vector<int> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return preds[a].score > preds[b].score; });

  std::vector<bool> gt_used(gts.size(), false);
  for (int pi : order) {
    const auto& pred = preds[pi];
    int best_gt = -1;
    double best_iou = iou_threshold;  // strict ">" comparison below
    for (size_t gi = 0; gi < gts.size(); ++gi) {
      if (gt_used[gi] || gts[gi].category != pred.category) continue;
      double v = iou(pred.bbox, gts[gi].bbox);
      if (v > best_iou) {
        best_iou = v;
        best_gt = static_cast<int>(gi);
      }
    }
    MatchEntry entry;
    entry.pred_index = pi;
    if (best_gt >= 0) {
      gt_used[static_cast<size_t>(best_gt)] = true;
      entry.matched_gt = best_gt;
      entry.is_tp = true;
      result.counts[pred.category].tp += 1;
      result.tp += 1;
    } else {
      entry.is_tp = false;
      result.counts[pred.category].fp += 1;
      result.fp += 1;
    }
    result.per_category[pred.category].push_back(entry);
  }
  for (size_t gi = 0; gi < gts.size(); ++gi) {
    result.counts[gts[gi].category];  // materialize gt-only categories
    if (!gt_used[gi]) {
      result.counts[gts[gi].category].fn += 1;
      result.fn += 1;
    }
  }
  return result;
}

std::pair<double, double> precision_recall(const MatchResult& match) {
  const double precision =
      (match.tp + match.fp) > 0 ? static_cast<double>(match.tp) / (match.tp + match.fp) : 0.0;
  const double recall =
      (match.tp + match.fn) > 0 ? static_cast<double>(match.tp) / (match.tp + match.fn) : 0.0;
  return {precision, recall};
}

double average_precision(const std::vector<bool>& ranked_tp_flags, int n_gt) {
  if (n_gt < 0) raise(ErrorKind::InvalidArgument, "n_gt must be >= 0");
  if (n_gt == 0) return 0.0;

  const size_t n = ranked_tp_flags.size();
  std::vector<double> precision(n);
  int cum_tp = 0;
  for (size_t i = 0; i < n; ++i) {
    if (ranked_tp_flags[i]) ++cum_tp;
    precision[i] = static_cast<double>(cum_tp) / static_cast<double>(i + 1);
  }
  // Continuous precision envelope: max precision at this rank or beyond.
  for (size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);

  // Each TP advances recall by 1/n_gt; integrate envelope over those steps.
  double ap = 0.0;
  for (size_t i = 0; i < n; ++i)
    if (ranked_tp_flags[i]) ap += precision[i] / static_cast<double>(n_gt);
  return ap;
}

std::vector<double> coco_thresholds() {
  std::vector<double> out;
  for (int i = 50; i <= 95; i += 5) out.push_back(static_cast<double>(i) / 100.0);
  return out;
}

MapResult mean_average_precision(const std::vector<ImageEval>& dataset,
                                 const std::vector<double>& thresholds) {
  if (dataset.empty()) raise(ErrorKind::InvalidArgument, "empty evaluated dataset");
  if (thresholds.empty()) raise(ErrorKind::InvalidArgument, "no IoU thresholds supplied");

  std::set<std::string> categories;
  std::map<std::string, int> gt_count;
  bool any_gt = false;
  for (const auto& image : dataset) {
    for (const auto& p : image.preds) categories.insert(p.category);
    for (const auto& g : image.gts) {
      categories.insert(g.category);
      gt_count[g.category] += 1;
      any_gt = true;
    }
  }
  if (!any_gt) raise(ErrorKind::InvalidArgument, "no categories with groundtruth");

  MapResult result;
  result.thresholds = thresholds;

  for (size_t ti = 0; ti < thresholds.size(); ++ti) {
    const double t = thresholds[ti];

    // Score-ordered TP flags per category, pooled over images. Greedy
    // matching depends only on the relative order within one image, so
    // per-image matching followed by a global stable sort is equivalent to
    // matching in global score order.
    std::map<std::string, std::vector<std::pair<double, bool>>> pooled;
    for (const auto& image : dataset) {
      MatchResult match = match_detections(image.preds, image.gts, t);
      for (const auto& [category, entries] : match.per_category)
        for (const auto& e : entries)
          pooled[category].emplace_back(image.preds[static_cast<size_t>(e.pred_index)].score,
                                        e.is_tp);
    }

    double ap_sum = 0.0;
    int ap_count = 0;
    for (const auto& category : categories) {
      const int n_gt = gt_count.count(category) ? gt_count.at(category) : 0;
      auto it = pooled.find(category);
      const bool has_preds = it != pooled.end() && !it->second.empty();
      if (n_gt == 0 && !has_preds) continue;  // skipped, not zero-averaged
      std::vector<bool> flags;
      if (has_preds) {
        auto& scored = it->second;
        std::stable_sort(scored.begin(), scored.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        flags.reserve(scored.size());
        for (const auto& [score, is_tp] : scored) flags.push_back(is_tp);
      }
      const double ap = average_precision(flags, n_gt);
      ap_sum += ap;
      ap_count += 1;
      if (ti == 0) result.per_category_ap[category] = ap;
    }
    if (ap_count == 0) raise(ErrorKind::InvalidArgument, "no categories with groundtruth");
    result.map_per_threshold.push_back(ap_sum / ap_count);
  }

  double total = 0.0;
  for (double v : result.map_per_threshold) total += v;
  result.map_mean = total / static_cast<double>(result.map_per_threshold.size());
  return result;
}

double mae(const std::vector<double>& preds, const std::vector<double>& gts) {
  if (preds.size() != gts.size())
    raise(ErrorKind::InvalidArgument, "mae: length mismatch ", preds.size(), " vs ",
          gts.size());
  if (preds.empty()) raise(ErrorKind::InvalidArgument, "mae: empty input");
  double total = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) total += std::fabs(preds[i] - gts[i]);
  return total / static_cast<double>(preds.size());
}

double error_percentage(const std::vector<double>& preds, const std::vector<double>& gts) {
  if (preds.size() != gts.size())
    raise(ErrorKind::InvalidArgument, "error_percentage: length mismatch ", preds.size(),
          " vs ", gts.size());
  double err = 0.0;
  double total = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) {
    err += std::fabs(preds[i] - gts[i]);
    total += gts[i];
  }
  if (!(total > 0.0))
    raise(ErrorKind::InvalidArgument, "error_percentage: groundtruth total must be > 0");
  return 100.0 * err / total;
}

std::vector<OccasionTotal> occasion_totals(const std::vector<PerItemEnergy>& per_item) {
  std::vector<OccasionTotal> out;
  std::map<std::string, size_t> index;
  for (const auto& item : per_item) {
    auto it = index.find(item.image_id);
    if (it == index.end()) {
      index[item.image_id] = out.size();
      out.push_back({item.image_id, item.pred_kcal, item.gt_kcal});
    } else {
      out[it->second].pred_total += item.pred_kcal;
      out[it->second].gt_total += item.gt_kcal;
    }
  }
  return out;
}

std::string EvalReport::to_json_text() const {
  json j;
  j["method"] = method;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["map"]["0.50"] = map_50;
  j["map"]["0.75"] = map_75;
  j["map"]["0.50:0.95"] = map_5095;
  j["per_category_ap"] = per_category_ap;
  j["mae_kcal"] = mae_kcal;
  j["ep_percent"] = ep_percent;
  j["occasions"] = json::array();
  for (const auto& o : occasions)
    j["occasions"].push_back({{"image_id", o.image_id},
                              {"gt_total", o.gt_total},
                              {"pred_total", o.pred_total}});
  return j.dump(2) + "\n";
}

EvalReport EvalReport::from_json_text(const std::string& text) {
  EvalReport r;
  json j;
  try {
    j = json::parse(text);
    r.method = j.value("method", "");
    r.config_hash = j.value("config_hash", "");
    r.seed = j.value("seed", 0ULL);
    r.map_50 = j.at("map").at("0.50").get<double>();
    r.map_75 = j.at("map").at("0.75").get<double>();
    r.map_5095 = j.at("map").at("0.50:0.95").get<double>();
    if (j.contains("per_category_ap"))
      for (auto it = j["per_category_ap"].begin(); it != j["per_category_ap"].end(); ++it)
        r.per_category_ap[it.key()] = it.value().get<double>();
    r.mae_kcal = j.value("mae_kcal", 0.0);
    r.ep_percent = j.value("ep_percent", 0.0);
    for (const auto& jo : j.value("occasions", json::array()))
      r.occasions.push_back({jo.at("image_id").get<std::string>(),
                             jo.at("pred_total").get<double>(),
                             jo.at("gt_total").get<double>()});
  } catch (const json::exception& e) {
    raise(ErrorKind::Parse, "eval report: ", e.what());
  }
  return r;
}

std::string EvalReport::to_text_table() const {
  std::ostringstream os;
  char line[128];
  os << "method: " << method << "  (config " << config_hash << ", seed " << seed << ")\n";
  os << "+-----------------+----------+\n";
  auto row = [&](const char* name, double value) {
    std::snprintf(line, sizeof(line), "| %-15s | %8.4f |\n", name, value);
    os << line;
  };
  row("mAP@.5", map_50);
  row("mAP@.75", map_75);
  row("mAP@[.5:.95]", map_5095);
  row("MAE (kcal)", mae_kcal);
  row("EP (%)", ep_percent);
  os << "+-----------------+----------+\n";
  if (!per_category_ap.empty()) {
    os << "per-category AP@.5:\n";
    for (const auto& [category, ap] : per_category_ap) {
      std::snprintf(line, sizeof(line), "  %-16s %8.4f\n", category.c_str(), ap);
      os << line;
    }
  }
  return os.str();
}

}  // namespace foodpipe
