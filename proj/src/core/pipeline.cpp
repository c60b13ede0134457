#include "core/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "core/augment.hpp"
#include "core/imageio.hpp"

namespace foodpipe {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// PipelineConfig

PipelineConfig PipelineConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::Io, "cannot open config '", path, "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    raise(ErrorKind::Parse, "config '", path, "': ", e.what());
  }
  return from_json(j, fs::path(path).parent_path().string());
}

PipelineConfig PipelineConfig::from_json(const json& j, const std::string& base_dir) {
  PipelineConfig c;
  c.root_ = j;
  c.base_dir_ = base_dir;
  return c;
}

void PipelineConfig::set_option(const std::string& key, const std::string& value) {
  if (key.empty()) raise(ErrorKind::InvalidArgument, "empty option key");
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;
  }
  json* node = &root_;
  size_t start = 0;
  for (;;) {
    const size_t dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
    if (part.empty()) raise(ErrorKind::InvalidArgument, "bad option key '", key, "'");
    if (dot == std::string::npos) {
      (*node)[part] = parsed;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

uint64_t PipelineConfig::seed() const { return root_.value("seed", 7ULL); }

std::string PipelineConfig::config_hash() const { return to_hex(fnv1a64(root_.dump())); }

std::string PipelineConfig::resolve(const std::string& path) const {
  fs::path p(path);
  if (p.is_absolute() || base_dir_.empty()) return path;
  return (fs::path(base_dir_) / p).string();
}

std::string PipelineConfig::path_value(const std::string& key, const std::string& fallback) const {
  if (root_.contains("paths") && root_["paths"].contains(key))
    return root_["paths"][key].get<std::string>();
  return fallback;
}

std::string PipelineConfig::manifest_path() const {
  std::string p = path_value("manifest", "");
  if (!p.empty()) return resolve(p);
  return (fs::path(data_dir()) / "manifest.json").string();
}

std::string PipelineConfig::checkpoint_path(const std::string& name) const {
  std::string p = path_value(name + "_checkpoint", "");
  if (!p.empty()) return resolve(p);
  return (fs::path(out_dir()) / "checkpoints" / (name + ".fpck")).string();
}

namespace {
const json* sub(const json& root, const char* key) {
  auto it = root.find(key);
  return it == root.end() ? nullptr : &*it;
}
template <typename T>
T field(const json* node, const char* key, T fallback) {
  if (!node) return fallback;
  return node->value(key, fallback);
}
}  // namespace

SceneConfig PipelineConfig::scene_config() const {
  const json* s = sub(root_, "scene");
  SceneConfig cfg;
  cfg.width = field(s, "width", cfg.width);
  cfg.height = field(s, "height", cfg.height);
  cfg.items_min = field(s, "items_min", cfg.items_min);
  cfg.items_max = field(s, "items_max", cfg.items_max);
  cfg.size_min = field(s, "size_min", cfg.size_min);
  cfg.size_max = field(s, "size_max", cfg.size_max);
  cfg.occlusion_allowed = field(s, "occlusion_allowed", cfg.occlusion_allowed);
  cfg.noise_std = field(s, "noise_std", cfg.noise_std);
  cfg.energy_scale = field(s, "energy_scale", cfg.energy_scale);
  if (s && s->contains("background")) {
    const auto& bg = (*s)["background"];
    for (int i = 0; i < 3; ++i) cfg.background[i] = bg.at(i).get<uint8_t>();
  }
  if (s && s->contains("categories")) {
    for (const auto& jc : (*s)["categories"]) {
      CategorySpec c;
      c.name = jc.at("name").get<std::string>();
      c.shape = item_shape_from_string(jc.value("shape", "disk"));
      const auto& col = jc.at("color");
      for (int i = 0; i < 3; ++i) c.color[i] = col.at(i).get<uint8_t>();
      c.density = jc.at("density").get<double>();
      cfg.categories.push_back(std::move(c));
    }
  } else {
    cfg.categories = default_categories(field(s, "num_categories", 8), cfg.energy_scale);
  }
  return cfg;
}

int PipelineConfig::scene_count() const { return field(sub(root_, "scene"), "count", 230); }

DetectorHyper PipelineConfig::detector_hyper() const {
  const json* d = sub(root_, "detector");
  DetectorHyper h;
  h.backbone_channels = field(d, "backbone_channels", h.backbone_channels);
  h.anchor_scales = field(d, "anchor_scales", h.anchor_scales);
  h.anchor_ratios = field(d, "anchor_ratios", h.anchor_ratios);
  h.score_threshold = field(d, "score_threshold", h.score_threshold);
  h.nms_iou_threshold = field(d, "nms_iou_threshold", h.nms_iou_threshold);
  h.lr = field(d, "lr", h.lr);
  h.epochs = field(d, "epochs", h.epochs);
  h.batch_images = field(d, "batch_images", h.batch_images);
  h.rpn_batch = field(d, "rpn_batch", h.rpn_batch);
  h.rpn_positives = field(d, "rpn_positives", h.rpn_positives);
  h.roi_batch = field(d, "roi_batch", h.roi_batch);
  h.roi_positives = field(d, "roi_positives", h.roi_positives);
  h.pre_nms_topk = field(d, "pre_nms_topk", h.pre_nms_topk);
  h.post_nms_topk = field(d, "post_nms_topk", h.post_nms_topk);
  h.proposal_nms_iou = field(d, "proposal_nms_iou", h.proposal_nms_iou);
  h.roi_grid = field(d, "roi_grid", h.roi_grid);
  h.head_hidden = field(d, "head_hidden", h.head_hidden);
  h.min_input = field(d, "min_input", h.min_input);
  return h;
}

ClassifierHyper PipelineConfig::classifier_hyper() const {
  const json* c = sub(root_, "classifier");
  ClassifierHyper h;
  h.input_size = field(c, "input_size", h.input_size);
  h.channels = field(c, "channels", h.channels);
  h.hidden = field(c, "hidden", h.hidden);
  h.lr = field(c, "lr", h.lr);
  h.epochs = field(c, "epochs", h.epochs);
  h.batch_size = field(c, "batch_size", h.batch_size);
  return h;
}

GanHyper PipelineConfig::gan_hyper() const {
  const json* g = sub(root_, "gan");
  GanHyper h;
  h.base_channels = field(g, "base_channels", h.base_channels);
  h.lambda = field(g, "lambda", h.lambda);
  h.lr_g = field(g, "lr_g", h.lr_g);
  h.lr_d = field(g, "lr_d", h.lr_d);
  h.epochs = field(g, "epochs", h.epochs);
  h.dropout = field(g, "dropout", h.dropout);
  h.map_value_max = map_value_max();
  return h;
}

RegressorHyper PipelineConfig::regressor_hyper() const {
  const json* r = sub(root_, "regressor");
  RegressorHyper h;
  h.input_size = field(r, "input_size", h.input_size);
  h.channels = field(r, "channels", h.channels);
  h.hidden = field(r, "hidden", h.hidden);
  h.lr = field(r, "lr", h.lr);
  h.epochs = field(r, "epochs", h.epochs);
  h.batch_size = field(r, "batch_size", h.batch_size);
  h.mask = channel_mask_from_string(field(r, "mask", std::string("all")));
  return h;
}

double PipelineConfig::map_value_max() const {
  return field(sub(root_, "fuse"), "map_value_max", 600.0);
}

double PipelineConfig::split_val_frac() const {
  return field(sub(root_, "split"), "val_frac", 0.15);
}

double PipelineConfig::split_test_frac() const {
  return field(sub(root_, "split"), "test_frac", 0.15);
}

SplitTag PipelineConfig::eval_split() const {
  return split_tag_from_string(field(sub(root_, "eval"), "split", std::string("test")));
}

SplitTag PipelineConfig::infer_split() const {
  return split_tag_from_string(field(sub(root_, "infer"), "split", std::string("test")));
}

double PipelineConfig::match_iou() const {
  return field(sub(root_, "eval"), "match_iou", 0.5);
}

std::vector<double> PipelineConfig::eval_iou_thresholds() const {
  const json* e = sub(root_, "eval");
  if (e && e->contains("iou_thresholds"))
    return (*e)["iou_thresholds"].get<std::vector<double>>();
  return coco_thresholds();
}

std::string PipelineConfig::regressor_map_source() const {
  return field(sub(root_, "regressor"), "map_source", std::string("groundtruth"));
}

// ---------------------------------------------------------------------------
// End-to-end flow

json OccasionResult::to_json() const {
  json j;
  j["image_id"] = image_id;
  j["items"] = json::array();
  for (const auto& item : items) {
    json ji;
    ji["bbox"] = {item.bbox.x1, item.bbox.y1, item.bbox.x2, item.bbox.y2};
    ji["category"] = item.category;
    ji["confidence"] = item.confidence;
    ji["kcal"] = item.kcal;
    if (item.gt_kcal)
      ji["gt_kcal"] = *item.gt_kcal;
    else
      ji["gt_kcal"] = nullptr;
    j["items"].push_back(std::move(ji));
  }
  j["pred_total"] = pred_total;
  if (gt_total)
    j["gt_total"] = *gt_total;
  else
    j["gt_total"] = nullptr;
  return j;
}

PipelineModels load_models(const PipelineConfig& config) {
  PipelineModels m;
  m.detector = DetectorModel::load(config.checkpoint_path("detector"));
  m.classifier = ClassifierModel::load(config.checkpoint_path("classifier"));
  m.generator = GeneratorModel::load(config.checkpoint_path("generator"));
  m.regressor = RegressorModel::load(config.checkpoint_path("regressor"));
  return m;
}

namespace {

// Greedy class-agnostic IoU pairing used to attach groundtruth kcal to
// predicted items for display and per-item error reporting.
std::vector<int> pair_items_to_gt(const std::vector<OccasionItem>& items,
                                  const std::vector<FoodAnnotation>& gts, double min_iou) {
  struct Cand {
    double v;
    int item, gt;
  };
  std::vector<Cand> cands;
  for (size_t i = 0; i < items.size(); ++i)
    for (size_t g = 0; g < gts.size(); ++g) {
      const double v = iou(items[i].bbox, gts[g].bbox);
      if (v >= min_iou) cands.push_back({v, static_cast<int>(i), static_cast<int>(g)});
    }
  std::stable_sort(cands.begin(), cands.end(),
                   [](const Cand& a, const Cand& b) { return a.v > b.v; });
  std::vector<int> match(items.size(), -1);
  std::vector<bool> gt_used(gts.size(), false);
  for (const auto& c : cands) {
    if (match[static_cast<size_t>(c.item)] >= 0 || gt_used[static_cast<size_t>(c.gt)]) continue;
    match[static_cast<size_t>(c.item)] = c.gt;
    gt_used[static_cast<size_t>(c.gt)] = true;
  }
  return match;
}

}  // namespace

OccasionResult run_end_to_end(const PipelineConfig& config, const PipelineModels& models,
                              const RgbImage& image, const std::string& image_id,
                              const std::vector<FoodAnnotation>* groundtruth) {
  OccasionResult result;
  result.image_id = image_id;

  std::vector<Detection> detections = models.detector->detect(image);
  if (!detections.empty()) {
    // One full-image map, reused for every crop.
    EnergyMap full_map = models.generator->generate(image);
    for (const auto& det : detections) {
      RgbImage crop = crop_region(image, det.bbox);
      auto [category, confidence] = models.classifier->classify(crop);
      EnergyMap map_crop = crop_energy_map(full_map, det.bbox);
      RGBDistributionImage fused = fuse_rgbd(crop, map_crop, config.map_value_max());
      const double kcal = models.regressor->estimate(fused);
      OccasionItem item;
      item.bbox = det.bbox;
      item.category = category;
      item.confidence = det.score * confidence;
      item.kcal = kcal;
      result.items.push_back(std::move(item));
    }
  }

  for (const auto& item : result.items) result.pred_total += item.kcal;
  if (groundtruth) {
    auto match = pair_items_to_gt(result.items, *groundtruth, config.match_iou());
    for (size_t i = 0; i < result.items.size(); ++i)
      if (match[i] >= 0)
        result.items[i].gt_kcal = (*groundtruth)[static_cast<size_t>(match[i])].kcal;
    double total = 0.0;
    for (const auto& g : *groundtruth) total += g.kcal;
    result.gt_total = total;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

io::Color category_color(const std::string& category) {
  const uint64_t h = fnv1a64(category);
  // Bright, stable per-category colors.
  return {static_cast<uint8_t>(96 + (h & 0x7f)), static_cast<uint8_t>(96 + ((h >> 8) & 0x7f)),
          static_cast<uint8_t>(96 + ((h >> 16) & 0x7f))};
}

std::string format_kcal_label(const OccasionItem& item) {
  char buf[96];
  if (item.gt_kcal)
    std::snprintf(buf, sizeof(buf), "%s: %.0f kcal (%.0f)", item.category.c_str(), item.kcal,
                  *item.gt_kcal);
  else
    std::snprintf(buf, sizeof(buf), "%s: %.0f kcal", item.category.c_str(), item.kcal);
  return buf;
}

}  // namespace

RgbImage render_annotated(const RgbImage& image, const OccasionResult& result) {
  RgbImage out = image;
  for (const auto& item : result.items) {
    const io::Color color = category_color(item.category);
    const int x1 = static_cast<int>(std::lround(item.bbox.x1));
    const int y1 = static_cast<int>(std::lround(item.bbox.y1));
    const int x2 = static_cast<int>(std::lround(item.bbox.x2)) - 1;
    const int y2 = static_cast<int>(std::lround(item.bbox.y2)) - 1;
    io::draw_rect(out, x1, y1, x2, y2, color, 1);
    const int text_y = y1 >= 10 ? y1 - 3 : std::min(image.height - 2, y2 + 10);
    io::draw_text(out, format_kcal_label(item), std::max(0, x1), text_y, color, 0.3);
  }
  return out;
}

void plot_scatter(const std::map<std::string, std::vector<OccasionTotal>>& series,
                  const std::string& out_path) {
  size_t total_points = 0;
  for (const auto& [name, points] : series) total_points += points.size();
  if (total_points == 0) raise(ErrorKind::InvalidArgument, "plot_scatter: no data points");

  const int W = 720, H = 720;
  const int ml = 80, mr = 30, mt = 30, mb = 60;
  RgbImage canvas = RgbImage::filled(W, H, 255, 255, 255);

  double vmax = 0.0;
  for (const auto& [name, points] : series)
    for (const auto& p : points) vmax = std::max({vmax, p.gt_total, p.pred_total});
  vmax = std::max(vmax, 1.0) * 1.08;

  auto to_px = [&](double gt, double pred) {
    const int x = ml + static_cast<int>(std::lround((gt / vmax) * (W - ml - mr)));
    const int y = H - mb - static_cast<int>(std::lround((pred / vmax) * (H - mt - mb)));
    return std::pair<int, int>(x, y);
  };

  const io::Color black{0, 0, 0};
  const io::Color gray{150, 150, 150};
  io::draw_line(canvas, ml, H - mb, W - mr, H - mb, black, 1);
  io::draw_line(canvas, ml, mt, ml, H - mb, black, 1);
  for (int t = 0; t <= 5; ++t) {
    const double v = vmax * t / 5.0;
    auto [x, y0] = to_px(v, 0.0);
    auto [x0, y] = to_px(0.0, v);
    char label[32];
    std::snprintf(label, sizeof(label), "%.0f", v);
    io::draw_line(canvas, x, H - mb, x, H - mb + 5, black, 1);
    io::draw_text(canvas, label, x - 10, H - mb + 20, black, 0.35);
    io::draw_line(canvas, ml - 5, y, ml, y, black, 1);
    io::draw_text(canvas, label, 8, y + 4, black, 0.35);
  }
  io::draw_text(canvas, "groundtruth kcal", W / 2 - 60, H - 15, black, 0.45);
  io::draw_text(canvas, "estimated kcal", 10, 18, black, 0.45);

  // Dashed identity line: equal prediction and groundtruth.
  const int dash = 8;
  for (double v = 0.0; v < vmax; v += vmax * dash * 2 / (W - ml - mr)) {
    const double v2 = std::min(vmax, v + vmax * dash / (W - ml - mr));
    auto [x1, y1] = to_px(v, v);
    auto [x2, y2] = to_px(v2, v2);
    io::draw_line(canvas, x1, y1, x2, y2, gray, 1);
  }

  const io::Color palette[6] = {{220, 40, 40}, {40, 90, 220}, {30, 160, 60},
                                {230, 150, 20}, {150, 60, 200}, {20, 170, 170}};
  int series_index = 0;
  for (const auto& [name, points] : series) {
    const io::Color color = palette[series_index % 6];
    for (const auto& p : points) {
      auto [x, y] = to_px(p.gt_total, p.pred_total);
      io::draw_filled_circle(canvas, x, y, 3, color);
    }
    const int ly = mt + 18 * series_index + 10;
    io::draw_filled_circle(canvas, ml + 12, ly, 4, color);
    io::draw_text(canvas, name, ml + 22, ly + 4, black, 0.4);
    ++series_index;
  }

  io::save_rgb_png(out_path, canvas);
}

// ---------------------------------------------------------------------------
// Command drivers

namespace {

void append_run_log(const PipelineConfig& config, const std::string& command,
                    const std::string& summary) {
  fs::create_directories(config.out_dir());
  std::ofstream log(fs::path(config.out_dir()) / "run.log", std::ios::app);
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  log << stamp << " command=" << command << " config=" << config.config_hash()
      << " seed=" << config.seed() << " :: " << summary << "\n";
}

DatasetManifest load_manifest_with_split(const PipelineConfig& config) {
  DatasetManifest manifest = load_manifest(config.manifest_path());
  if (manifest.split_tags.empty())
    manifest = split_dataset(manifest, config.split_val_frac(), config.split_test_frac(),
                             config.seed());
  return manifest;
}

std::vector<LabeledCrop> gt_crops(const DatasetManifest& manifest,
                                  const std::vector<const EatingOccasionRecord*>& records) {
  std::vector<LabeledCrop> crops;
  for (const auto* rec : records) {
    RgbImage image = io::load_rgb_png(manifest.resolve(rec->image_path));
    for (const auto& ann : rec->annotations)
      crops.push_back({crop_region(image, ann.bbox), ann.category});
  }
  return crops;
}

struct FusedSet {
  std::vector<PortionPair> pairs;
};

FusedSet fused_pairs(const PipelineConfig& config, const DatasetManifest& manifest,
                     const std::vector<const EatingOccasionRecord*>& records,
                     const GeneratorModel* generator) {
  FusedSet out;
  for (const auto* rec : records) {
    RgbImage image = io::load_rgb_png(manifest.resolve(rec->image_path));
    EnergyMap map;
    if (generator) {
      map = generator->generate(image);
    } else {
      if (!rec->energy_map_path)
        raise(ErrorKind::InvalidArgument, "record '", rec->image_id,
              "' has no groundtruth energy map for regressor training");
      map = io::load_energy_png(manifest.resolve(*rec->energy_map_path), rec->energy_scale);
    }
    for (const auto& ann : rec->annotations) {
      PortionPair pair;
      pair.input = fuse_rgbd(crop_region(image, ann.bbox), crop_energy_map(map, ann.bbox),
                             config.map_value_max());
      pair.kcal = ann.kcal;
      out.pairs.push_back(std::move(pair));
    }
  }
  return out;
}

struct SplitEval {
  EvalReport report;
  std::vector<OccasionResult> results;
};

SplitEval evaluate_split(const PipelineConfig& config, const PipelineModels& models,
                         const DatasetManifest& manifest, SplitTag split,
                         const std::string& method) {
  auto records = manifest.split_records(split);
  if (records.empty())
    raise(ErrorKind::InvalidArgument, "no records in split '", to_string(split), "'");

  SplitEval out;
  std::vector<ImageEval> dataset;
  std::vector<PerItemEnergy> matched_items;
  std::vector<PerItemEnergy> all_items;

  for (const auto* rec : records) {
    RgbImage image = io::load_rgb_png(manifest.resolve(rec->image_path));
    OccasionResult result = run_end_to_end(config, models, image, rec->image_id,
                                           &rec->annotations);

    ImageEval ie;
    ie.gts = rec->annotations;
    for (const auto& item : result.items)
      ie.preds.push_back({item.bbox, item.confidence, item.category});
    dataset.push_back(std::move(ie));

    // Per-item energy pairs: matched pairs report MAE; unmatched predictions
    // and missed groundtruths still count toward occasion totals.
    auto match = pair_items_to_gt(result.items, rec->annotations, config.match_iou());
    std::vector<bool> gt_used(rec->annotations.size(), false);
    for (size_t i = 0; i < result.items.size(); ++i) {
      if (match[i] >= 0) {
        gt_used[static_cast<size_t>(match[i])] = true;
        PerItemEnergy e{rec->image_id, result.items[i].kcal,
                        rec->annotations[static_cast<size_t>(match[i])].kcal};
        matched_items.push_back(e);
        all_items.push_back(e);
      } else {
        all_items.push_back({rec->image_id, result.items[i].kcal, 0.0});
      }
    }
    for (size_t g = 0; g < rec->annotations.size(); ++g)
      if (!gt_used[g]) all_items.push_back({rec->image_id, 0.0, rec->annotations[g].kcal});

    out.results.push_back(std::move(result));
  }

  EvalReport& report = out.report;
  report.method = method;
  report.config_hash = config.config_hash();
  report.seed = config.seed();

  MapResult map = mean_average_precision(dataset, coco_thresholds());
  report.map_50 = map.map_per_threshold[0];
  report.map_75 = map.map_per_threshold[5];
  report.map_5095 = map.map_mean;
  report.per_category_ap = map.per_category_ap;

  if (!matched_items.empty()) {
    std::vector<double> preds, gts;
    for (const auto& e : matched_items) {
      preds.push_back(e.pred_kcal);
      gts.push_back(e.gt_kcal);
    }
    report.mae_kcal = mae(preds, gts);
  }
  report.occasions = occasion_totals(all_items);
  std::vector<double> occ_preds, occ_gts;
  for (const auto& o : report.occasions) {
    occ_preds.push_back(o.pred_total);
    occ_gts.push_back(o.gt_total);
  }
  report.ep_percent = error_percentage(occ_preds, occ_gts);
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  fs::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(path);
  if (!out) raise(ErrorKind::Io, "cannot write '", path, "'");
  out << text;
}

}  // namespace

std::string cmd_generate_synthetic(const PipelineConfig& config) {
  GenerateStats stats;
  SceneConfig scene = config.scene_config();
  DatasetManifest manifest =
      generate_dataset(config.data_dir(), config.scene_count(), scene, config.seed(), &stats);
  manifest = split_dataset(manifest, config.split_val_frac(), config.split_test_frac(),
                           config.seed());
  save_manifest(config.manifest_path(), manifest);
  const std::string summary =
      concat("generated ", manifest.records.size(), " scenes (", scene.categories.size(),
             " categories) under ", config.data_dir(),
             stats.scenes_regenerated
                 ? concat(", ", stats.scenes_regenerated, " scenes retried with fewer items")
                 : std::string());
  append_run_log(config, "generate-synthetic", summary);
  return summary;
}

std::string cmd_augment(const PipelineConfig& config) {
  DatasetManifest manifest = load_manifest_with_split(config);
  const size_t before = manifest.records.size();
  DatasetManifest augmented = balance_augment(manifest, config.seed());
  const std::string out_path =
      (fs::path(config.manifest_path()).parent_path() / "manifest_augmented.json").string();
  save_manifest(out_path, augmented);
  const std::string summary = concat("augmented ", before, " -> ", augmented.records.size(),
                                     " records, wrote ", out_path);
  append_run_log(config, "augment", summary);
  return summary;
}

std::string cmd_train_detector(const PipelineConfig& config) {
  DatasetManifest manifest = load_manifest_with_split(config);
  auto model = train_detector(manifest, config.detector_hyper(), config.seed());
  const std::string path = config.checkpoint_path("detector");
  model->save(path);
  const std::string summary =
      concat("detector trained ", model->train_loss_history.size(), " epochs, final loss ",
             model->train_loss_history.empty() ? 0.0 : model->train_loss_history.back(),
             ", val loss ", model->final_val_loss, ", saved ", path);
  append_run_log(config, "train-detector", summary);
  return summary;
}

std::string cmd_train_classifier(const PipelineConfig& config) {
  DatasetManifest manifest = load_manifest_with_split(config);
  auto train_crops = gt_crops(manifest, manifest.split_records(SplitTag::Train));
  auto val_crops = gt_crops(manifest, manifest.split_records(SplitTag::Val));
  auto model = train_classifier(train_crops, manifest.label_set, config.classifier_hyper(),
                                config.seed(), val_crops.empty() ? nullptr : &val_crops);
  const std::string path = config.checkpoint_path("classifier");
  model->save(path);
  const std::string summary = concat(
      "classifier trained on ", train_crops.size(), " crops, val accuracy ",
      model->val_accuracy_history.empty() ? -1.0 : model->val_accuracy_history.back(),
      ", saved ", path);
  append_run_log(config, "train-classifier", summary);
  return summary;
}

std::string cmd_train_energy_gan(const PipelineConfig& config) {
  DatasetManifest manifest = load_manifest_with_split(config);
  auto model = train_energy_gan(manifest, config.gan_hyper(), config.seed());
  const std::string path = config.checkpoint_path("generator");
  model->save(path);
  const auto& last = model->loss_history.back();
  const std::string summary =
      concat("energy GAN trained ", model->loss_history.size(), " epochs, d_loss ", last.d_loss,
             ", g_adv ", last.g_adv, ", g_l1 ", last.g_l1, ", saved ", path);
  append_run_log(config, "train-energy-gan", summary);
  return summary;
}

std::string cmd_train_regressor(const PipelineConfig& config) {
  DatasetManifest manifest = load_manifest_with_split(config);
  std::unique_ptr<GeneratorModel> generator;
  if (config.regressor_map_source() == "generated")
    generator = GeneratorModel::load(config.checkpoint_path("generator"));
  else if (config.regressor_map_source() != "groundtruth")
    raise(ErrorKind::InvalidArgument, "regressor.map_source must be groundtruth or generated");

  FusedSet train = fused_pairs(config, manifest, manifest.split_records(SplitTag::Train),
                               generator.get());
  FusedSet val =
      fused_pairs(config, manifest, manifest.split_records(SplitTag::Val), generator.get());

  RegressorHyper hyper = config.regressor_hyper();
  auto model = train_regressor(train.pairs, hyper, config.seed(),
                               val.pairs.empty() ? nullptr : &val.pairs);
  std::string name = "regressor";
  if (hyper.mask == ChannelMask::DistOnly) name = "regressor_dist";
  if (hyper.mask == ChannelMask::RgbOnly) name = "regressor_rgb";
  const std::string path = config.checkpoint_path(name);
  model->save(path);
  const std::string summary =
      concat("regressor (", to_string(hyper.mask), ", ", config.regressor_map_source(),
             " maps) trained on ", train.pairs.size(), " pairs, val MAE ",
             model->val_mae_history.empty() ? -1.0 : model->val_mae_history.back(), " kcal, saved ",
             path);
  append_run_log(config, "train-regressor", summary);
  return summary;
}

std::string cmd_infer(const PipelineConfig& config) {
  DatasetManifest manifest = load_manifest_with_split(config);
  PipelineModels models = load_models(config);
  const SplitTag split = config.infer_split();
  SplitEval eval = evaluate_split(config, models, manifest, split, "rgbd");

  const fs::path out(config.out_dir());
  fs::create_directories(out / "results");
  fs::create_directories(out / "annotated");
  for (const auto& result : eval.results) {
    write_text((out / "results" / (result.image_id + ".json")).string(),
               result.to_json().dump(2) + "\n");
    const auto* rec = manifest.find(result.image_id);
    RgbImage image = io::load_rgb_png(manifest.resolve(rec->image_path));
    io::save_rgb_png((out / "annotated" / (result.image_id + ".png")).string(),
                     render_annotated(image, result));
  }
  write_text((out / "eval_report.json").string(), eval.report.to_json_text());
  write_text((out / "eval_report.txt").string(), eval.report.to_text_table());

  const std::string summary =
      concat("infer over ", eval.results.size(), " images (split ", to_string(split),
             "): mAP@.5 ", eval.report.map_50, ", MAE ", eval.report.mae_kcal, " kcal, EP ",
             eval.report.ep_percent, "%");
  append_run_log(config, "infer", summary);
  return summary;
}

std::string cmd_evaluate(const PipelineConfig& config) {
  DatasetManifest manifest = load_manifest_with_split(config);
  PipelineModels models = load_models(config);
  const SplitTag split = config.eval_split();
  const fs::path out(config.out_dir());

  struct Method {
    std::string name;
    std::string checkpoint_key;
  };
  const Method methods[] = {{"rgbd", "regressor"},
                            {"dist_only", "regressor_dist"},
                            {"rgb_only", "regressor_rgb"}};

  std::ostringstream summary;
  summary << "evaluate split " << to_string(split) << ":";
  for (const auto& method : methods) {
    const std::string ckpt = config.checkpoint_path(method.checkpoint_key);
    if (method.name != "rgbd" && !fs::exists(ckpt)) continue;
    if (method.name != "rgbd") models.regressor = RegressorModel::load(ckpt);
    SplitEval eval = evaluate_split(config, models, manifest, split, method.name);
    write_text((out / ("eval_report_" + method.name + ".json")).string(),
               eval.report.to_json_text());
    write_text((out / ("eval_report_" + method.name + ".txt")).string(),
               eval.report.to_text_table());
    summary << " [" << method.name << "] mAP@.5=" << eval.report.map_50
            << " MAE=" << eval.report.mae_kcal << " EP=" << eval.report.ep_percent << "%";
  }
  append_run_log(config, "evaluate", summary.str());
  return summary.str();
}

std::string cmd_plot(const PipelineConfig& config) {
  std::vector<std::string> report_paths;
  if (config.raw().contains("plot") && config.raw()["plot"].contains("reports")) {
    for (const auto& p : config.raw()["plot"]["reports"])
      report_paths.push_back(config.resolve(p.get<std::string>()));
  } else {
    for (const char* name : {"eval_report_rgbd.json", "eval_report_dist_only.json",
                             "eval_report_rgb_only.json", "eval_report.json"}) {
      const std::string p = (fs::path(config.out_dir()) / name).string();
      if (fs::exists(p)) report_paths.push_back(p);
    }
  }
  if (report_paths.empty())
    raise(ErrorKind::InvalidArgument, "plot: no evaluation reports found; run evaluate first");

  std::map<std::string, std::vector<OccasionTotal>> series;
  for (const auto& path : report_paths) {
    std::ifstream in(path);
    if (!in) raise(ErrorKind::Io, "cannot open report '", path, "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    EvalReport report = EvalReport::from_json_text(buf.str());
    const std::string name = report.method.empty() ? path : report.method;
    series[name] = report.occasions;
  }

  std::string out_path = (fs::path(config.out_dir()) / "scatter.png").string();
  if (config.raw().contains("plot") && config.raw()["plot"].contains("out"))
    out_path = config.resolve(config.raw()["plot"]["out"].get<std::string>());
  plot_scatter(series, out_path);
  const std::string summary = concat("scatter with ", series.size(), " series -> ", out_path);
  append_run_log(config, "plot", summary);
  return summary;
}

}  // namespace foodpipe
