#include "core/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "core/imageio.hpp"

namespace foodpipe {

using nlohmann::json;

std::string to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::Train: return "train";
    case SplitTag::Val: return "val";
    case SplitTag::Test: return "test";
  }
  return "train";
}

SplitTag split_tag_from_string(const std::string& s) {
  if (s == "train") return SplitTag::Train;
  if (s == "val") return SplitTag::Val;
  if (s == "test") return SplitTag::Test;
  raise(ErrorKind::Parse, "unknown split tag '", s, "'");
}

const EatingOccasionRecord* DatasetManifest::find(const std::string& image_id) const {
  for (const auto& r : records)
    if (r.image_id == image_id) return &r;
  return nullptr;
}

std::vector<const EatingOccasionRecord*> DatasetManifest::records_in(SplitTag tag) const {
  std::vector<const EatingOccasionRecord*> out;
  for (const auto& r : records) {
    auto it = split_tags.find(r.image_id);
    if (it != split_tags.end() && it->second == tag) out.push_back(&r);
  }
  return out;
}

std::vector<const EatingOccasionRecord*> DatasetManifest::split_records(SplitTag tag) const {
  if (split_tags.empty()) {
    std::vector<const EatingOccasionRecord*> out;
    if (tag == SplitTag::Train)
      for (const auto& r : records) out.push_back(&r);
    return out;
  }
  return records_in(tag);
}

std::string DatasetManifest::resolve(const std::string& path) const {
  std::filesystem::path p(path);
  if (p.is_absolute() || base_dir.empty()) return path;
  return (std::filesystem::path(base_dir) / p).string();
}

void validate_manifest(const DatasetManifest& manifest, bool check_files) {
  std::set<std::string> labels(manifest.label_set.begin(), manifest.label_set.end());
  if (labels.size() != manifest.label_set.size())
    raise(ErrorKind::Validation, "label_set contains duplicates");

  std::set<std::string> seen_ids;
  for (const auto& rec : manifest.records) {
    if (rec.image_id.empty()) raise(ErrorKind::Validation, "record with empty image_id");
    if (!seen_ids.insert(rec.image_id).second)
      raise(ErrorKind::Validation, "duplicate image_id '", rec.image_id, "'");
    if (rec.energy_scale <= 0)
      raise(ErrorKind::Validation, "record '", rec.image_id, "': energy_scale must be > 0");
    for (size_t i = 0; i < rec.annotations.size(); ++i) {
      const auto& ann = rec.annotations[i];
      if (!ann.bbox.valid())
        raise(ErrorKind::Validation, "record '", rec.image_id, "': annotation ", i,
              " has degenerate bbox [", ann.bbox.x1, ",", ann.bbox.y1, ",", ann.bbox.x2, ",",
              ann.bbox.y2, "]");
      if (ann.bbox.x1 < 0 || ann.bbox.y1 < 0)
        raise(ErrorKind::Validation, "record '", rec.image_id, "': annotation ", i,
              " bbox has negative origin");
      if (!labels.count(ann.category))
        raise(ErrorKind::Validation, "record '", rec.image_id, "': annotation ", i,
              " unknown category '", ann.category, "'");
      if (!(ann.kcal >= 0))
        raise(ErrorKind::Validation, "record '", rec.image_id, "': annotation ", i,
              " kcal must be >= 0");
    }
    if (check_files) {
      RgbImage img = io::load_rgb_png(manifest.resolve(rec.image_path));
      for (size_t i = 0; i < rec.annotations.size(); ++i) {
        const auto& b = rec.annotations[i].bbox;
        if (!b.inside(img.width, img.height))
          raise(ErrorKind::Validation, "record '", rec.image_id, "': annotation ", i,
                " bbox exceeds image bounds ", img.width, "x", img.height);
      }
      if (rec.energy_map_path) {
        EnergyMap map = io::load_energy_png(manifest.resolve(*rec.energy_map_path),
                                            rec.energy_scale);
        if (map.width != img.width || map.height != img.height)
          raise(ErrorKind::Validation, "record '", rec.image_id,
                "': energy map dimensions ", map.width, "x", map.height,
                " do not match image ", img.width, "x", img.height);
      }
    }
  }
  for (const auto& [id, tag] : manifest.split_tags) {
    (void)tag;
    if (!seen_ids.count(id))
      raise(ErrorKind::Validation, "split references unknown image_id '", id, "'");
  }
}

namespace {

json bbox_to_json(const BoundingBox& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

BoundingBox bbox_from_json(const json& j, const std::string& image_id) {
  if (!j.is_array() || j.size() != 4)
    raise(ErrorKind::Parse, "record '", image_id, "': bbox must be [x1,y1,x2,y2]");
  BoundingBox b;
  b.x1 = j[0].get<double>();
  b.y1 = j[1].get<double>();
  b.x2 = j[2].get<double>();
  b.y2 = j[3].get<double>();
  return b;
}

}  // namespace

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::Io, "cannot open manifest '", path, "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    raise(ErrorKind::Parse, "manifest '", path, "': ", e.what());
  }

  DatasetManifest m;
  m.base_dir = std::filesystem::path(path).parent_path().string();
  try {
    for (const auto& l : j.at("label_set")) m.label_set.push_back(l.get<std::string>());
    for (const auto& jr : j.at("records")) {
      EatingOccasionRecord rec;
      rec.image_id = jr.at("image_id").get<std::string>();
      rec.image_path = jr.at("image_path").get<std::string>();
      if (jr.contains("energy_map_path") && !jr["energy_map_path"].is_null())
        rec.energy_map_path = jr["energy_map_path"].get<std::string>();
      rec.energy_scale = jr.value("energy_scale", 1.0);
      if (jr.contains("annotations")) {
        for (const auto& ja : jr["annotations"]) {
          FoodAnnotation ann;
          ann.bbox = bbox_from_json(ja.at("bbox"), rec.image_id);
          ann.category = ja.at("category").get<std::string>();
          ann.kcal = ja.at("kcal").get<double>();
          rec.annotations.push_back(std::move(ann));
        }
      }
      m.records.push_back(std::move(rec));
    }
    if (j.contains("split")) {
      for (auto it = j["split"].begin(); it != j["split"].end(); ++it)
        m.split_tags[it.key()] = split_tag_from_string(it.value().get<std::string>());
    }
  } catch (const json::exception& e) {
    raise(ErrorKind::Parse, "manifest '", path, "': ", e.what());
  }
  validate_manifest(m, false);
  return m;
}

void save_manifest(const std::string& path, const DatasetManifest& manifest) {
  json j;
  j["label_set"] = manifest.label_set;
  j["records"] = json::array();
  for (const auto& rec : manifest.records) {
    json jr;
    jr["image_id"] = rec.image_id;
    jr["image_path"] = rec.image_path;
    if (rec.energy_map_path)
      jr["energy_map_path"] = *rec.energy_map_path;
    else
      jr["energy_map_path"] = nullptr;
    jr["energy_scale"] = rec.energy_scale;
    jr["annotations"] = json::array();
    for (const auto& ann : rec.annotations) {
      json ja;
      ja["bbox"] = bbox_to_json(ann.bbox);
      ja["category"] = ann.category;
      ja["kcal"] = ann.kcal;
      jr["annotations"].push_back(std::move(ja));
    }
    j["records"].push_back(std::move(jr));
  }
  if (!manifest.split_tags.empty()) {
    json js;
    for (const auto& [id, tag] : manifest.split_tags) js[id] = to_string(tag);
    j["split"] = std::move(js);
  }

  std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(path);
  if (!out) raise(ErrorKind::Io, "cannot write manifest '", path, "'");
  out << j.dump(2) << "\n";
}

DatasetManifest split_dataset(const DatasetManifest& manifest, double val_frac,
                              double test_frac, uint64_t seed) {
  if (val_frac < 0 || test_frac < 0 || val_frac + test_frac >= 1.0)
    raise(ErrorKind::InvalidArgument, "split fractions must satisfy 0 <= val+test < 1, got val=",
          val_frac, " test=", test_frac);

  std::vector<std::string> ids;
  ids.reserve(manifest.records.size());
  for (const auto& r : manifest.records) ids.push_back(r.image_id);

  Rng rng(seed);
  rng.shuffle(ids);

  const auto n = static_cast<int64_t>(ids.size());
  int64_t n_val = std::llround(static_cast<double>(n) * val_frac);
  int64_t n_test = std::llround(static_cast<double>(n) * test_frac);
  n_test = std::min(n_test, n - n_val);

  DatasetManifest out = manifest;
  out.split_tags.clear();
  for (int64_t i = 0; i < n; ++i) {
    SplitTag tag = i < n_val            ? SplitTag::Val
                   : i < n_val + n_test ? SplitTag::Test
                                        : SplitTag::Train;
    out.split_tags[ids[static_cast<size_t>(i)]] = tag;
  }
  return out;
}

PixelWindow pixel_window(const BoundingBox& bbox, int image_width, int image_height) {
  if (!bbox.inside(image_width, image_height))
    raise(ErrorKind::InvalidArgument, "bbox [", bbox.x1, ",", bbox.y1, ",", bbox.x2, ",",
          bbox.y2, "] outside image ", image_width, "x", image_height);
  PixelWindow w;
  w.w = static_cast<int>(std::llround(bbox.width()));
  w.h = static_cast<int>(std::llround(bbox.height()));
  if (w.w < 1 || w.h < 1)
    raise(ErrorKind::InvalidArgument, "bbox rounds to a degenerate ", w.w, "x", w.h, " window");
  w.x0 = static_cast<int>(std::llround(bbox.x1));
  w.y0 = static_cast<int>(std::llround(bbox.y1));
  // Half-pixel rounding can push the window one pixel past the edge.
  w.x0 = std::clamp(w.x0, 0, image_width - w.w);
  w.y0 = std::clamp(w.y0, 0, image_height - w.h);
  return w;
}

RgbImage crop_region(const RgbImage& image, const BoundingBox& bbox) {
  PixelWindow w = pixel_window(bbox, image.width, image.height);
  RgbImage out;
  out.width = w.w;
  out.height = w.h;
  out.data = raster::crop(image.data, image.width, image.height, 3, w.x0, w.y0, w.w, w.h);
  return out;
}

}  // namespace foodpipe
