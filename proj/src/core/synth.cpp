#include "core/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "core/imageio.hpp"

namespace foodpipe {

std::string to_string(ItemShape shape) {
  switch (shape) {
    case ItemShape::Disk: return "disk";
    case ItemShape::Rectangle: return "rectangle";
    case ItemShape::Triangle: return "triangle";
  }
  return "disk";
}

ItemShape item_shape_from_string(const std::string& s) {
  if (s == "disk") return ItemShape::Disk;
  if (s == "rectangle") return ItemShape::Rectangle;
  if (s == "triangle") return ItemShape::Triangle;
  raise(ErrorKind::Parse, "unknown item shape '", s, "'");
}

void SceneConfig::validate() const {
  if (width < 8 || height < 8)
    raise(ErrorKind::InvalidArgument, "scene size ", width, "x", height, " too small");
  if (categories.size() < 2)
    raise(ErrorKind::InvalidArgument, "scene config needs at least 2 categories, got ",
          categories.size());
  if (items_min < 0 || items_max < items_min)
    raise(ErrorKind::InvalidArgument, "invalid items_per_scene range [", items_min, ",",
          items_max, "]");
  if (size_min < 3 || size_max < size_min || size_max > std::min(width, height) - 4)
    raise(ErrorKind::InvalidArgument, "size_range [", size_min, ",", size_max,
          "] must fit inside the ", width, "x", height, " image");
  if (energy_scale <= 0) raise(ErrorKind::InvalidArgument, "energy_scale must be > 0");
  if (noise_std < 0) raise(ErrorKind::InvalidArgument, "noise_std must be >= 0");
  for (const auto& c : categories) {
    if (c.name.empty()) raise(ErrorKind::InvalidArgument, "category with empty name");
    if (c.density <= 0)
      raise(ErrorKind::InvalidArgument, "category '", c.name, "': density must be > 0");
    double quanta = std::round(c.density / energy_scale);
    if (quanta < 1 || quanta > 65535)
      raise(ErrorKind::InvalidArgument, "category '", c.name, "': density ", c.density,
            " not representable on the ", energy_scale, " grid");
  }
}

namespace {

void hsv_to_rgb(double h, double s, double v, uint8_t out[3]) {
  double c = v * s;
  double hp = h * 6.0;
  double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else { r = c; b = x; }
  double m = v - c;
  out[0] = static_cast<uint8_t>(std::lround((r + m) * 255.0));
  out[1] = static_cast<uint8_t>(std::lround((g + m) * 255.0));
  out[2] = static_cast<uint8_t>(std::lround((b + m) * 255.0));
}

struct PlacedItem {
  int category_index = 0;
  std::vector<int> pixels;  // y * width + x, full (pre-occlusion) footprint
  int min_x = 0, min_y = 0, max_x = 0, max_y = 0;
};

// Rasterizes one shape of nominal size s with origin (ox, oy); pixel centers
// decide membership.
PlacedItem rasterize_item(ItemShape shape, int s, int ox, int oy, int width, int aspect_h) {
  PlacedItem item;
  item.min_x = item.min_y = 1 << 30;
  item.max_x = item.max_y = -1;
  auto add = [&](int x, int y) {
    item.pixels.push_back(y * width + x);
    item.min_x = std::min(item.min_x, x);
    item.max_x = std::max(item.max_x, x);
    item.min_y = std::min(item.min_y, y);
    item.max_y = std::max(item.max_y, y);
  };
  switch (shape) {
    case ItemShape::Disk: {
      double r = s / 2.0;
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
          double dx = x + 0.5 - r;
          double dy = y + 0.5 - r;
          if (dx * dx + dy * dy <= r * r) add(ox + x, oy + y);
        }
      break;
    }
    case ItemShape::Rectangle: {
      for (int y = 0; y < aspect_h; ++y)
        for (int x = 0; x < s; ++x) add(ox + x, oy + y);
      break;
    }
    case ItemShape::Triangle: {
      // Isoceles, apex up: vertices (s/2, 0), (0, s), (s, s).
      double half = s / 2.0;
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
          double px = x + 0.5, py = y + 0.5;
          double spread = half * (py / s);
          if (px >= half - spread && px <= half + spread) add(ox + x, oy + y);
        }
      break;
    }
  }
  return item;
}

bool boxes_overlap(int a_min_x, int a_min_y, int a_max_x, int a_max_y, const PlacedItem& b,
                   int gap) {
  return a_min_x - gap <= b.max_x && b.min_x - gap <= a_max_x && a_min_y - gap <= b.max_y &&
         b.min_y - gap <= a_max_y;
}

}  // namespace

std::vector<CategorySpec> default_categories(int count, double energy_scale) {
  if (count < 2) raise(ErrorKind::InvalidArgument, "need at least 2 categories");
  std::vector<CategorySpec> cats;
  cats.reserve(count);
  const ItemShape shapes[3] = {ItemShape::Disk, ItemShape::Rectangle, ItemShape::Triangle};
  for (int i = 0; i < count; ++i) {
    CategorySpec c;
    char name[32];
    std::snprintf(name, sizeof(name), "food_%02d", i);
    c.name = name;
    c.shape = shapes[i % 3];
    hsv_to_rgb(static_cast<double>(i) / count, 0.75, 0.95, c.color);
    // Density quanta spread over [100, 600] stored units.
    double t = count > 1 ? static_cast<double>(i) / (count - 1) : 0.0;
    double quanta = std::round(100.0 + 500.0 * t);
    c.density = quanta * energy_scale;
    cats.push_back(std::move(c));
  }
  return cats;
}

SceneSample generate_scene(const SceneConfig& config, uint64_t seed, GenerateStats* stats) {
  config.validate();
  Rng rng(seed);

  const int W = config.width, H = config.height;
  const int margin = 2;

  int target_items = static_cast<int>(rng.uniform_int(config.items_min, config.items_max));

  std::vector<PlacedItem> placed;
  for (;;) {
    placed.clear();
    bool scene_ok = true;
    for (int i = 0; i < target_items; ++i) {
      const int kMaxRetries = 60;
      bool item_ok = false;
      for (int attempt = 0; attempt < kMaxRetries && !item_ok; ++attempt) {
        int cat = static_cast<int>(rng.uniform_int(0, static_cast<int64_t>(config.categories.size()) - 1));
        int s = static_cast<int>(rng.uniform_int(config.size_min, config.size_max));
        int aspect_h = s;
        if (config.categories[cat].shape == ItemShape::Rectangle)
          aspect_h = std::max(3, static_cast<int>(std::lround(s * rng.uniform(0.5, 1.0))));
        int max_ox = W - margin - s;
        int max_oy = H - margin - aspect_h;
        if (max_ox < margin || max_oy < margin) continue;
        int ox = static_cast<int>(rng.uniform_int(margin, max_ox));
        int oy = static_cast<int>(rng.uniform_int(margin, max_oy));
        PlacedItem item = rasterize_item(config.categories[cat].shape, s, ox, oy, W, aspect_h);
        item.category_index = cat;
        if (!config.occlusion_allowed) {
          bool clash = false;
          for (const auto& other : placed)
            if (boxes_overlap(item.min_x, item.min_y, item.max_x, item.max_y, other, 1)) {
              clash = true;
              break;
            }
          if (clash) continue;
        }
        placed.push_back(std::move(item));
        item_ok = true;
      }
      if (!item_ok) {
        scene_ok = false;
        break;
      }
    }
    if (scene_ok) break;
    // Scene too crowded for the drawn item count; retry the whole scene with
    // one item fewer.
    target_items -= 1;
    if (stats) stats->scenes_regenerated += 1;
  }

  SceneSample sample;
  sample.image = RgbImage::filled(W, H, config.background[0], config.background[1],
                                  config.background[2]);
  sample.energy_map = EnergyMap::zeros(W, H, config.energy_scale);
  sample.record.energy_scale = config.energy_scale;

  // Paint in placement order; with occlusion on, later items overwrite.
  for (const auto& item : placed) {
    const auto& cat = config.categories[static_cast<size_t>(item.category_index)];
    float quanta = static_cast<float>(std::llround(cat.density / config.energy_scale));
    for (int idx : item.pixels) {
      uint8_t* px = sample.image.data.data() + static_cast<size_t>(idx) * 3;
      px[0] = cat.color[0];
      px[1] = cat.color[1];
      px[2] = cat.color[2];
      sample.energy_map.values[static_cast<size_t>(idx)] = quanta;
    }
  }

  for (const auto& item : placed) {
    const auto& cat = config.categories[static_cast<size_t>(item.category_index)];
    int64_t quanta = std::llround(cat.density / config.energy_scale);
    FoodAnnotation ann;
    ann.bbox = BoundingBox{static_cast<double>(item.min_x), static_cast<double>(item.min_y),
                           static_cast<double>(item.max_x + 1),
                           static_cast<double>(item.max_y + 1)};
    ann.category = cat.name;
    ann.kcal = static_cast<double>(static_cast<int64_t>(item.pixels.size()) * quanta) *
               config.energy_scale;
    sample.record.annotations.push_back(std::move(ann));
  }

  if (config.noise_std > 0) {
    for (auto& v : sample.image.data) {
      double noisy = static_cast<double>(v) + rng.normal(0.0, config.noise_std);
      v = static_cast<uint8_t>(std::clamp(std::lround(noisy), 0L, 255L));
    }
  }
  return sample;
}

DatasetManifest generate_dataset(const std::string& out_dir, int n, const SceneConfig& config,
                                 uint64_t seed, GenerateStats* stats) {
  if (n < 1) raise(ErrorKind::InvalidArgument, "dataset size must be >= 1, got ", n);
  config.validate();

  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "maps");

  DatasetManifest manifest;
  manifest.base_dir = out_dir;
  for (const auto& c : config.categories) manifest.label_set.push_back(c.name);

  Rng base(seed);
  for (int i = 0; i < n; ++i) {
    SceneSample sample = generate_scene(config, base.fork(static_cast<uint64_t>(i)).next_u64(),
                                        stats);
    char id[32];
    std::snprintf(id, sizeof(id), "scene_%04d", i);
    sample.record.image_id = id;
    sample.record.image_path = concat("images/", id, ".png");
    sample.record.energy_map_path = concat("maps/", id, "_energy.png");
    io::save_rgb_png((fs::path(out_dir) / sample.record.image_path).string(), sample.image);
    io::save_energy_png((fs::path(out_dir) / *sample.record.energy_map_path).string(),
                        sample.energy_map);
    manifest.records.push_back(std::move(sample.record));
  }

  validate_manifest(manifest, false);
  save_manifest((fs::path(out_dir) / "manifest.json").string(), manifest);
  return manifest;
}

}  // namespace foodpipe
