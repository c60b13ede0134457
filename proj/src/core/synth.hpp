#pragma once

#include <string>
#include <vector>

#include "core/dataset.hpp"

namespace foodpipe {

enum class ItemShape { Disk, Rectangle, Triangle };

std::string to_string(ItemShape shape);
ItemShape item_shape_from_string(const std::string& s);

struct CategorySpec {
  std::string name;
  ItemShape shape = ItemShape::Disk;
  uint8_t color[3] = {255, 255, 255};
  double density = 0.1;  // kcal per pixel; snapped to the energy_scale grid
};

struct SceneConfig {
  int width = 96;
  int height = 96;
  std::vector<CategorySpec> categories;
  int items_min = 1;
  int items_max = 4;
  int size_min = 14;
  int size_max = 36;
  uint8_t background[3] = {40, 40, 40};
  bool occlusion_allowed = false;
  double noise_std = 4.0;
  double energy_scale = 0.001;  // kcal per stored map unit per pixel

  void validate() const;
};

// Deterministic distinct palette: shapes cycle, hues spread over the wheel,
// densities spread over [0.1, 0.6] kcal/px.
std::vector<CategorySpec> default_categories(int count, double energy_scale);

struct SceneSample {
  EatingOccasionRecord record;  // image_path/energy_map_path filled by generate_dataset
  RgbImage image;
  EnergyMap energy_map;
};

struct GenerateStats {
  int scenes_regenerated = 0;  // scenes retried with fewer items after crowding
};

// Pure function of (config, seed). Annotation kcal is rasterized pixel count
// times category density; the groundtruth map holds the covering item's
// density quantum per pixel, so integrating a crop recovers kcal exactly.
SceneSample generate_scene(const SceneConfig& config, uint64_t seed,
                           GenerateStats* stats = nullptr);

// Writes n scenes (images + 16-bit energy maps) under out_dir and returns the
// manifest, which is also written to out_dir/manifest.json.
DatasetManifest generate_dataset(const std::string& out_dir, int n, const SceneConfig& config,
                                 uint64_t seed, GenerateStats* stats = nullptr);

}  // namespace foodpipe
