#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "core/image.hpp"

namespace foodpipe {

// Axis-aligned box in pixel coordinates, corner convention [x1,y1,x2,y2],
// origin top-left. Coordinates are floats; rasterization rounds at crop time.
struct BoundingBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  bool valid() const { return x1 < x2 && y1 < y2; }
  bool inside(double image_width, double image_height) const {
    return valid() && x1 >= 0 && y1 >= 0 && x2 <= image_width && y2 <= image_height;
  }
};

struct FoodAnnotation {
  BoundingBox bbox;
  std::string category;
  double kcal = 0;
};

struct EatingOccasionRecord {
  std::string image_id;
  std::string image_path;
  std::optional<std::string> energy_map_path;
  double energy_scale = 1.0;
  std::vector<FoodAnnotation> annotations;
};

enum class SplitTag { Train, Val, Test };

std::string to_string(SplitTag tag);
SplitTag split_tag_from_string(const std::string& s);

struct DatasetManifest {
  std::vector<std::string> label_set;
  std::vector<EatingOccasionRecord> records;
  std::map<std::string, SplitTag> split_tags;  // empty until split_dataset runs
  std::string base_dir;  // directory of the manifest file; not serialized

  const EatingOccasionRecord* find(const std::string& image_id) const;
  std::vector<const EatingOccasionRecord*> records_in(SplitTag tag) const;
  // Like records_in, except an untagged manifest counts entirely as train.
  std::vector<const EatingOccasionRecord*> split_records(SplitTag tag) const;
  // Resolves a manifest-relative path against base_dir.
  std::string resolve(const std::string& path) const;
};

// Structural validation of every invariant the schema promises. Image files
// are probed for bounds only when check_files is set (it costs a decode).
void validate_manifest(const DatasetManifest& manifest, bool check_files);

DatasetManifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const DatasetManifest& manifest);

// Deterministic per-occasion split. Fractions of val/test land within one
// record of the request; every image_id gets exactly one tag.
DatasetManifest split_dataset(const DatasetManifest& manifest, double val_frac,
                              double test_frac, uint64_t seed);

// Output size is (round(x2-x1), round(y2-y1)); pixel (u,v) of the output is
// pixel (round(x1)+u, round(y1)+v) of the input.
RgbImage crop_region(const RgbImage& image, const BoundingBox& bbox);

// Shared rounding for all raster crops of a box.
struct PixelWindow {
  int x0 = 0, y0 = 0, w = 0, h = 0;
};
PixelWindow pixel_window(const BoundingBox& bbox, int image_width, int image_height);

}  // namespace foodpipe
