#include "core/augment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>

#include "core/imageio.hpp"

namespace foodpipe {

std::string to_string(AugmentOp op) {
  switch (op) {
    case AugmentOp::Rot90: return "rot90";
    case AugmentOp::Rot270: return "rot270";
    case AugmentOp::FlipH: return "flip_h";
    case AugmentOp::FlipV: return "flip_v";
    case AugmentOp::FlipBoth: return "flip_both";
  }
  return "rot90";
}

AugmentOp augment_op_from_string(const std::string& s) {
  for (AugmentOp op : kAllAugmentOps)
    if (to_string(op) == s) return op;
  raise(ErrorKind::Parse, "unknown augment op '", s, "'");
}

BoundingBox transform_bbox(const BoundingBox& bbox, AugmentOp op, double width, double height) {
  if (!bbox.inside(width, height))
    raise(ErrorKind::InvalidArgument, "bbox [", bbox.x1, ",", bbox.y1, ",", bbox.x2, ",",
          bbox.y2, "] outside ", width, "x", height, " frame");
  switch (op) {
    case AugmentOp::FlipH:
      return {width - bbox.x2, bbox.y1, width - bbox.x1, bbox.y2};
    case AugmentOp::FlipV:
      return {bbox.x1, height - bbox.y2, bbox.x2, height - bbox.y1};
    case AugmentOp::FlipBoth:
      return {width - bbox.x2, height - bbox.y2, width - bbox.x1, height - bbox.y1};
    case AugmentOp::Rot90:  // (x, y) -> (H - y, x)
      return {height - bbox.y2, bbox.x1, height - bbox.y1, bbox.x2};
    case AugmentOp::Rot270:  // (x, y) -> (y, W - x)
      return {bbox.y1, width - bbox.x2, bbox.y2, width - bbox.x1};
  }
  return bbox;
}

namespace {

// Pure index permutation shared by image and map transforms.
template <typename T>
std::vector<T> transform_raster(const std::vector<T>& src, int w, int h, int channels,
                                AugmentOp op, int& out_w, int& out_h) {
  const bool rotates = (op == AugmentOp::Rot90 || op == AugmentOp::Rot270);
  out_w = rotates ? h : w;
  out_h = rotates ? w : h;
  std::vector<T> out(src.size());
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      int sx = 0, sy = 0;
      switch (op) {
        case AugmentOp::FlipH: sx = w - 1 - x; sy = y; break;
        case AugmentOp::FlipV: sx = x; sy = h - 1 - y; break;
        case AugmentOp::FlipBoth: sx = w - 1 - x; sy = h - 1 - y; break;
        case AugmentOp::Rot90: sx = y; sy = h - 1 - x; break;
        case AugmentOp::Rot270: sx = w - 1 - y; sy = x; break;
      }
      const T* in_px = src.data() + (static_cast<size_t>(sy) * w + sx) * channels;
      T* out_px = out.data() + (static_cast<size_t>(y) * out_w + x) * channels;
      std::copy(in_px, in_px + channels, out_px);
    }
  }
  return out;
}

}  // namespace

RgbImage transform_image(const RgbImage& image, AugmentOp op) {
  RgbImage out;
  out.data = transform_raster(image.data, image.width, image.height, 3, op, out.width,
                              out.height);
  return out;
}

EnergyMap transform_energy(const EnergyMap& map, AugmentOp op) {
  EnergyMap out;
  out.energy_scale = map.energy_scale;
  out.values = transform_raster(map.values, map.width, map.height, 1, op, out.width,
                                out.height);
  return out;
}

RecordData load_record_data(const DatasetManifest& manifest,
                            const EatingOccasionRecord& record) {
  RecordData data;
  data.record = record;
  data.image = io::load_rgb_png(manifest.resolve(record.image_path));
  if (record.energy_map_path)
    data.energy_map =
        io::load_energy_png(manifest.resolve(*record.energy_map_path), record.energy_scale);
  return data;
}

namespace {

std::string derived_path(const std::string& path, AugmentOp op) {
  std::filesystem::path p(path);
  std::filesystem::path out = p.parent_path() /
                              (p.stem().string() + "#" + to_string(op) + p.extension().string());
  return out.string();
}

}  // namespace

RecordData augment_record(const RecordData& input, AugmentOp op) {
  const double w = input.image.width;
  const double h = input.image.height;
  RecordData out;
  out.record = input.record;
  out.record.image_id = input.record.image_id + "#" + to_string(op);
  out.record.image_path = derived_path(input.record.image_path, op);
  if (input.record.energy_map_path)
    out.record.energy_map_path = derived_path(*input.record.energy_map_path, op);
  for (auto& ann : out.record.annotations) ann.bbox = transform_bbox(ann.bbox, op, w, h);
  out.image = transform_image(input.image, op);
  if (input.energy_map) out.energy_map = transform_energy(*input.energy_map, op);
  return out;
}

EatingOccasionRecord augment_record_files(const DatasetManifest& manifest,
                                          const EatingOccasionRecord& record, AugmentOp op) {
  RecordData transformed = augment_record(load_record_data(manifest, record), op);
  io::save_rgb_png(manifest.resolve(transformed.record.image_path), transformed.image);
  if (transformed.energy_map)
    io::save_energy_png(manifest.resolve(*transformed.record.energy_map_path),
                        *transformed.energy_map);
  return transformed.record;
}

DatasetManifest balance_augment(const DatasetManifest& manifest, uint64_t seed) {
  auto train = manifest.split_records(SplitTag::Train);
  if (train.empty()) raise(ErrorKind::InvalidArgument, "balance_augment: empty train split");

  // Images per category over the train split, the paper's frequency notion.
  std::map<std::string, int> category_images;
  for (const auto* rec : train) {
    std::map<std::string, bool> seen;
    for (const auto& ann : rec->annotations)
      if (!seen[ann.category]) {
        seen[ann.category] = true;
        category_images[ann.category] += 1;
      }
  }
  int c_max = 0;
  for (const auto& [cat, count] : category_images) c_max = std::max(c_max, count);

  DatasetManifest out = manifest;
  Rng base(seed);
  size_t train_index = 0;
  for (const auto* rec : train) {
    int k = 0;
    if (!rec->annotations.empty() && c_max > 0) {
      int c_rec = c_max;
      for (const auto& ann : rec->annotations)
        c_rec = std::min(c_rec, category_images[ann.category]);
      double raw = 5.0 * (1.0 - static_cast<double>(c_rec) / c_max);
      k = std::clamp(static_cast<int>(std::lround(raw)), 0, 5);
    }
    if (k > 0) {
      std::vector<AugmentOp> ops(kAllAugmentOps.begin(), kAllAugmentOps.end());
      Rng rng = base.fork(train_index);
      rng.shuffle(ops);
      for (int i = 0; i < k; ++i) {
        EatingOccasionRecord augmented = augment_record_files(manifest, *rec, ops[i]);
        out.split_tags[augmented.image_id] = SplitTag::Train;
        out.records.push_back(std::move(augmented));
      }
    }
    ++train_index;
  }
  validate_manifest(out, false);
  return out;
}

}  // namespace foodpipe
