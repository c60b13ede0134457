#pragma once

#include <array>
#include <optional>

#include "core/dataset.hpp"

namespace foodpipe {

// The five grid isometries used for training-set expansion.
enum class AugmentOp { Rot90, Rot270, FlipH, FlipV, FlipBoth };

inline constexpr std::array<AugmentOp, 5> kAllAugmentOps = {
    AugmentOp::Rot90, AugmentOp::Rot270, AugmentOp::FlipH, AugmentOp::FlipV,
    AugmentOp::FlipBoth};

std::string to_string(AugmentOp op);
AugmentOp augment_op_from_string(const std::string& s);

// Maps the box's corner set through the op and re-sorts to corner convention.
// Rotations swap the frame to (height, width). flip_h mirrors x -> W - x,
// flip_v mirrors y -> H - y, rot90 is clockwise.
BoundingBox transform_bbox(const BoundingBox& bbox, AugmentOp op, double width, double height);

RgbImage transform_image(const RgbImage& image, AugmentOp op);
EnergyMap transform_energy(const EnergyMap& map, AugmentOp op);

// One record with its rasters resident in memory.
struct RecordData {
  EatingOccasionRecord record;
  RgbImage image;
  std::optional<EnergyMap> energy_map;
};

RecordData load_record_data(const DatasetManifest& manifest, const EatingOccasionRecord& record);

// Transforms image, energy map (when present) and all boxes by the same op.
// Categories and kcal are untouched; the id becomes "<id>#<op>". Paths are
// derived the same way but files are not written.
RecordData augment_record(const RecordData& input, AugmentOp op);

// File-backed variant: reads the record's rasters, writes transformed files
// next to the originals, returns the new record.
EatingOccasionRecord augment_record_files(const DatasetManifest& manifest,
                                          const EatingOccasionRecord& record, AugmentOp op);

// Expands the train split, giving records with rarer categories more ops:
// k = clamp(round(5 * (1 - c_rec / c_max)), 0, 5) where c_rec counts train
// images containing the record's rarest category. Originals are retained;
// augmented copies are tagged train.
DatasetManifest balance_augment(const DatasetManifest& manifest, uint64_t seed);

}  // namespace foodpipe
