#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "core/image.hpp"
#include "core/nn.hpp"

namespace foodpipe {

// Four-channel fusion of an RGB crop with its energy-map crop. Channels are
// stored as CHW planes in the RGB value range; the distribution channel is
// the map scaled by a fixed global maximum so magnitudes stay comparable
// across crops.
struct RGBDistributionImage {
  int width = 0;
  int height = 0;
  std::vector<float> planes;  // 4 * width * height, order R,G,B,distribution
  double energy_scale = 1.0;
  double map_value_max = 1.0;

  float at(int c, int y, int x) const {
    return planes[(static_cast<size_t>(c) * height + y) * width + x];
  }
  float& at(int c, int y, int x) {
    return planes[(static_cast<size_t>(c) * height + y) * width + x];
  }
  bool valid() const {
    return width > 0 && height > 0 &&
           planes.size() == static_cast<size_t>(4) * width * height;
  }
};

RGBDistributionImage fuse_rgbd(const RgbImage& rgb_crop, const EnergyMap& map_crop,
                               double map_value_max);

double l1_loss(double pred_kcal, double gt_kcal);

// Input ablations for the comparison baselines: the same network trained on
// masked channels.
enum class ChannelMask { All, RgbOnly, DistOnly };

std::string to_string(ChannelMask mask);
ChannelMask channel_mask_from_string(const std::string& s);

struct RegressorHyper {
  int input_size = 64;
  std::vector<int> channels = {8, 16, 32};
  int hidden = 64;
  double lr = 1e-3;
  int epochs = 30;
  int batch_size = 16;
  ChannelMask mask = ChannelMask::All;
};

struct PortionPair {
  RGBDistributionImage input;
  double kcal = 0;
};

class RegressorModel {
public:
  RegressorModel(RegressorHyper hyper, double kcal_norm, uint64_t seed);

  // Scalar kcal estimate, clamped at 0 (clamp occurrences are counted).
  double estimate(const RGBDistributionImage& input) const;
  int64_t negative_clamp_count() const { return clamped_; }

  const RegressorHyper& hyper() const { return hyper_; }
  double kcal_norm() const { return kcal_norm_; }

  void save(const std::string& path) const;
  static std::unique_ptr<RegressorModel> load(const std::string& path);

  std::vector<double> train_mae_history;
  std::vector<double> val_mae_history;

private:
  friend std::unique_ptr<RegressorModel> train_regressor(const std::vector<PortionPair>&,
                                                         const RegressorHyper&, uint64_t,
                                                         const std::vector<PortionPair>*);
  nn::Tensor prepare(const RGBDistributionImage& input) const;

  RegressorHyper hyper_;
  double kcal_norm_ = 1.0;
  uint64_t seed_ = 0;
  mutable nn::Sequential net_;
  mutable std::mutex infer_mutex_;
  mutable int64_t clamped_ = 0;
};

// Minimizes mean |gt - pred| over the pairs; train/val MAE (kcal) is logged
// per epoch. Deterministic given seed.
std::unique_ptr<RegressorModel> train_regressor(const std::vector<PortionPair>& pairs,
                                                const RegressorHyper& hyper, uint64_t seed,
                                                const std::vector<PortionPair>* val = nullptr);

}  // namespace foodpipe
