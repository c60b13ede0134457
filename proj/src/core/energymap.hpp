#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "core/dataset.hpp"
#include "core/nn.hpp"

namespace foodpipe {

// Sub-raster of the map under crop_region rounding; energy_scale preserved.
EnergyMap crop_energy_map(const EnergyMap& map, const BoundingBox& bbox);

// (sum of stored values) * energy_scale, accumulated in double.
double integrate_energy(const EnergyMap& map);

// Scalar adversarial losses plus the weighted L1 reconstruction term:
//   d_loss = -[log d_real + log(1 - d_fake)]
//   g_loss = -log d_fake + lambda * mean|fake - real|
// using the non-saturating generator form. Probabilities are clamped away
// from {0,1} before the logs.
std::pair<double, double> cgan_losses(double d_real, double d_fake, const EnergyMap& fake_map,
                                      const EnergyMap& real_map, double lambda);

struct GanHyper {
  int base_channels = 12;
  double lambda = 100.0;
  double lr_g = 1e-3;
  double lr_d = 5e-4;
  int epochs = 20;
  double dropout = 0.3;
  double map_value_max = 600.0;  // stored units mapped to 1.0 inside the nets
};

struct GanEpochLosses {
  double d_loss = 0.0;
  double g_adv = 0.0;
  double g_l1 = 0.0;
};

// Image-conditioned map generator (encoder-decoder with skip connections);
// the paired patch discriminator rides along in the checkpoint.
class GeneratorModel {
public:
  GeneratorModel(GanHyper hyper, double energy_scale, uint64_t seed);
  ~GeneratorModel();

  // Output matches the input dimensions (internal pad-and-crop when they are
  // not divisible by the downsampling factor); values are >= 0 and carry the
  // training-time energy_scale.
  EnergyMap generate(const RgbImage& image) const;

  const GanHyper& hyper() const { return hyper_; }
  double energy_scale() const { return energy_scale_; }

  void save(const std::string& path) const;
  static std::unique_ptr<GeneratorModel> load(const std::string& path);

  std::vector<GanEpochLosses> loss_history;

private:
  friend std::unique_ptr<GeneratorModel> train_energy_gan(const DatasetManifest&,
                                                          const GanHyper&, uint64_t);
  struct Impl;
  std::unique_ptr<Impl> impl_;
  GanHyper hyper_;
  double energy_scale_ = 1.0;
  uint64_t seed_ = 0;
  mutable std::mutex infer_mutex_;
};

// Alternating per-image discriminator/generator updates conditioned on the
// RGB image. Every train record must carry a groundtruth map; stochastic
// regularization (decoder dropout) realizes the noise input during training.
std::unique_ptr<GeneratorModel> train_energy_gan(const DatasetManifest& manifest,
                                                 const GanHyper& hyper, uint64_t seed);

}  // namespace foodpipe
