#pragma once

#include <memory>
#include <mutex>
#include <vector>

#include "core/detection.hpp"
#include "core/nn.hpp"

namespace foodpipe {

struct DetectorHyper {
  std::vector<int> backbone_channels = {16, 32, 64};  // one conv+pool stage each
  std::vector<double> anchor_scales = {12, 20, 32};
  std::vector<double> anchor_ratios = {0.5, 1.0, 2.0};
  double score_threshold = 0.5;
  double nms_iou_threshold = 0.5;
  double lr = 1e-3;
  int epochs = 20;
  int batch_images = 4;
  int rpn_batch = 48;
  int rpn_positives = 16;
  int roi_batch = 32;
  int roi_positives = 16;
  int pre_nms_topk = 128;
  int post_nms_topk = 32;
  double proposal_nms_iou = 0.7;
  int roi_grid = 4;
  int head_hidden = 128;
  int min_input = 16;
};

// Greedy suppression by descending score; survivors never overlap another
// survivor by more than iou_threshold.
std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold);

// Class-agnostic two-stage localizer: a small convolutional backbone feeds a
// dense anchor scoring/regression head whose proposals are refined by a
// RoI-aligned scoring head.
class DetectorModel {
public:
  DetectorModel(DetectorHyper hyper, uint64_t seed);

  std::vector<Detection> detect(const RgbImage& image) const;

  const DetectorHyper& hyper() const { return hyper_; }
  uint64_t seed() const { return seed_; }

  void save(const std::string& path) const;
  static std::unique_ptr<DetectorModel> load(const std::string& path);

  std::vector<double> train_loss_history;
  double final_val_loss = 0.0;

private:
  friend std::unique_ptr<DetectorModel> train_detector(const DatasetManifest&,
                                                       const DetectorHyper&, uint64_t);
  struct Impl;
  std::unique_ptr<Impl> impl_;
  DetectorHyper hyper_;
  uint64_t seed_ = 0;
  mutable std::mutex infer_mutex_;
};

// Trains on the manifest's train split (all foods collapsed to one foreground
// class); the val split, when present, provides the recorded validation loss.
std::unique_ptr<DetectorModel> train_detector(const DatasetManifest& manifest,
                                              const DetectorHyper& hyper, uint64_t seed);

}  // namespace foodpipe
