#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "core/image.hpp"
#include "core/nn.hpp"

namespace foodpipe {

// Eq.-style cross entropy on an explicit probability vector. probs must sum
// to 1 within 1e-6 and onehot must have exactly one 1; probabilities are
// clamped to >= 1e-12 before the log.
double cross_entropy(const std::vector<double>& probs, const std::vector<double>& onehot);

struct ClassifierHyper {
  int input_size = 64;
  std::vector<int> channels = {8, 16, 32};  // one conv+pool stage per entry
  int hidden = 64;
  double lr = 1e-3;
  int epochs = 12;
  int batch_size = 16;
};

struct LabeledCrop {
  RgbImage image;
  std::string category;
};

class ClassifierModel {
public:
  ClassifierModel(std::vector<std::string> label_set, ClassifierHyper hyper, uint64_t seed);

  // (category, softmax confidence) for a crop; resized internally.
  std::pair<std::string, double> classify(const RgbImage& crop) const;
  std::vector<float> probabilities(const RgbImage& crop) const;

  const std::vector<std::string>& label_set() const { return label_set_; }
  const ClassifierHyper& hyper() const { return hyper_; }

  void save(const std::string& path) const;
  static std::unique_ptr<ClassifierModel> load(const std::string& path);

  // Training metadata (per-epoch losses / val accuracy), serialized in the
  // checkpoint header.
  std::vector<double> train_loss_history;
  std::vector<double> val_accuracy_history;

private:
  friend std::unique_ptr<ClassifierModel> train_classifier(
      const std::vector<LabeledCrop>&, const std::vector<std::string>&, const ClassifierHyper&,
      uint64_t, const std::vector<LabeledCrop>*);

  nn::Tensor prepare(const RgbImage& crop) const;

  std::vector<std::string> label_set_;
  ClassifierHyper hyper_;
  uint64_t seed_ = 0;
  mutable nn::Sequential net_;
  mutable std::mutex infer_mutex_;
};

// Minimizes mean cross entropy over the crops; every label_set category must
// appear at least once. Deterministic given seed.
std::unique_ptr<ClassifierModel> train_classifier(const std::vector<LabeledCrop>& crops,
                                                  const std::vector<std::string>& label_set,
                                                  const ClassifierHyper& hyper, uint64_t seed,
                                                  const std::vector<LabeledCrop>* val = nullptr);

}  // namespace foodpipe
