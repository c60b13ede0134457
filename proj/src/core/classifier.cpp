#include "core/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "core/checkpoint.hpp"
#include "core/imageio.hpp"

namespace foodpipe {

double cross_entropy(const std::vector<double>& probs, const std::vector<double>& onehot) {
  if (probs.size() != onehot.size())
    raise(ErrorKind::InvalidArgument, "cross_entropy: dimension mismatch ", probs.size(),
          " vs ", onehot.size());
  if (probs.empty()) raise(ErrorKind::InvalidArgument, "cross_entropy: empty input");

  double total = 0.0;
  int ones = 0;
  int true_index = -1;
  for (size_t i = 0; i < probs.size(); ++i) {
    total += probs[i];
    if (onehot[i] == 1.0) {
      ++ones;
      true_index = static_cast<int>(i);
    } else if (onehot[i] != 0.0) {
      raise(ErrorKind::InvalidArgument, "cross_entropy: onehot entry ", onehot[i]);
    }
  }
  if (ones != 1) raise(ErrorKind::InvalidArgument, "cross_entropy: onehot must have one 1");
  if (std::fabs(total - 1.0) > 1e-6)
    raise(ErrorKind::InvalidArgument, "cross_entropy: probs sum to ", total);

  const double p = std::max(probs[static_cast<size_t>(true_index)], 1e-12);
  return -std::log(p);
}

namespace {

void build_net(nn::Sequential& net, const ClassifierHyper& hyper, int n_classes) {
  int ch = 3;
  int side = hyper.input_size;
  int stage = 0;
  for (int out_ch : hyper.channels) {
    net.add<nn::Conv2dT<float>>(concat("conv", stage), ch, out_ch, 3, 1, 1);
    net.add<nn::ReluT<float>>();
    net.add<nn::MaxPool2T<float>>();
    ch = out_ch;
    side /= 2;
    ++stage;
  }
  net.add<nn::LinearT<float>>("fc0", ch * side * side, hyper.hidden);
  net.add<nn::ReluT<float>>();
  net.add<nn::LinearT<float>>("fc1", hyper.hidden, n_classes);
}

nlohmann::json hyper_to_json(const ClassifierHyper& h) {
  return {{"input_size", h.input_size}, {"channels", h.channels}, {"hidden", h.hidden},
          {"lr", h.lr},                 {"epochs", h.epochs},     {"batch_size", h.batch_size}};
}

ClassifierHyper hyper_from_json(const nlohmann::json& j) {
  ClassifierHyper h;
  h.input_size = j.at("input_size").get<int>();
  h.channels = j.at("channels").get<std::vector<int>>();
  h.hidden = j.at("hidden").get<int>();
  h.lr = j.at("lr").get<double>();
  h.epochs = j.at("epochs").get<int>();
  h.batch_size = j.at("batch_size").get<int>();
  return h;
}

}  // namespace

ClassifierModel::ClassifierModel(std::vector<std::string> label_set, ClassifierHyper hyper,
                                 uint64_t seed)
    : label_set_(std::move(label_set)), hyper_(std::move(hyper)), seed_(seed) {
  if (label_set_.empty()) raise(ErrorKind::InvalidArgument, "classifier needs a label set");
  if (hyper_.input_size < (1 << hyper_.channels.size()))
    raise(ErrorKind::InvalidArgument, "classifier input_size too small for ",
          hyper_.channels.size(), " pooling stages");
  build_net(net_, hyper_, static_cast<int>(label_set_.size()));
  Rng rng = Rng(seed).fork(0x11a551f1);
  net_.init(rng);
}

nn::Tensor ClassifierModel::prepare(const RgbImage& crop) const {
  if (crop.empty()) raise(ErrorKind::InvalidArgument, "classify: empty crop");
  RgbImage resized = io::resize_rgb(crop, hyper_.input_size, hyper_.input_size);
  nn::Tensor x({3, hyper_.input_size, hyper_.input_size});
  const size_t plane = static_cast<size_t>(hyper_.input_size) * hyper_.input_size;
  for (size_t i = 0; i < plane; ++i) {
    x.data[i] = resized.data[3 * i] / 255.0f;
    x.data[plane + i] = resized.data[3 * i + 1] / 255.0f;
    x.data[2 * plane + i] = resized.data[3 * i + 2] / 255.0f;
  }
  return x;
}

std::vector<float> ClassifierModel::probabilities(const RgbImage& crop) const {
  nn::Tensor x = prepare(crop);
  std::lock_guard<std::mutex> lock(infer_mutex_);
  nn::Tensor logits = net_.forward(x, false);
  return nn::softmax(logits.data);
}

std::pair<std::string, double> ClassifierModel::classify(const RgbImage& crop) const {
  std::vector<float> probs = probabilities(crop);
  size_t best = static_cast<size_t>(
      std::max_element(probs.begin(), probs.end()) - probs.begin());
  return {label_set_[best], static_cast<double>(probs[best])};
}

void ClassifierModel::save(const std::string& path) const {
  Checkpoint ckpt;
  ckpt.header["kind"] = "classifier";
  ckpt.header["label_set"] = label_set_;
  ckpt.header["hyper"] = hyper_to_json(hyper_);
  ckpt.header["seed"] = seed_;
  ckpt.header["train_loss"] = train_loss_history;
  ckpt.header["val_accuracy"] = val_accuracy_history;
  store_params(ckpt, net_.params());
  save_checkpoint(path, ckpt);
}

std::unique_ptr<ClassifierModel> ClassifierModel::load(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.header.value("kind", "") != "classifier")
    raise(ErrorKind::Parse, "'", path, "' is not a classifier checkpoint");
  auto model = std::make_unique<ClassifierModel>(
      ckpt.header.at("label_set").get<std::vector<std::string>>(),
      hyper_from_json(ckpt.header.at("hyper")), ckpt.header.value("seed", 0ULL));
  load_params(ckpt, model->net_.params());
  model->train_loss_history = ckpt.header.value("train_loss", std::vector<double>{});
  model->val_accuracy_history = ckpt.header.value("val_accuracy", std::vector<double>{});
  return model;
}

std::unique_ptr<ClassifierModel> train_classifier(const std::vector<LabeledCrop>& crops,
                                                  const std::vector<std::string>& label_set,
                                                  const ClassifierHyper& hyper, uint64_t seed,
                                                  const std::vector<LabeledCrop>* val) {
  if (crops.empty()) raise(ErrorKind::InvalidArgument, "train_classifier: no crops");
  std::set<std::string> present;
  for (const auto& c : crops) present.insert(c.category);
  for (const auto& label : label_set)
    if (!present.count(label))
      raise(ErrorKind::InvalidArgument, "train_classifier: category '", label,
            "' absent from train split");

  auto model = std::make_unique<ClassifierModel>(label_set, hyper, seed);
  auto index_of = [&](const std::string& category) {
    auto it = std::find(label_set.begin(), label_set.end(), category);
    if (it == label_set.end())
      raise(ErrorKind::InvalidArgument, "train_classifier: unknown category '", category, "'");
    return static_cast<int>(it - label_set.begin());
  };

  std::vector<nn::Tensor> inputs;
  std::vector<int> targets;
  inputs.reserve(crops.size());
  for (const auto& c : crops) {
    inputs.push_back(model->prepare(c.image));
    targets.push_back(index_of(c.category));
  }

  nn::Adam opt(model->net_.params(), hyper.lr);
  Rng shuffle_rng = Rng(seed).fork(0x5affe11e);
  std::vector<size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    size_t pos = 0;
    while (pos < order.size()) {
      const size_t batch_end = std::min(order.size(), pos + hyper.batch_size);
      opt.zero_grad();
      for (size_t i = pos; i < batch_end; ++i) {
        const auto& x = inputs[order[i]];
        const int target = targets[order[i]];
        nn::Tensor logits = model->net_.forward(x, true);
        std::vector<float> probs = nn::softmax(logits.data);
        const double p = std::max(static_cast<double>(probs[target]), 1e-12);
        epoch_loss += -std::log(p);
        nn::Tensor grad(logits.shape);
        for (size_t k = 0; k < probs.size(); ++k)
          grad.data[k] = probs[k] - (static_cast<int>(k) == target ? 1.0f : 0.0f);
        model->net_.backward(grad);
      }
      opt.step(1.0 / static_cast<double>(batch_end - pos));
      pos = batch_end;
    }
    epoch_loss /= static_cast<double>(inputs.size());
    if (!std::isfinite(epoch_loss))
      raise(ErrorKind::Runtime, "train_classifier: non-finite loss at epoch ", epoch);
    model->train_loss_history.push_back(epoch_loss);

    if (val && !val->empty()) {
      int correct = 0;
      for (const auto& c : *val)
        if (model->classify(c.image).first == c.category) ++correct;
      model->val_accuracy_history.push_back(static_cast<double>(correct) /
                                            static_cast<double>(val->size()));
    }
  }
  return model;
}

}  // namespace foodpipe
