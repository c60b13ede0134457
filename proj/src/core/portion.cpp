#include "core/portion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "core/checkpoint.hpp"
#include "core/imageio.hpp"

namespace foodpipe {

RGBDistributionImage fuse_rgbd(const RgbImage& rgb_crop, const EnergyMap& map_crop,
                               double map_value_max) {
  if (rgb_crop.width != map_crop.width || rgb_crop.height != map_crop.height)
    raise(ErrorKind::InvalidArgument, "fuse_rgbd: dimension mismatch ", rgb_crop.width, "x",
          rgb_crop.height, " vs ", map_crop.width, "x", map_crop.height);
  if (!(map_value_max > 0))
    raise(ErrorKind::InvalidArgument, "fuse_rgbd: map_value_max must be > 0");

  RGBDistributionImage out;
  out.width = rgb_crop.width;
  out.height = rgb_crop.height;
  out.energy_scale = map_crop.energy_scale;
  out.map_value_max = map_value_max;
  const size_t plane = static_cast<size_t>(out.width) * out.height;
  out.planes.resize(4 * plane);
  for (size_t i = 0; i < plane; ++i) {
    out.planes[i] = rgb_crop.data[3 * i];
    out.planes[plane + i] = rgb_crop.data[3 * i + 1];
    out.planes[2 * plane + i] = rgb_crop.data[3 * i + 2];
  }
  const float scale = static_cast<float>(255.0 / map_value_max);
  for (size_t i = 0; i < plane; ++i) out.planes[3 * plane + i] = map_crop.values[i] * scale;
  return out;
}

double l1_loss(double pred_kcal, double gt_kcal) { return std::fabs(gt_kcal - pred_kcal); }

std::string to_string(ChannelMask mask) {
  switch (mask) {
    case ChannelMask::All: return "all";
    case ChannelMask::RgbOnly: return "rgb_only";
    case ChannelMask::DistOnly: return "dist_only";
  }
  return "all";
}

ChannelMask channel_mask_from_string(const std::string& s) {
  if (s == "all") return ChannelMask::All;
  if (s == "rgb_only") return ChannelMask::RgbOnly;
  if (s == "dist_only") return ChannelMask::DistOnly;
  raise(ErrorKind::Parse, "unknown channel mask '", s, "'");
}

namespace {

void build_net(nn::Sequential& net, const RegressorHyper& hyper) {
  int ch = 4;
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
  net.add<nn::LinearT<float>>("fc1", hyper.hidden, 1);
}

nlohmann::json hyper_to_json(const RegressorHyper& h) {
  return {{"input_size", h.input_size}, {"channels", h.channels},
          {"hidden", h.hidden},         {"lr", h.lr},
          {"epochs", h.epochs},         {"batch_size", h.batch_size},
          {"mask", to_string(h.mask)}};
}

RegressorHyper hyper_from_json(const nlohmann::json& j) {
  RegressorHyper h;
  h.input_size = j.at("input_size").get<int>();
  h.channels = j.at("channels").get<std::vector<int>>();
  h.hidden = j.at("hidden").get<int>();
  h.lr = j.at("lr").get<double>();
  h.epochs = j.at("epochs").get<int>();
  h.batch_size = j.at("batch_size").get<int>();
  h.mask = channel_mask_from_string(j.value("mask", "all"));
  return h;
}

}  // namespace

RegressorModel::RegressorModel(RegressorHyper hyper, double kcal_norm, uint64_t seed)
    : hyper_(std::move(hyper)), kcal_norm_(kcal_norm > 0 ? kcal_norm : 1.0), seed_(seed) {
  if (hyper_.input_size < (1 << hyper_.channels.size()))
    raise(ErrorKind::InvalidArgument, "regressor input_size too small for ",
          hyper_.channels.size(), " pooling stages");
  build_net(net_, hyper_);
  Rng rng = Rng(seed).fork(0x4e94e5504);
  net_.init(rng);
}

nn::Tensor RegressorModel::prepare(const RGBDistributionImage& input) const {
  if (!input.valid())
    raise(ErrorKind::InvalidArgument, "estimate_portion: input must have 4 aligned channels");
  const int S = hyper_.input_size;
  nn::Tensor x({4, S, S});
  const size_t in_plane = static_cast<size_t>(input.width) * input.height;
  // The distribution channel is resampled conservatively (values rescaled by
  // the area ratio) so a crop's total energy survives the resize; RGB
  // channels resize plainly.
  const float area_ratio = static_cast<float>(static_cast<double>(input.width) *
                                              input.height / (static_cast<double>(S) * S));
  for (int c = 0; c < 4; ++c) {
    EnergyMap plane;
    plane.width = input.width;
    plane.height = input.height;
    plane.energy_scale = 1.0;
    plane.values.assign(input.planes.begin() + c * in_plane,
                        input.planes.begin() + (c + 1) * in_plane);
    EnergyMap resized = io::resize_energy(plane, S, S);
    const float post = (c == 3) ? area_ratio : 1.0f;
    for (int y = 0; y < S; ++y)
      for (int xx = 0; xx < S; ++xx)
        x.at(c, y, xx) = resized.at(xx, y) * post / 255.0f;
  }
  switch (hyper_.mask) {
    case ChannelMask::All: break;
    case ChannelMask::RgbOnly:
      for (int y = 0; y < S; ++y)
        for (int xx = 0; xx < S; ++xx) x.at(3, y, xx) = 0.0f;
      break;
    case ChannelMask::DistOnly:
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < S; ++y)
          for (int xx = 0; xx < S; ++xx) x.at(c, y, xx) = 0.0f;
      break;
  }
  return x;
}

double RegressorModel::estimate(const RGBDistributionImage& input) const {
  nn::Tensor x = prepare(input);
  std::lock_guard<std::mutex> lock(infer_mutex_);
  nn::Tensor out = net_.forward(x, false);
  double kcal = static_cast<double>(out.data[0]) * kcal_norm_;
  if (kcal < 0) {
    ++clamped_;
    kcal = 0;
  }
  return kcal;
}

void RegressorModel::save(const std::string& path) const {
  Checkpoint ckpt;
  ckpt.header["kind"] = "regressor";
  ckpt.header["hyper"] = hyper_to_json(hyper_);
  ckpt.header["kcal_norm"] = kcal_norm_;
  ckpt.header["seed"] = seed_;
  ckpt.header["train_mae"] = train_mae_history;
  ckpt.header["val_mae"] = val_mae_history;
  store_params(ckpt, net_.params());
  save_checkpoint(path, ckpt);
}

std::unique_ptr<RegressorModel> RegressorModel::load(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.header.value("kind", "") != "regressor")
    raise(ErrorKind::Parse, "'", path, "' is not a regressor checkpoint");
  auto model = std::make_unique<RegressorModel>(hyper_from_json(ckpt.header.at("hyper")),
                                                ckpt.header.value("kcal_norm", 1.0),
                                                ckpt.header.value("seed", 0ULL));
  load_params(ckpt, model->net_.params());
  model->train_mae_history = ckpt.header.value("train_mae", std::vector<double>{});
  model->val_mae_history = ckpt.header.value("val_mae", std::vector<double>{});
  return model;
}

std::unique_ptr<RegressorModel> train_regressor(const std::vector<PortionPair>& pairs,
                                                const RegressorHyper& hyper, uint64_t seed,
                                                const std::vector<PortionPair>* val) {
  if (pairs.empty()) raise(ErrorKind::InvalidArgument, "train_regressor: empty pairs");
  double mean_kcal = 0.0;
  for (const auto& p : pairs) {
    if (!(p.kcal >= 0))
      raise(ErrorKind::InvalidArgument, "train_regressor: kcal must be >= 0");
    mean_kcal += p.kcal;
  }
  mean_kcal /= static_cast<double>(pairs.size());

  auto model = std::make_unique<RegressorModel>(hyper, mean_kcal, seed);
  std::vector<nn::Tensor> inputs;
  std::vector<float> targets;
  inputs.reserve(pairs.size());
  for (const auto& p : pairs) {
    inputs.push_back(model->prepare(p.input));
    targets.push_back(static_cast<float>(p.kcal / model->kcal_norm()));
  }

  nn::Adam opt(model->net_.params(), hyper.lr);
  Rng rng = Rng(seed).fork(0x4e9);
  std::vector<size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_abs = 0.0;
    size_t pos = 0;
    while (pos < order.size()) {
      const size_t batch_end = std::min(order.size(), pos + hyper.batch_size);
      opt.zero_grad();
      for (size_t i = pos; i < batch_end; ++i) {
        nn::Tensor out = model->net_.forward(inputs[order[i]], true);
        const float diff = out.data[0] - targets[order[i]];
        epoch_abs += std::fabs(static_cast<double>(diff)) * model->kcal_norm();
        nn::Tensor grad(out.shape);
        grad.data[0] = diff > 0 ? 1.0f : (diff < 0 ? -1.0f : 0.0f);
        model->net_.backward(grad);
      }
      opt.step(1.0 / static_cast<double>(batch_end - pos));
      pos = batch_end;
    }
    const double train_mae = epoch_abs / static_cast<double>(inputs.size());
    if (!std::isfinite(train_mae))
      raise(ErrorKind::Runtime, "train_regressor: non-finite loss at epoch ", epoch);
    model->train_mae_history.push_back(train_mae);

    if (val && !val->empty()) {
      double val_abs = 0.0;
      for (const auto& p : *val) val_abs += l1_loss(model->estimate(p.input), p.kcal);
      model->val_mae_history.push_back(val_abs / static_cast<double>(val->size()));
    }
  }
  return model;
}

}  // namespace foodpipe
