#include "core/energymap.hpp"

#include <algorithm>
#include <cmath>

#include "core/checkpoint.hpp"
#include "core/imageio.hpp"

namespace foodpipe {

EnergyMap crop_energy_map(const EnergyMap& map, const BoundingBox& bbox) {
  PixelWindow w = pixel_window(bbox, map.width, map.height);
  EnergyMap out;
  out.width = w.w;
  out.height = w.h;
  out.energy_scale = map.energy_scale;
  out.values = raster::crop(map.values, map.width, map.height, 1, w.x0, w.y0, w.w, w.h);
  return out;
}

double integrate_energy(const EnergyMap& map) {
  double total = 0.0;
  for (float v : map.values) total += static_cast<double>(v);
  return total * map.energy_scale;
}

std::pair<double, double> cgan_losses(double d_real, double d_fake, const EnergyMap& fake_map,
                                      const EnergyMap& real_map, double lambda) {
  if (fake_map.width != real_map.width || fake_map.height != real_map.height)
    raise(ErrorKind::InvalidArgument, "cgan_losses: map shape mismatch ", fake_map.width, "x",
          fake_map.height, " vs ", real_map.width, "x", real_map.height);
  constexpr double kEps = 1e-12;
  d_real = std::clamp(d_real, kEps, 1.0 - kEps);
  d_fake = std::clamp(d_fake, kEps, 1.0 - kEps);

  const double d_loss = -(std::log(d_real) + std::log(1.0 - d_fake));

  double l1 = 0.0;
  for (size_t i = 0; i < fake_map.values.size(); ++i)
    l1 += std::fabs(static_cast<double>(fake_map.values[i]) -
                    static_cast<double>(real_map.values[i]));
  l1 /= static_cast<double>(fake_map.values.size());

  const double g_loss = -std::log(d_fake) + lambda * l1;
  return {d_loss, g_loss};
}

namespace {

constexpr int kDownsampleFactor = 8;

nn::Tensor image_to_tensor(const RgbImage& image) {
  nn::Tensor x({3, image.height, image.width});
  const size_t plane = static_cast<size_t>(image.width) * image.height;
  for (size_t i = 0; i < plane; ++i) {
    x.data[i] = image.data[3 * i] / 255.0f;
    x.data[plane + i] = image.data[3 * i + 1] / 255.0f;
    x.data[2 * plane + i] = image.data[3 * i + 2] / 255.0f;
  }
  return x;
}

// Zero-pads a CHW tensor on the right/bottom to the next multiple of the
// downsampling factor.
nn::Tensor pad_to_multiple(const nn::Tensor& x, int factor, int& pad_w, int& pad_h) {
  const int c = x.shape[0], h = x.shape[1], w = x.shape[2];
  const int th = (h + factor - 1) / factor * factor;
  const int tw = (w + factor - 1) / factor * factor;
  pad_h = th - h;
  pad_w = tw - w;
  if (pad_h == 0 && pad_w == 0) return x;
  nn::Tensor out({c, th, tw});
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) out.at(ci, y, xx) = x.at(ci, y, xx);
  return out;
}

// U-Net style generator with two skip connections; forward keeps the
// intermediates needed to route gradients through both paths.
struct GenNet {
  nn::Conv2dT<float> enc1_conv, enc2_conv, enc3_conv, mid_conv;
  nn::LeakyReluT<float> enc1_act{0.2}, enc2_act{0.2}, enc3_act{0.2};
  nn::ReluT<float> mid_act, dec3_act, dec2_act, dec1_act;
  nn::UpsampleNearest2T<float> dec3_up, dec2_up, dec1_up;
  nn::Conv2dT<float> dec3_conv, dec2_conv, dec1_conv, out_conv;
  nn::DropoutT<float> drop3, drop2;
  nn::SigmoidT<float> out_act;
  int base;

  GenNet(int b, double dropout, Rng* rng)
      : enc1_conv("g.enc1", 3, b, 4, 2, 1),
        enc2_conv("g.enc2", b, 2 * b, 4, 2, 1),
        enc3_conv("g.enc3", 2 * b, 4 * b, 4, 2, 1),
        mid_conv("g.mid", 4 * b, 4 * b, 3, 1, 1),
        dec3_conv("g.dec3", 4 * b, 2 * b, 3, 1, 1),
        dec2_conv("g.dec2", 4 * b, b, 3, 1, 1),
        dec1_conv("g.dec1", 2 * b, b, 3, 1, 1),
        out_conv("g.out", b, 1, 3, 1, 1),
        drop3(dropout, rng),
        drop2(dropout, rng),
        base(b) {}

  std::vector<nn::ParamT<float>*> params() {
    std::vector<nn::ParamT<float>*> out;
    for (auto* conv : {&enc1_conv, &enc2_conv, &enc3_conv, &mid_conv, &dec3_conv, &dec2_conv,
                       &dec1_conv, &out_conv})
      for (auto* p : conv->params()) out.push_back(p);
    return out;
  }

  void init(Rng& rng) {
    for (auto* conv : {&enc1_conv, &enc2_conv, &enc3_conv, &mid_conv, &dec3_conv, &dec2_conv,
                       &dec1_conv, &out_conv})
      conv->init(rng);
  }

  nn::Tensor forward(const nn::Tensor& x, bool training) {
    a1_ = enc1_act.forward(enc1_conv.forward(x, training), training);
    a2_ = enc2_act.forward(enc2_conv.forward(a1_, training), training);
    nn::Tensor a3 = enc3_act.forward(enc3_conv.forward(a2_, training), training);
    nn::Tensor m = mid_act.forward(mid_conv.forward(a3, training), training);
    nn::Tensor u3 =
        dec3_act.forward(dec3_conv.forward(dec3_up.forward(m, training), training), training);
    nn::Tensor c3 = drop3.forward(nn::concat_channels(u3, a2_), training);
    nn::Tensor u2 =
        dec2_act.forward(dec2_conv.forward(dec2_up.forward(c3, training), training), training);
    nn::Tensor c2 = drop2.forward(nn::concat_channels(u2, a1_), training);
    nn::Tensor u1 =
        dec1_act.forward(dec1_conv.forward(dec1_up.forward(c2, training), training), training);
    return out_act.forward(out_conv.forward(u1, training), training);
  }

  void backward(const nn::Tensor& grad_y) {
    nn::Tensor g = out_conv.backward(out_act.backward(grad_y));
    g = dec1_up.backward(dec1_conv.backward(dec1_act.backward(g)));
    g = drop2.backward(g);
    nn::Tensor gu2, ga1_skip;
    nn::split_channels(g, base, gu2, ga1_skip);
    g = dec2_up.backward(dec2_conv.backward(dec2_act.backward(gu2)));
    g = drop3.backward(g);
    nn::Tensor gu3, ga2_skip;
    nn::split_channels(g, 2 * base, gu3, ga2_skip);
    g = dec3_up.backward(dec3_conv.backward(dec3_act.backward(gu3)));
    g = mid_conv.backward(mid_act.backward(g));
    g = enc3_conv.backward(enc3_act.backward(g));
    for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += ga2_skip.data[i];
    g = enc2_conv.backward(enc2_act.backward(g));
    for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += ga1_skip.data[i];
    enc1_conv.backward(enc1_act.backward(g));
  }

private:
  nn::Tensor a1_, a2_;  // skip activations
};

nn::Sequential build_discriminator(int b) {
  nn::Sequential d;
  d.add<nn::Conv2dT<float>>("d.conv0", 4, b, 4, 2, 1);
  d.add<nn::LeakyReluT<float>>(0.2);
  d.add<nn::Conv2dT<float>>("d.conv1", b, 2 * b, 4, 2, 1);
  d.add<nn::LeakyReluT<float>>(0.2);
  d.add<nn::Conv2dT<float>>("d.out", 2 * b, 1, 3, 1, 1);
  return d;
}

nlohmann::json hyper_to_json(const GanHyper& h) {
  return {{"base_channels", h.base_channels}, {"lambda", h.lambda}, {"lr_g", h.lr_g},
          {"lr_d", h.lr_d},                   {"epochs", h.epochs}, {"dropout", h.dropout},
          {"map_value_max", h.map_value_max}};
}

GanHyper hyper_from_json(const nlohmann::json& j) {
  GanHyper h;
  h.base_channels = j.at("base_channels").get<int>();
  h.lambda = j.at("lambda").get<double>();
  h.lr_g = j.at("lr_g").get<double>();
  h.lr_d = j.at("lr_d").get<double>();
  h.epochs = j.at("epochs").get<int>();
  h.dropout = j.at("dropout").get<double>();
  h.map_value_max = j.at("map_value_max").get<double>();
  return h;
}

}  // namespace

struct GeneratorModel::Impl {
  Rng dropout_rng;
  GenNet gen;
  nn::Sequential disc;

  Impl(const GanHyper& hyper, uint64_t seed)
      : dropout_rng(Rng(seed).fork(0xd20b)),
        gen(hyper.base_channels, hyper.dropout, &dropout_rng),
        disc(build_discriminator(hyper.base_channels)) {}
};

GeneratorModel::GeneratorModel(GanHyper hyper, double energy_scale, uint64_t seed)
    : hyper_(std::move(hyper)), energy_scale_(energy_scale), seed_(seed) {
  if (!(hyper_.lambda >= 0)) raise(ErrorKind::InvalidArgument, "gan lambda must be >= 0");
  if (hyper_.base_channels < 2)
    raise(ErrorKind::InvalidArgument, "gan base_channels must be >= 2");
  if (!(hyper_.map_value_max > 0))
    raise(ErrorKind::InvalidArgument, "gan map_value_max must be > 0");
  impl_ = std::make_unique<Impl>(hyper_, seed);
  Rng rng = Rng(seed).fork(0x9a4);
  impl_->gen.init(rng);
  impl_->disc.init(rng);
}

GeneratorModel::~GeneratorModel() = default;

EnergyMap GeneratorModel::generate(const RgbImage& image) const {
  if (image.empty()) raise(ErrorKind::InvalidArgument, "generate_energy_map: empty image");
  std::lock_guard<std::mutex> lock(infer_mutex_);
  nn::Tensor x = image_to_tensor(image);
  int pad_w = 0, pad_h = 0;
  x = pad_to_multiple(x, kDownsampleFactor, pad_w, pad_h);
  nn::Tensor y = impl_->gen.forward(x, false);
  EnergyMap out = EnergyMap::zeros(image.width, image.height, energy_scale_);
  const float scale = static_cast<float>(hyper_.map_value_max);
  for (int yy = 0; yy < image.height; ++yy)
    for (int xx = 0; xx < image.width; ++xx)
      out.at(xx, yy) = std::max(0.0f, y.at(0, yy, xx) * scale);
  return out;
}

void GeneratorModel::save(const std::string& path) const {
  Checkpoint ckpt;
  ckpt.header["kind"] = "energy_gan";
  ckpt.header["hyper"] = hyper_to_json(hyper_);
  ckpt.header["energy_scale"] = energy_scale_;
  ckpt.header["seed"] = seed_;
  nlohmann::json losses = nlohmann::json::array();
  for (const auto& l : loss_history)
    losses.push_back({{"d_loss", l.d_loss}, {"g_adv", l.g_adv}, {"g_l1", l.g_l1}});
  ckpt.header["losses"] = std::move(losses);
  store_params(ckpt, impl_->gen.params());
  store_params(ckpt, impl_->disc.params());
  save_checkpoint(path, ckpt);
}

std::unique_ptr<GeneratorModel> GeneratorModel::load(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.header.value("kind", "") != "energy_gan")
    raise(ErrorKind::Parse, "'", path, "' is not an energy GAN checkpoint");
  auto model = std::make_unique<GeneratorModel>(hyper_from_json(ckpt.header.at("hyper")),
                                                ckpt.header.value("energy_scale", 1.0),
                                                ckpt.header.value("seed", 0ULL));
  load_params(ckpt, model->impl_->gen.params());
  load_params(ckpt, model->impl_->disc.params());
  for (const auto& l : ckpt.header.value("losses", nlohmann::json::array()))
    model->loss_history.push_back({l.value("d_loss", 0.0), l.value("g_adv", 0.0),
                                   l.value("g_l1", 0.0)});
  return model;
}

std::unique_ptr<GeneratorModel> train_energy_gan(const DatasetManifest& manifest,
                                                 const GanHyper& hyper, uint64_t seed) {
  if (!(hyper.lambda >= 0))
    raise(ErrorKind::InvalidArgument, "train_energy_gan: lambda must be >= 0");

  auto train_records = manifest.split_records(SplitTag::Train);
  if (train_records.empty())
    raise(ErrorKind::InvalidArgument, "train_energy_gan: empty train split");

  struct Pair {
    nn::Tensor x;
    nn::Tensor y;  // normalized groundtruth map
  };
  std::vector<Pair> pairs;
  double energy_scale = 0.0;
  const float inv_max = static_cast<float>(1.0 / hyper.map_value_max);
  for (const auto* rec : train_records) {
    if (!rec->energy_map_path)
      raise(ErrorKind::InvalidArgument, "train_energy_gan: record '", rec->image_id,
            "' has no groundtruth energy map");
    if (energy_scale == 0.0)
      energy_scale = rec->energy_scale;
    else if (rec->energy_scale != energy_scale)
      raise(ErrorKind::InvalidArgument, "train_energy_gan: mixed energy_scale values");
    RgbImage img = io::load_rgb_png(manifest.resolve(rec->image_path));
    EnergyMap map = io::load_energy_png(manifest.resolve(*rec->energy_map_path),
                                        rec->energy_scale);
    if (map.width != img.width || map.height != img.height)
      raise(ErrorKind::Validation, "train_energy_gan: record '", rec->image_id,
            "' map/image dimensions differ");
    Pair p;
    p.x = image_to_tensor(img);
    int pw = 0, ph = 0;
    p.x = pad_to_multiple(p.x, kDownsampleFactor, pw, ph);
    nn::Tensor y({1, map.height, map.width});
    for (int yy = 0; yy < map.height; ++yy)
      for (int xx = 0; xx < map.width; ++xx)
        y.at(0, yy, xx) = std::min(1.0f, map.at(xx, yy) * inv_max);
    p.y = pad_to_multiple(y, kDownsampleFactor, pw, ph);
    pairs.push_back(std::move(p));
  }

  auto model = std::make_unique<GeneratorModel>(hyper, energy_scale, seed);
  auto& gen = model->impl_->gen;
  auto& disc = model->impl_->disc;
  nn::AdamT<float> opt_g(gen.params(), hyper.lr_g);
  nn::AdamT<float> opt_d(disc.params(), hyper.lr_d);
  Rng rng = Rng(seed).fork(0x9a42);

  std::vector<size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    rng.shuffle(order);
    GanEpochLosses epoch_losses;
    for (size_t oi : order) {
      const Pair& p = pairs[oi];
      const size_t n_pix = p.y.data.size();

      // Generator forward; the same activations back the generator update.
      nn::Tensor fake = gen.forward(p.x, true);

      // Discriminator update on (x, real) vs (x, fake), fake detached.
      opt_d.zero_grad();
      double d_loss = 0.0;
      {
        nn::Tensor real_in = nn::concat_channels(p.x, p.y);
        nn::Tensor d_out = disc.forward(real_in, true);
        nn::Tensor d_grad(d_out.shape);
        const double n_patch = static_cast<double>(d_out.data.size());
        for (size_t i = 0; i < d_out.data.size(); ++i) {
          d_loss += nn::bce_with_logits(d_out.data[i], 1.0f) / n_patch;
          d_grad.data[i] = static_cast<float>((nn::sigmoid(d_out.data[i]) - 1.0f) / n_patch);
        }
        disc.backward(d_grad);

        nn::Tensor fake_in = nn::concat_channels(p.x, fake);
        d_out = disc.forward(fake_in, true);
        for (size_t i = 0; i < d_out.data.size(); ++i) {
          d_loss += nn::bce_with_logits(d_out.data[i], 0.0f) / n_patch;
          d_grad.data[i] = static_cast<float>(nn::sigmoid(d_out.data[i]) / n_patch);
        }
        disc.backward(d_grad);
        opt_d.step(0.5);
      }

      // Generator update: adversarial gradient through the fresh
      // discriminator plus the weighted L1 term.
      double g_adv = 0.0, g_l1 = 0.0;
      {
        nn::Tensor fake_in = nn::concat_channels(p.x, fake);
        nn::Tensor d_out = disc.forward(fake_in, true);
        nn::Tensor d_grad(d_out.shape);
        const double n_patch = static_cast<double>(d_out.data.size());
        for (size_t i = 0; i < d_out.data.size(); ++i) {
          g_adv += nn::bce_with_logits(d_out.data[i], 1.0f) / n_patch;
          d_grad.data[i] = static_cast<float>((nn::sigmoid(d_out.data[i]) - 1.0f) / n_patch);
        }
        nn::Tensor d_input_grad = disc.backward(d_grad);

        nn::Tensor fake_grad(fake.shape);
        const float lambda_term = static_cast<float>(hyper.lambda / static_cast<double>(n_pix));
        for (size_t i = 0; i < n_pix; ++i) {
          const float diff = fake.data[i] - p.y.data[i];
          g_l1 += std::fabs(diff) / static_cast<double>(n_pix);
          const float sign = diff > 0 ? 1.0f : (diff < 0 ? -1.0f : 0.0f);
          // Channel 3 of the discriminator input is the generated map.
          fake_grad.data[i] =
              d_input_grad.data[3 * n_pix + i] + lambda_term * sign;
        }
        opt_g.zero_grad();
        gen.backward(fake_grad);
        opt_g.step();
      }

      epoch_losses.d_loss += d_loss;
      epoch_losses.g_adv += g_adv;
      epoch_losses.g_l1 += hyper.lambda * g_l1;
    }
    const double inv_n = 1.0 / static_cast<double>(pairs.size());
    epoch_losses.d_loss *= inv_n;
    epoch_losses.g_adv *= inv_n;
    epoch_losses.g_l1 *= inv_n;
    if (!std::isfinite(epoch_losses.d_loss) || !std::isfinite(epoch_losses.g_adv) ||
        !std::isfinite(epoch_losses.g_l1))
      raise(ErrorKind::Runtime, "train_energy_gan: non-finite loss at epoch ", epoch);
    model->loss_history.push_back(epoch_losses);
  }
  // Discriminator gradients from the last generator step must not leak into
  // a future update.
  opt_d.zero_grad();
  return model;
}

}  // namespace foodpipe
