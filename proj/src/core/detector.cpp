#include "core/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "core/checkpoint.hpp"
#include "core/dataset.hpp"
#include "core/imageio.hpp"
#include "core/metrics.hpp"

namespace foodpipe {

std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0))
    raise(ErrorKind::InvalidArgument, "nms: iou_threshold must be in (0,1], got ",
          iou_threshold);
  std::stable_sort(detections.begin(), detections.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  std::vector<Detection> kept;
  for (const auto& d : detections) {
    bool suppressed = false;
    for (const auto& k : kept)
      if (iou(d.bbox, k.bbox) > iou_threshold) {
        suppressed = true;
        break;
      }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

namespace {

struct Anchor {
  double cx, cy, w, h;
  BoundingBox box() const { return {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2}; }
};

struct Deltas {
  float dx = 0, dy = 0, dw = 0, dh = 0;
};

BoundingBox decode_box(const Anchor& a, const Deltas& d) {
  const double dw = std::clamp(static_cast<double>(d.dw), -4.0, 4.0);
  const double dh = std::clamp(static_cast<double>(d.dh), -4.0, 4.0);
  const double cx = a.cx + d.dx * a.w;
  const double cy = a.cy + d.dy * a.h;
  const double w = a.w * std::exp(dw);
  const double h = a.h * std::exp(dh);
  return {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
}

Deltas encode_box(const Anchor& a, const BoundingBox& g) {
  Deltas d;
  const double gcx = (g.x1 + g.x2) / 2, gcy = (g.y1 + g.y2) / 2;
  d.dx = static_cast<float>((gcx - a.cx) / a.w);
  d.dy = static_cast<float>((gcy - a.cy) / a.h);
  d.dw = static_cast<float>(std::log(g.width() / a.w));
  d.dh = static_cast<float>(std::log(g.height() / a.h));
  return d;
}

Anchor as_anchor(const BoundingBox& b) {
  return {(b.x1 + b.x2) / 2, (b.y1 + b.y2) / 2, b.width(), b.height()};
}

BoundingBox clip_box(BoundingBox b, double w, double h) {
  b.x1 = std::clamp(b.x1, 0.0, w);
  b.y1 = std::clamp(b.y1, 0.0, h);
  b.x2 = std::clamp(b.x2, 0.0, w);
  b.y2 = std::clamp(b.y2, 0.0, h);
  return b;
}

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

}  // namespace

struct DetectorModel::Impl {
  nn::Sequential backbone;
  nn::Sequential rpn_head;   // shared 3x3 conv + 1x1 -> A*(1+4) maps
  nn::Sequential roi_head;   // two linears -> (1+4)
  int stride = 1;
  int num_anchors = 0;
  int feat_channels = 0;

  explicit Impl(const DetectorHyper& hyper) {
    int ch = 3;
    int stage = 0;
    stride = 1;
    for (int out_ch : hyper.backbone_channels) {
      backbone.add<nn::Conv2dT<float>>(concat("backbone.conv", stage), ch, out_ch, 3, 1, 1);
      backbone.add<nn::ReluT<float>>();
      backbone.add<nn::MaxPool2T<float>>();
      ch = out_ch;
      stride *= 2;
      ++stage;
    }
    feat_channels = ch;
    num_anchors =
        static_cast<int>(hyper.anchor_scales.size() * hyper.anchor_ratios.size());
    rpn_head.add<nn::Conv2dT<float>>("rpn.conv", ch, ch, 3, 1, 1);
    rpn_head.add<nn::ReluT<float>>();
    rpn_head.add<nn::Conv2dT<float>>("rpn.out", ch, num_anchors * 5, 1, 1, 0);
    const int roi_features = hyper.roi_grid * hyper.roi_grid * ch;
    roi_head.add<nn::LinearT<float>>("roi.fc0", roi_features, hyper.head_hidden);
    roi_head.add<nn::ReluT<float>>();
    roi_head.add<nn::LinearT<float>>("roi.out", hyper.head_hidden, 5);
  }

  std::vector<nn::ParamT<float>*> params() {
    std::vector<nn::ParamT<float>*> out = backbone.params();
    for (auto* p : rpn_head.params()) out.push_back(p);
    for (auto* p : roi_head.params()) out.push_back(p);
    return out;
  }

  void init(Rng& rng) {
    backbone.init(rng);
    rpn_head.init(rng);
    roi_head.init(rng);
  }

  std::vector<Anchor> make_anchors(const DetectorHyper& hyper, int feat_h, int feat_w) const {
    std::vector<Anchor> anchors;
    anchors.reserve(static_cast<size_t>(feat_h) * feat_w * num_anchors);
    for (int y = 0; y < feat_h; ++y)
      for (int x = 0; x < feat_w; ++x)
        for (double scale : hyper.anchor_scales)
          for (double ratio : hyper.anchor_ratios) {
            Anchor a;
            a.cx = (x + 0.5) * stride;
            a.cy = (y + 0.5) * stride;
            a.w = scale * std::sqrt(ratio);
            a.h = scale / std::sqrt(ratio);
            anchors.push_back(a);
          }
    return anchors;
  }

  // Anchor index -> (channel base, y, x) in the RPN output map.
  static Deltas read_deltas(const nn::Tensor& rpn_out, int base_channel, int y, int x) {
    Deltas d;
    d.dx = rpn_out.at(base_channel + 1, y, x);
    d.dy = rpn_out.at(base_channel + 2, y, x);
    d.dw = rpn_out.at(base_channel + 3, y, x);
    d.dh = rpn_out.at(base_channel + 4, y, x);
    return d;
  }

  struct Proposals {
    std::vector<BoundingBox> boxes;
    std::vector<double> scores;
  };

  Proposals propose(const DetectorHyper& hyper, const nn::Tensor& rpn_out,
                    const std::vector<Anchor>& anchors, double img_w, double img_h) const {
    const int feat_h = rpn_out.shape[1], feat_w = rpn_out.shape[2];
    std::vector<Detection> scored;
    scored.reserve(anchors.size());
    size_t ai = 0;
    for (int y = 0; y < feat_h; ++y)
      for (int x = 0; x < feat_w; ++x)
        for (int a = 0; a < num_anchors; ++a, ++ai) {
          const int base = a * 5;
          const double score = nn::sigmoid(rpn_out.at(base, y, x));
          BoundingBox box =
              clip_box(decode_box(anchors[ai], read_deltas(rpn_out, base, y, x)), img_w, img_h);
          if (box.width() < 2.0 || box.height() < 2.0) continue;
          scored.push_back({box, score});
        }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });
    if (static_cast<int>(scored.size()) > hyper.pre_nms_topk)
      scored.resize(static_cast<size_t>(hyper.pre_nms_topk));
    scored = nms(std::move(scored), hyper.proposal_nms_iou);
    if (static_cast<int>(scored.size()) > hyper.post_nms_topk)
      scored.resize(static_cast<size_t>(hyper.post_nms_topk));
    Proposals out;
    for (const auto& d : scored) {
      out.boxes.push_back(d.bbox);
      out.scores.push_back(d.score);
    }
    return out;
  }
};

DetectorModel::DetectorModel(DetectorHyper hyper, uint64_t seed)
    : hyper_(std::move(hyper)), seed_(seed) {
  if (!(hyper_.score_threshold > 0 && hyper_.score_threshold < 1))
    raise(ErrorKind::InvalidArgument, "detector score_threshold must be in (0,1)");
  if (!(hyper_.nms_iou_threshold > 0 && hyper_.nms_iou_threshold < 1))
    raise(ErrorKind::InvalidArgument, "detector nms_iou_threshold must be in (0,1)");
  if (hyper_.backbone_channels.empty())
    raise(ErrorKind::InvalidArgument, "detector needs at least one backbone stage");
  impl_ = std::make_unique<Impl>(hyper_);
  Rng rng = Rng(seed).fork(0xde7ec7);
  impl_->init(rng);
}

std::vector<Detection> DetectorModel::detect(const RgbImage& image) const {
  if (image.empty()) raise(ErrorKind::InvalidArgument, "detect: empty image");
  if (image.width < hyper_.min_input || image.height < hyper_.min_input)
    raise(ErrorKind::InvalidArgument, "detect: image ", image.width, "x", image.height,
          " smaller than minimum input ", hyper_.min_input);

  std::lock_guard<std::mutex> lock(infer_mutex_);
  nn::Tensor x = image_to_tensor(image);
  nn::Tensor feat = impl_->backbone.forward(x, false);
  nn::Tensor rpn_out = impl_->rpn_head.forward(feat, false);
  auto anchors = impl_->make_anchors(hyper_, feat.shape[1], feat.shape[2]);
  auto proposals = impl_->propose(hyper_, rpn_out, anchors, image.width, image.height);

  std::vector<Detection> detections;
  for (size_t i = 0; i < proposals.boxes.size(); ++i) {
    const BoundingBox& p = proposals.boxes[i];
    nn::Tensor roi = nn::roi_align(feat, p.x1 / impl_->stride, p.y1 / impl_->stride,
                                   p.x2 / impl_->stride, p.y2 / impl_->stride, hyper_.roi_grid);
    nn::Tensor head_out = impl_->roi_head.forward(roi, false);
    const double score = nn::sigmoid(head_out.data[0]);
    if (score < hyper_.score_threshold) continue;
    Deltas d{head_out.data[1], head_out.data[2], head_out.data[3], head_out.data[4]};
    BoundingBox refined = clip_box(decode_box(as_anchor(p), d), image.width, image.height);
    if (refined.width() < 1.0 || refined.height() < 1.0) continue;
    detections.push_back({refined, score});
  }
  detections = nms(std::move(detections), hyper_.nms_iou_threshold);
  std::stable_sort(detections.begin(), detections.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  return detections;
}

namespace {

nlohmann::json hyper_to_json(const DetectorHyper& h) {
  return {{"backbone_channels", h.backbone_channels},
          {"anchor_scales", h.anchor_scales},
          {"anchor_ratios", h.anchor_ratios},
          {"score_threshold", h.score_threshold},
          {"nms_iou_threshold", h.nms_iou_threshold},
          {"lr", h.lr},
          {"epochs", h.epochs},
          {"batch_images", h.batch_images},
          {"rpn_batch", h.rpn_batch},
          {"rpn_positives", h.rpn_positives},
          {"roi_batch", h.roi_batch},
          {"roi_positives", h.roi_positives},
          {"pre_nms_topk", h.pre_nms_topk},
          {"post_nms_topk", h.post_nms_topk},
          {"proposal_nms_iou", h.proposal_nms_iou},
          {"roi_grid", h.roi_grid},
          {"head_hidden", h.head_hidden},
          {"min_input", h.min_input}};
}

DetectorHyper hyper_from_json(const nlohmann::json& j) {
  DetectorHyper h;
  h.backbone_channels = j.at("backbone_channels").get<std::vector<int>>();
  h.anchor_scales = j.at("anchor_scales").get<std::vector<double>>();
  h.anchor_ratios = j.at("anchor_ratios").get<std::vector<double>>();
  h.score_threshold = j.at("score_threshold").get<double>();
  h.nms_iou_threshold = j.at("nms_iou_threshold").get<double>();
  h.lr = j.at("lr").get<double>();
  h.epochs = j.at("epochs").get<int>();
  h.batch_images = j.at("batch_images").get<int>();
  h.rpn_batch = j.at("rpn_batch").get<int>();
  h.rpn_positives = j.at("rpn_positives").get<int>();
  h.roi_batch = j.at("roi_batch").get<int>();
  h.roi_positives = j.at("roi_positives").get<int>();
  h.pre_nms_topk = j.at("pre_nms_topk").get<int>();
  h.post_nms_topk = j.at("post_nms_topk").get<int>();
  h.proposal_nms_iou = j.at("proposal_nms_iou").get<double>();
  h.roi_grid = j.at("roi_grid").get<int>();
  h.head_hidden = j.at("head_hidden").get<int>();
  h.min_input = j.at("min_input").get<int>();
  return h;
}

}  // namespace

void DetectorModel::save(const std::string& path) const {
  Checkpoint ckpt;
  ckpt.header["kind"] = "detector";
  ckpt.header["hyper"] = hyper_to_json(hyper_);
  ckpt.header["seed"] = seed_;
  ckpt.header["train_loss"] = train_loss_history;
  ckpt.header["final_val_loss"] = final_val_loss;
  store_params(ckpt, impl_->params());
  save_checkpoint(path, ckpt);
}

std::unique_ptr<DetectorModel> DetectorModel::load(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.header.value("kind", "") != "detector")
    raise(ErrorKind::Parse, "'", path, "' is not a detector checkpoint");
  auto model = std::make_unique<DetectorModel>(hyper_from_json(ckpt.header.at("hyper")),
                                               ckpt.header.value("seed", 0ULL));
  load_params(ckpt, model->impl_->params());
  model->train_loss_history = ckpt.header.value("train_loss", std::vector<double>{});
  model->final_val_loss = ckpt.header.value("final_val_loss", 0.0);
  return model;
}

namespace {

struct TrainImage {
  nn::Tensor input;
  std::vector<BoundingBox> gt_boxes;
  double width = 0, height = 0;
};

struct SampledTargets {
  std::vector<int> indices;      // into the anchor/proposal list
  std::vector<float> labels;     // 1 foreground, 0 background
  std::vector<Deltas> deltas;    // valid where label == 1
  int positives = 0;
};

// IoU-based assignment shared by both stages: positives above pos_iou (plus
// the best anchor per groundtruth when force_best), negatives below neg_iou.
SampledTargets assign_and_sample(const std::vector<BoundingBox>& candidates,
                                 const std::vector<BoundingBox>& gts, double pos_iou,
                                 double neg_iou, int max_pos, int batch, bool force_best,
                                 Rng& rng) {
  const size_t n = candidates.size();
  std::vector<double> best_iou(n, 0.0);
  std::vector<int> best_gt(n, -1);
  for (size_t i = 0; i < n; ++i) {
    for (size_t g = 0; g < gts.size(); ++g) {
      const double v = iou(candidates[i], gts[g]);
      if (v > best_iou[i]) {
        best_iou[i] = v;
        best_gt[i] = static_cast<int>(g);
      }
    }
  }

  std::vector<char> is_pos(n, 0), is_neg(n, 0);
  for (size_t i = 0; i < n; ++i) {
    if (best_gt[i] >= 0 && best_iou[i] >= pos_iou)
      is_pos[i] = 1;
    else if (best_iou[i] < neg_iou)
      is_neg[i] = 1;
  }
  if (force_best) {
    for (size_t g = 0; g < gts.size(); ++g) {
      double top = 0.0;
      int top_i = -1;
      for (size_t i = 0; i < n; ++i) {
        const double v = iou(candidates[i], gts[g]);
        if (v > top) {
          top = v;
          top_i = static_cast<int>(i);
        }
      }
      if (top_i >= 0) {
        is_pos[static_cast<size_t>(top_i)] = 1;
        is_neg[static_cast<size_t>(top_i)] = 0;
        best_gt[static_cast<size_t>(top_i)] = static_cast<int>(g);
      }
    }
  }

  std::vector<int> pos_pool, neg_pool;
  for (size_t i = 0; i < n; ++i) {
    if (is_pos[i])
      pos_pool.push_back(static_cast<int>(i));
    else if (is_neg[i])
      neg_pool.push_back(static_cast<int>(i));
  }
  rng.shuffle(pos_pool);
  rng.shuffle(neg_pool);
  if (static_cast<int>(pos_pool.size()) > max_pos) pos_pool.resize(static_cast<size_t>(max_pos));
  const int want_neg = batch - static_cast<int>(pos_pool.size());
  if (static_cast<int>(neg_pool.size()) > want_neg)
    neg_pool.resize(static_cast<size_t>(std::max(0, want_neg)));

  SampledTargets out;
  out.positives = static_cast<int>(pos_pool.size());
  for (int i : pos_pool) {
    out.indices.push_back(i);
    out.labels.push_back(1.0f);
    out.deltas.push_back(encode_box(as_anchor(candidates[static_cast<size_t>(i)]),
                                    gts[static_cast<size_t>(best_gt[static_cast<size_t>(i)])]));
  }
  for (int i : neg_pool) {
    out.indices.push_back(i);
    out.labels.push_back(0.0f);
    out.deltas.push_back({});
  }
  return out;
}

}  // namespace

std::unique_ptr<DetectorModel> train_detector(const DatasetManifest& manifest,
                                              const DetectorHyper& hyper, uint64_t seed) {
  auto load_split = [&](SplitTag tag) {
    std::vector<TrainImage> out;
    for (const auto* rec : manifest.split_records(tag)) {
      TrainImage ti;
      RgbImage img = io::load_rgb_png(manifest.resolve(rec->image_path));
      ti.input = image_to_tensor(img);
      ti.width = img.width;
      ti.height = img.height;
      for (const auto& ann : rec->annotations) ti.gt_boxes.push_back(ann.bbox);
      out.push_back(std::move(ti));
    }
    return out;
  };

  std::vector<TrainImage> train = load_split(SplitTag::Train);
  if (train.empty()) raise(ErrorKind::InvalidArgument, "train_detector: empty train split");
  std::vector<TrainImage> val = load_split(SplitTag::Val);

  auto model = std::make_unique<DetectorModel>(hyper, seed);
  auto& impl = *model->impl_;
  nn::Adam opt(impl.params(), hyper.lr);
  Rng rng = Rng(seed).fork(0xbb0cce5);

  // Runs one image forward/backward (backward only when training) and returns
  // its combined two-stage loss.
  auto run_image = [&](const TrainImage& ti, Rng& sample_rng, bool training) -> double {
    nn::Tensor feat = impl.backbone.forward(ti.input, training);
    nn::Tensor rpn_out = impl.rpn_head.forward(feat, training);
    const int feat_h = feat.shape[1], feat_w = feat.shape[2];
    auto anchors = impl.make_anchors(hyper, feat_h, feat_w);

    std::vector<BoundingBox> anchor_boxes;
    anchor_boxes.reserve(anchors.size());
    for (const auto& a : anchors) anchor_boxes.push_back(a.box());

    SampledTargets rpn_targets =
        assign_and_sample(anchor_boxes, ti.gt_boxes, 0.5, 0.3, hyper.rpn_positives,
                          hyper.rpn_batch, true, sample_rng);

    double loss = 0.0;
    nn::Tensor rpn_grad(rpn_out.shape);
    const double n_sampled = std::max<size_t>(1, rpn_targets.indices.size());
    const double n_pos = std::max(1, rpn_targets.positives);
    for (size_t k = 0; k < rpn_targets.indices.size(); ++k) {
      const int idx = rpn_targets.indices[k];
      const int cell = idx / impl.num_anchors;
      const int a = idx % impl.num_anchors;
      const int y = cell / feat_w;
      const int x = cell % feat_w;
      const int base = a * 5;
      const float logit = rpn_out.at(base, y, x);
      const float label = rpn_targets.labels[k];
      loss += nn::bce_with_logits(logit, label) / n_sampled;
      rpn_grad.at(base, y, x) += static_cast<float>((nn::sigmoid(logit) - label) / n_sampled);
      if (label > 0.5f) {
        const Deltas target = rpn_targets.deltas[k];
        const float pred[4] = {rpn_out.at(base + 1, y, x), rpn_out.at(base + 2, y, x),
                               rpn_out.at(base + 3, y, x), rpn_out.at(base + 4, y, x)};
        const float tgt[4] = {target.dx, target.dy, target.dw, target.dh};
        for (int c = 0; c < 4; ++c) {
          loss += nn::smooth_l1(pred[c] - tgt[c]) / n_pos;
          rpn_grad.at(base + 1 + c, y, x) +=
              static_cast<float>(nn::smooth_l1_grad(pred[c] - tgt[c]) / n_pos);
        }
      }
    }

    // Stage 2: score/refine proposals (plus groundtruth boxes so positives
    // always exist while the RPN is still poor).
    auto proposals = impl.propose(hyper, rpn_out, anchors, ti.width, ti.height);
    std::vector<BoundingBox> roi_boxes = proposals.boxes;
    if (training)
      for (const auto& g : ti.gt_boxes) roi_boxes.push_back(g);

    nn::Tensor feat_grad(feat.shape);
    if (!roi_boxes.empty()) {
      SampledTargets roi_targets =
          assign_and_sample(roi_boxes, ti.gt_boxes, 0.5, 0.5, hyper.roi_positives,
                            hyper.roi_batch, false, sample_rng);
      const double rn_sampled = std::max<size_t>(1, roi_targets.indices.size());
      const double rn_pos = std::max(1, roi_targets.positives);
      for (size_t k = 0; k < roi_targets.indices.size(); ++k) {
        const BoundingBox& p = roi_boxes[static_cast<size_t>(roi_targets.indices[k])];
        if (p.width() < 1e-3 || p.height() < 1e-3) continue;
        nn::Tensor roi = nn::roi_align(feat, p.x1 / impl.stride, p.y1 / impl.stride,
                                       p.x2 / impl.stride, p.y2 / impl.stride, hyper.roi_grid);
        nn::Tensor head_out = impl.roi_head.forward(roi, training);
        const float label = roi_targets.labels[k];
        const float logit = head_out.data[0];
        loss += nn::bce_with_logits(logit, label) / rn_sampled;
        nn::Tensor head_grad(head_out.shape);
        head_grad.data[0] = static_cast<float>((nn::sigmoid(logit) - label) / rn_sampled);
        if (label > 0.5f) {
          const Deltas target = roi_targets.deltas[k];
          const float tgt[4] = {target.dx, target.dy, target.dw, target.dh};
          for (int c = 0; c < 4; ++c) {
            loss += nn::smooth_l1(head_out.data[1 + c] - tgt[c]) / rn_pos;
            head_grad.data[1 + c] =
                static_cast<float>(nn::smooth_l1_grad(head_out.data[1 + c] - tgt[c]) / rn_pos);
          }
        }
        if (training) {
          nn::Tensor roi_grad = impl.roi_head.backward(head_grad);
          nn::roi_align_backward(roi_grad, p.x1 / impl.stride, p.y1 / impl.stride,
                                 p.x2 / impl.stride, p.y2 / impl.stride, hyper.roi_grid,
                                 feat_grad);
        }
      }
    }

    if (training) {
      nn::Tensor rpn_feat_grad = impl.rpn_head.backward(rpn_grad);
      for (size_t i = 0; i < feat_grad.data.size(); ++i)
        feat_grad.data[i] += rpn_feat_grad.data[i];
      impl.backbone.backward(feat_grad);
    }
    return loss;
  };

  std::vector<size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    size_t pos = 0;
    while (pos < order.size()) {
      const size_t batch_end = std::min(order.size(), pos + hyper.batch_images);
      opt.zero_grad();
      for (size_t i = pos; i < batch_end; ++i) {
        Rng sample_rng = rng.fork(epoch * 1000003ULL + order[i]);
        epoch_loss += run_image(train[order[i]], sample_rng, true);
      }
      opt.step(1.0 / static_cast<double>(batch_end - pos));
      pos = batch_end;
    }
    epoch_loss /= static_cast<double>(train.size());
    if (!std::isfinite(epoch_loss))
      raise(ErrorKind::Runtime, "train_detector: non-finite loss at epoch ", epoch);
    model->train_loss_history.push_back(epoch_loss);
  }

  if (!val.empty()) {
    double val_loss = 0.0;
    for (size_t i = 0; i < val.size(); ++i) {
      Rng sample_rng = Rng(seed).fork(0xa11da7a + i);
      val_loss += run_image(val[i], sample_rng, false);
    }
    model->final_val_loss = val_loss / static_cast<double>(val.size());
  } else if (!model->train_loss_history.empty()) {
    model->final_val_loss = model->train_loss_history.back();
  }
  return model;
}

}  // namespace foodpipe
