#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "core/common.hpp"

// Minimal CPU training framework: CHW tensors, explicit forward/backward
// layers, im2col + GEMM convolutions, Adam. Single sample per pass; batches
// accumulate gradients across consecutive forward/backward calls.
namespace foodpipe::nn {

template <typename S>
struct TensorT {
  std::vector<int> shape;
  std::vector<S> data;

  TensorT() = default;
  explicit TensorT(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), S(0));
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }
  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  bool empty() const { return data.empty(); }
  void fill(S v) { std::fill(data.begin(), data.end(), v); }
  void zero() { fill(S(0)); }

  int dim(size_t i) const { return shape[i]; }

  // CHW accessor.
  S& at(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
  }
  S at(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
  }
};

using Tensor = TensorT<float>;

template <typename S>
struct ParamT {
  std::string name;
  TensorT<S> value;
  TensorT<S> grad;

  void init_shape(std::vector<int> shape) {
    value = TensorT<S>(shape);
    grad = TensorT<S>(std::move(shape));
  }
};

template <typename S>
using MatrixS = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapMat = Eigen::Map<MatrixS<S>>;
template <typename S>
using ConstMapMat = Eigen::Map<const MatrixS<S>>;

template <typename S>
class LayerT {
public:
  virtual ~LayerT() = default;
  virtual TensorT<S> forward(const TensorT<S>& x, bool training) = 0;
  virtual TensorT<S> backward(const TensorT<S>& grad_out) = 0;
  virtual std::vector<ParamT<S>*> params() { return {}; }
  virtual void init(Rng&) {}
};

// ---------------------------------------------------------------------------
// Convolution

template <typename S>
class Conv2dT : public LayerT<S> {
public:
  Conv2dT(std::string name, int in_ch, int out_ch, int kernel, int stride, int pad)
      : in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), stride_(stride), pad_(pad) {
    weight_.name = name + ".weight";
    weight_.init_shape({out_ch, in_ch * kernel * kernel});
    bias_.name = name + ".bias";
    bias_.init_shape({out_ch});
  }

  void init(Rng& rng) override {
    const double stddev = std::sqrt(2.0 / (in_ch_ * kernel_ * kernel_));
    for (auto& w : weight_.value.data) w = static_cast<S>(rng.normal(0.0, stddev));
    bias_.value.zero();
  }

  TensorT<S> forward(const TensorT<S>& x, bool) override {
    in_h_ = x.shape[1];
    in_w_ = x.shape[2];
    out_h_ = (in_h_ + 2 * pad_ - kernel_) / stride_ + 1;
    out_w_ = (in_w_ + 2 * pad_ - kernel_) / stride_ + 1;
    if (x.shape[0] != in_ch_)
      raise(ErrorKind::InvalidArgument, weight_.name, ": expected ", in_ch_, " channels, got ",
            x.shape[0]);
    if (out_h_ < 1 || out_w_ < 1)
      raise(ErrorKind::InvalidArgument, weight_.name, ": input ", in_w_, "x", in_h_,
            " too small for kernel");

    im2col(x);
    TensorT<S> out({out_ch_, out_h_, out_w_});
    const int64_t cols = static_cast<int64_t>(out_h_) * out_w_;
    const int64_t rows = static_cast<int64_t>(in_ch_) * kernel_ * kernel_;
    ConstMapMat<S> w(weight_.value.data.data(), out_ch_, rows);
    ConstMapMat<S> c(cols_.data(), rows, cols);
    MapMat<S> o(out.data.data(), out_ch_, cols);
    o.noalias() = w * c;
    for (int oc = 0; oc < out_ch_; ++oc) o.row(oc).array() += bias_.value.data[oc];
    return out;
  }

  TensorT<S> backward(const TensorT<S>& grad_out) override {
    const int64_t cols = static_cast<int64_t>(out_h_) * out_w_;
    const int64_t rows = static_cast<int64_t>(in_ch_) * kernel_ * kernel_;
    ConstMapMat<S> g(grad_out.data.data(), out_ch_, cols);
    ConstMapMat<S> c(cols_.data(), rows, cols);
    MapMat<S> dw(weight_.grad.data.data(), out_ch_, rows);
    dw.noalias() += g * c.transpose();
    for (int oc = 0; oc < out_ch_; ++oc) bias_.grad.data[oc] += g.row(oc).sum();

    dcols_.assign(static_cast<size_t>(rows) * cols, S(0));
    ConstMapMat<S> w(weight_.value.data.data(), out_ch_, rows);
    MapMat<S> dc(dcols_.data(), rows, cols);
    dc.noalias() = w.transpose() * g;
    return col2im();
  }

  std::vector<ParamT<S>*> params() override { return {&weight_, &bias_}; }

private:
  void im2col(const TensorT<S>& x) {
    const int64_t cols = static_cast<int64_t>(out_h_) * out_w_;
    const int64_t rows = static_cast<int64_t>(in_ch_) * kernel_ * kernel_;
    cols_.assign(static_cast<size_t>(rows) * cols, S(0));
    for (int ci = 0; ci < in_ch_; ++ci) {
      for (int ky = 0; ky < kernel_; ++ky) {
        for (int kx = 0; kx < kernel_; ++kx) {
          const int64_t row = (static_cast<int64_t>(ci) * kernel_ + ky) * kernel_ + kx;
          S* dst = cols_.data() + row * cols;
          for (int oy = 0; oy < out_h_; ++oy) {
            const int sy = oy * stride_ + ky - pad_;
            if (sy < 0 || sy >= in_h_) {
              dst += out_w_;
              continue;
            }
            const S* src_row = x.data.data() + (static_cast<size_t>(ci) * in_h_ + sy) * in_w_;
            for (int ox = 0; ox < out_w_; ++ox, ++dst) {
              const int sx = ox * stride_ + kx - pad_;
              if (sx >= 0 && sx < in_w_) *dst = src_row[sx];
            }
          }
        }
      }
    }
  }

  TensorT<S> col2im() {
    TensorT<S> dx({in_ch_, in_h_, in_w_});
    const int64_t cols = static_cast<int64_t>(out_h_) * out_w_;
    for (int ci = 0; ci < in_ch_; ++ci) {
      for (int ky = 0; ky < kernel_; ++ky) {
        for (int kx = 0; kx < kernel_; ++kx) {
          const int64_t row = (static_cast<int64_t>(ci) * kernel_ + ky) * kernel_ + kx;
          const S* src = dcols_.data() + row * cols;
          for (int oy = 0; oy < out_h_; ++oy) {
            const int sy = oy * stride_ + ky - pad_;
            if (sy < 0 || sy >= in_h_) {
              src += out_w_;
              continue;
            }
            S* dst_row = dx.data.data() + (static_cast<size_t>(ci) * in_h_ + sy) * in_w_;
            for (int ox = 0; ox < out_w_; ++ox, ++src) {
              const int sx = ox * stride_ + kx - pad_;
              if (sx >= 0 && sx < in_w_) dst_row[sx] += *src;
            }
          }
        }
      }
    }
    return dx;
  }

  int in_ch_, out_ch_, kernel_, stride_, pad_;
  int in_h_ = 0, in_w_ = 0, out_h_ = 0, out_w_ = 0;
  ParamT<S> weight_, bias_;
  std::vector<S> cols_, dcols_;
};

// ---------------------------------------------------------------------------
// Pooling / resampling

template <typename S>
class MaxPool2T : public LayerT<S> {
public:
  TensorT<S> forward(const TensorT<S>& x, bool) override {
    in_shape_ = x.shape;
    const int c = x.shape[0], h = x.shape[1], w = x.shape[2];
    const int oh = h / 2, ow = w / 2;
    TensorT<S> out({c, oh, ow});
    argmax_.resize(out.data.size());
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < oh; ++y)
        for (int x2 = 0; x2 < ow; ++x2) {
          size_t best_idx = 0;
          S best = std::numeric_limits<S>::lowest();
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              size_t idx = (static_cast<size_t>(ci) * h + 2 * y + dy) * w + 2 * x2 + dx;
              if (x.data[idx] > best) {
                best = x.data[idx];
                best_idx = idx;
              }
            }
          size_t out_idx = (static_cast<size_t>(ci) * oh + y) * ow + x2;
          out.data[out_idx] = best;
          argmax_[out_idx] = best_idx;
        }
    return out;
  }

  TensorT<S> backward(const TensorT<S>& grad_out) override {
    TensorT<S> dx(in_shape_);
    for (size_t i = 0; i < grad_out.data.size(); ++i) dx.data[argmax_[i]] += grad_out.data[i];
    return dx;
  }

private:
  std::vector<int> in_shape_;
  std::vector<size_t> argmax_;
};

template <typename S>
class UpsampleNearest2T : public LayerT<S> {
public:
  TensorT<S> forward(const TensorT<S>& x, bool) override {
    in_shape_ = x.shape;
    const int c = x.shape[0], h = x.shape[1], w = x.shape[2];
    TensorT<S> out({c, 2 * h, 2 * w});
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < 2 * h; ++y)
        for (int x2 = 0; x2 < 2 * w; ++x2)
          out.at(ci, y, x2) = x.at(ci, y / 2, x2 / 2);
    return out;
  }

  TensorT<S> backward(const TensorT<S>& grad_out) override {
    TensorT<S> dx(in_shape_);
    const int c = in_shape_[0], h = in_shape_[1], w = in_shape_[2];
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < 2 * h; ++y)
        for (int x2 = 0; x2 < 2 * w; ++x2)
          dx.at(ci, y / 2, x2 / 2) += grad_out.at(ci, y, x2);
    return dx;
  }

private:
  std::vector<int> in_shape_;
};

// ---------------------------------------------------------------------------
// Activations

template <typename S>
class ReluT : public LayerT<S> {
public:
  TensorT<S> forward(const TensorT<S>& x, bool) override {
    mask_.assign(x.data.size(), false);
    TensorT<S> out = x;
    for (size_t i = 0; i < out.data.size(); ++i) {
      if (out.data[i] > S(0))
        mask_[i] = true;
      else
        out.data[i] = S(0);
    }
    return out;
  }
  TensorT<S> backward(const TensorT<S>& grad_out) override {
    TensorT<S> dx = grad_out;
    for (size_t i = 0; i < dx.data.size(); ++i)
      if (!mask_[i]) dx.data[i] = S(0);
    return dx;
  }

private:
  std::vector<bool> mask_;
};

template <typename S>
class LeakyReluT : public LayerT<S> {
public:
  explicit LeakyReluT(double slope = 0.2) : slope_(static_cast<S>(slope)) {}
  TensorT<S> forward(const TensorT<S>& x, bool) override {
    mask_.assign(x.data.size(), false);
    TensorT<S> out = x;
    for (size_t i = 0; i < out.data.size(); ++i) {
      if (out.data[i] > S(0))
        mask_[i] = true;
      else
        out.data[i] *= slope_;
    }
    return out;
  }
  TensorT<S> backward(const TensorT<S>& grad_out) override {
    TensorT<S> dx = grad_out;
    for (size_t i = 0; i < dx.data.size(); ++i)
      if (!mask_[i]) dx.data[i] *= slope_;
    return dx;
  }

private:
  S slope_;
  std::vector<bool> mask_;
};

template <typename S>
class SigmoidT : public LayerT<S> {
public:
  TensorT<S> forward(const TensorT<S>& x, bool) override {
    out_ = x;
    for (auto& v : out_.data) v = S(1) / (S(1) + std::exp(-v));
    return out_;
  }
  TensorT<S> backward(const TensorT<S>& grad_out) override {
    TensorT<S> dx = grad_out;
    for (size_t i = 0; i < dx.data.size(); ++i)
      dx.data[i] *= out_.data[i] * (S(1) - out_.data[i]);
    return dx;
  }

private:
  TensorT<S> out_;
};

template <typename S>
class DropoutT : public LayerT<S> {
public:
  DropoutT(double rate, Rng* rng) : rate_(rate), rng_(rng) {}
  TensorT<S> forward(const TensorT<S>& x, bool training) override {
    active_ = training && rate_ > 0.0;
    if (!active_) return x;
    keep_.assign(x.data.size(), true);
    TensorT<S> out = x;
    const S scale = static_cast<S>(1.0 / (1.0 - rate_));
    for (size_t i = 0; i < out.data.size(); ++i) {
      if (rng_->uniform() < rate_) {
        keep_[i] = false;
        out.data[i] = S(0);
      } else {
        out.data[i] *= scale;
      }
    }
    return out;
  }
  TensorT<S> backward(const TensorT<S>& grad_out) override {
    if (!active_) return grad_out;
    TensorT<S> dx = grad_out;
    const S scale = static_cast<S>(1.0 / (1.0 - rate_));
    for (size_t i = 0; i < dx.data.size(); ++i) dx.data[i] = keep_[i] ? dx.data[i] * scale : S(0);
    return dx;
  }

private:
  double rate_;
  Rng* rng_;
  bool active_ = false;
  std::vector<bool> keep_;
};

// ---------------------------------------------------------------------------
// Linear (flattens its input)

template <typename S>
class LinearT : public LayerT<S> {
public:
  LinearT(std::string name, int in_features, int out_features)
      : in_features_(in_features), out_features_(out_features) {
    weight_.name = name + ".weight";
    weight_.init_shape({out_features, in_features});
    bias_.name = name + ".bias";
    bias_.init_shape({out_features});
  }

  void init(Rng& rng) override {
    const double stddev = std::sqrt(2.0 / in_features_);
    for (auto& w : weight_.value.data) w = static_cast<S>(rng.normal(0.0, stddev));
    bias_.value.zero();
  }

  TensorT<S> forward(const TensorT<S>& x, bool) override {
    if (x.numel() != in_features_)
      raise(ErrorKind::InvalidArgument, weight_.name, ": expected ", in_features_,
            " inputs, got ", x.numel());
    in_shape_ = x.shape;
    input_ = x;
    TensorT<S> out({out_features_});
    ConstMapMat<S> w(weight_.value.data.data(), out_features_, in_features_);
    Eigen::Map<const Eigen::Vector<S, Eigen::Dynamic>> xin(x.data.data(), in_features_);
    Eigen::Map<Eigen::Vector<S, Eigen::Dynamic>> o(out.data.data(), out_features_);
    o.noalias() = w * xin;
    for (int i = 0; i < out_features_; ++i) out.data[i] += bias_.value.data[i];
    return out;
  }

  TensorT<S> backward(const TensorT<S>& grad_out) override {
    MapMat<S> dw(weight_.grad.data.data(), out_features_, in_features_);
    Eigen::Map<const Eigen::Vector<S, Eigen::Dynamic>> g(grad_out.data.data(), out_features_);
    Eigen::Map<const Eigen::Vector<S, Eigen::Dynamic>> xin(input_.data.data(), in_features_);
    dw.noalias() += g * xin.transpose();
    for (int i = 0; i < out_features_; ++i) bias_.grad.data[i] += grad_out.data[i];

    TensorT<S> dx(in_shape_);
    ConstMapMat<S> w(weight_.value.data.data(), out_features_, in_features_);
    Eigen::Map<Eigen::Vector<S, Eigen::Dynamic>> dxv(dx.data.data(), in_features_);
    dxv.noalias() = w.transpose() * g;
    return dx;
  }

  std::vector<ParamT<S>*> params() override { return {&weight_, &bias_}; }

private:
  int in_features_, out_features_;
  std::vector<int> in_shape_;
  TensorT<S> input_;
  ParamT<S> weight_, bias_;
};

// ---------------------------------------------------------------------------
// Sequential container

template <typename S>
class SequentialT {
public:
  SequentialT() = default;

  template <typename L, typename... Args>
  L* add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L* raw = layer.get();
    layers_.push_back(std::move(layer));
    return raw;
  }

  TensorT<S> forward(const TensorT<S>& x, bool training) {
    TensorT<S> out = x;
    for (auto& layer : layers_) out = layer->forward(out, training);
    return out;
  }

  TensorT<S> backward(const TensorT<S>& grad_out) {
    TensorT<S> g = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }

  std::vector<ParamT<S>*> params() {
    std::vector<ParamT<S>*> out;
    for (auto& layer : layers_)
      for (auto* p : layer->params()) out.push_back(p);
    return out;
  }

  void init(Rng& rng) {
    for (auto& layer : layers_) layer->init(rng);
  }

private:
  std::vector<std::unique_ptr<LayerT<S>>> layers_;
};

using Sequential = SequentialT<float>;

// ---------------------------------------------------------------------------
// Channel concat for skip connections

template <typename S>
TensorT<S> concat_channels(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.shape[1] != b.shape[1] || a.shape[2] != b.shape[2])
    raise(ErrorKind::InvalidArgument, "concat_channels: spatial mismatch");
  TensorT<S> out({a.shape[0] + b.shape[0], a.shape[1], a.shape[2]});
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.data.size());
  return out;
}

template <typename S>
void split_channels(const TensorT<S>& grad, int channels_a, TensorT<S>& grad_a,
                    TensorT<S>& grad_b) {
  const int h = grad.shape[1], w = grad.shape[2];
  grad_a = TensorT<S>({channels_a, h, w});
  grad_b = TensorT<S>({grad.shape[0] - channels_a, h, w});
  std::copy(grad.data.begin(), grad.data.begin() + grad_a.data.size(), grad_a.data.begin());
  std::copy(grad.data.begin() + grad_a.data.size(), grad.data.end(), grad_b.data.begin());
}

// ---------------------------------------------------------------------------
// RoI align (single sample per bin, bilinear, pixel centers at integers)

template <typename S>
TensorT<S> roi_align(const TensorT<S>& features, double x1, double y1, double x2, double y2,
                     int grid) {
  const int c = features.shape[0], h = features.shape[1], w = features.shape[2];
  TensorT<S> out({c, grid, grid});
  const double bw = (x2 - x1) / grid;
  const double bh = (y2 - y1) / grid;
  for (int gy = 0; gy < grid; ++gy) {
    for (int gx = 0; gx < grid; ++gx) {
      const double sx = x1 + (gx + 0.5) * bw - 0.5;
      const double sy = y1 + (gy + 0.5) * bh - 0.5;
      const int ix = static_cast<int>(std::floor(sx));
      const int iy = static_cast<int>(std::floor(sy));
      const double fx = sx - ix, fy = sy - iy;
      for (int ci = 0; ci < c; ++ci) {
        auto sample = [&](int yy, int xx) -> S {
          if (xx < 0 || xx >= w || yy < 0 || yy >= h) return S(0);
          return features.at(ci, yy, xx);
        };
        const double v = (1 - fx) * (1 - fy) * sample(iy, ix) +
                         fx * (1 - fy) * sample(iy, ix + 1) +
                         (1 - fx) * fy * sample(iy + 1, ix) +
                         fx * fy * sample(iy + 1, ix + 1);
        out.at(ci, gy, gx) = static_cast<S>(v);
      }
    }
  }
  return out;
}

template <typename S>
void roi_align_backward(const TensorT<S>& grad_out, double x1, double y1, double x2, double y2,
                        int grid, TensorT<S>& grad_features) {
  const int c = grad_features.shape[0], h = grad_features.shape[1], w = grad_features.shape[2];
  const double bw = (x2 - x1) / grid;
  const double bh = (y2 - y1) / grid;
  for (int gy = 0; gy < grid; ++gy) {
    for (int gx = 0; gx < grid; ++gx) {
      const double sx = x1 + (gx + 0.5) * bw - 0.5;
      const double sy = y1 + (gy + 0.5) * bh - 0.5;
      const int ix = static_cast<int>(std::floor(sx));
      const int iy = static_cast<int>(std::floor(sy));
      const double fx = sx - ix, fy = sy - iy;
      for (int ci = 0; ci < c; ++ci) {
        const S g = grad_out.at(ci, gy, gx);
        auto add = [&](int yy, int xx, double wgt) {
          if (xx < 0 || xx >= w || yy < 0 || yy >= h) return;
          grad_features.at(ci, yy, xx) += static_cast<S>(wgt) * g;
        };
        add(iy, ix, (1 - fx) * (1 - fy));
        add(iy, ix + 1, fx * (1 - fy));
        add(iy + 1, ix, (1 - fx) * fy);
        add(iy + 1, ix + 1, fx * fy);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Losses (element math; reductions live at call sites)

template <typename S>
S sigmoid(S x) {
  return S(1) / (S(1) + std::exp(-x));
}

// Numerically stable BCE on a raw logit. Gradient wrt logit is sigmoid - t.
template <typename S>
S bce_with_logits(S logit, S target) {
  const S m = std::max(logit, S(0));
  return m - logit * target + std::log(S(1) + std::exp(-std::abs(logit)));
}

template <typename S>
S smooth_l1(S diff) {
  const S a = std::abs(diff);
  return a < S(1) ? S(0.5) * diff * diff : a - S(0.5);
}

template <typename S>
S smooth_l1_grad(S diff) {
  if (diff > S(1)) return S(1);
  if (diff < S(-1)) return S(-1);
  return diff;
}

// Stable softmax over a flat tensor.
template <typename S>
std::vector<S> softmax(const std::vector<S>& logits) {
  S m = *std::max_element(logits.begin(), logits.end());
  std::vector<S> out(logits.size());
  S total = S(0);
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  return out;
}

// ---------------------------------------------------------------------------
// Adam

template <typename S>
class AdamT {
public:
  AdamT(std::vector<ParamT<S>*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto* p : params_) {
      states_.push_back({TensorT<S>(p->value.shape), TensorT<S>(p->value.shape)});
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->grad.zero();
  }

  void step(double grad_scale = 1.0) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (size_t pi = 0; pi < params_.size(); ++pi) {
      auto& p = *params_[pi];
      auto& st = states_[pi];
      for (size_t i = 0; i < p.value.data.size(); ++i) {
        const double g = static_cast<double>(p.grad.data[i]) * grad_scale;
        double m = beta1_ * static_cast<double>(st.m.data[i]) + (1.0 - beta1_) * g;
        double v = beta2_ * static_cast<double>(st.v.data[i]) + (1.0 - beta2_) * g * g;
        st.m.data[i] = static_cast<S>(m);
        st.v.data[i] = static_cast<S>(v);
        const double update = lr_ * (m / bc1) / (std::sqrt(v / bc2) + eps_);
        p.value.data[i] -= static_cast<S>(update);
      }
    }
  }

  void set_lr(double lr) { lr_ = lr; }

private:
  struct State {
    TensorT<S> m, v;
  };
  std::vector<ParamT<S>*> params_;
  std::vector<State> states_;
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

using Adam = AdamT<float>;

}  // namespace foodpipe::nn
