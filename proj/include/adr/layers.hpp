// SPDX-License-Identifier: Apache-2.0
#pragma once

/// @file layers.hpp
/// @brief Hand-differentiated layers: conv2d, ReLU, nearest upsampling,
/// residual block and the top-down FPN merge.
///
/// Layers hold parameters and gradient accumulators only. Per-call state lives
/// in explicit cache objects so one layer can be applied several times (shared
/// heads across pyramid levels) before the backward passes run.

#include <Eigen/Core>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "adr/tensor.hpp"

namespace adr {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

inline int conv_out_size(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

/// Named view of one trainable tensor and its gradient.
template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T>* value;
  Tensor<T>* grad;
};

namespace detail {

/// (C, H, W) -> (C*k*k, Ho*Wo) patch matrix, row index (c*k + ky)*k + kx.
template <typename T>
void im2col(const Tensor<T>& in, int k, int stride, int pad, int ho, int wo, std::vector<T>& cols) {
  const int c_in = in.channels(), h = in.height(), w = in.width();
  cols.assign(static_cast<std::size_t>(c_in) * k * k * ho * wo, T(0));
  std::size_t row = 0;
  for (int c = 0; c < c_in; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx, ++row) {
        T* dst = cols.data() + row * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          const T* src = in.data.data() + (static_cast<std::size_t>(c) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[oy * wo + ox] = src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const std::vector<T>& cols, int k, int stride, int pad, int ho, int wo, Tensor<T>& out) {
  const int c_in = out.channels(), h = out.height(), w = out.width();
  std::size_t row = 0;
  for (int c = 0; c < c_in; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx, ++row) {
        const T* src = cols.data() + row * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          T* dst = out.data.data() + (static_cast<std::size_t>(c) * h + iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[oy * wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

template <typename T>
struct ConvCache {
  std::vector<int> in_shape;
  std::vector<T> cols;  // empty for the 1x1/stride-1 fast path, which keeps the input instead
  Tensor<T> input;
};

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_ch, int out_ch, int k, int stride, int pad)
      : in_ch_(in_ch), out_ch_(out_ch), k_(k), stride_(stride), pad_(pad),
        weight_({out_ch, in_ch, k, k}), bias_({out_ch}), grad_w_({out_ch, in_ch, k, k}), grad_b_({out_ch}) {
    if (in_ch <= 0 || out_ch <= 0 || k <= 0) throw std::invalid_argument("Conv2d: bad channel/kernel size");
    if (stride < 1 || pad < 0) throw std::invalid_argument("Conv2d: stride must be >= 1 and padding >= 0");
  }

  int in_channels() const { return in_ch_; }
  int out_channels() const { return out_ch_; }
  int kernel() const { return k_; }
  int stride() const { return stride_; }
  int padding() const { return pad_; }

  Tensor<T>& weight() { return weight_; }
  const Tensor<T>& weight() const { return weight_; }
  Tensor<T>& bias() { return bias_; }
  const Tensor<T>& bias() const { return bias_; }
  Tensor<T>& grad_weight() { return grad_w_; }
  Tensor<T>& grad_bias() { return grad_b_; }

  /// Uniform on +-sqrt(gain / fan_in); bias zero.
  void init_uniform(Rng& rng, double gain = 6.0) {
    const double bound = std::sqrt(gain / (static_cast<double>(in_ch_) * k_ * k_));
    for (auto& v : weight_.data) v = static_cast<T>(rng.uniform(-bound, bound));
    bias_.zero();
  }

  void init_bound(Rng& rng, double bound, double bias_value = 0.0) {
    for (auto& v : weight_.data) v = static_cast<T>(rng.uniform(-bound, bound));
    for (auto& v : bias_.data) v = static_cast<T>(bias_value);
  }

  void zero_grad() {
    grad_w_.zero();
    grad_b_.zero();
  }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    out.push_back({prefix + ".weight", &weight_, &grad_w_});
    out.push_back({prefix + ".bias", &bias_, &grad_b_});
  }

  Tensor<T> forward(const Tensor<T>& in, ConvCache<T>& cache) const {
    if (in.shape.size() != 3 || in.channels() != in_ch_)
      throw std::invalid_argument("Conv2d: expected (" + std::to_string(in_ch_) + ",H,W) input, got " +
                                  shape_str(in.shape));
    const int ho = conv_out_size(in.height(), k_, stride_, pad_);
    const int wo = conv_out_size(in.width(), k_, stride_, pad_);
    if (ho <= 0 || wo <= 0) throw std::invalid_argument("Conv2d: input smaller than kernel");
    cache.in_shape = in.shape;
    Tensor<T> out({out_ch_, ho, wo});
    const int kk = in_ch_ * k_ * k_;
    const int hw = ho * wo;
    ConstMatMap<T> w(weight_.data.data(), out_ch_, kk);
    MatMap<T> o(out.data.data(), out_ch_, hw);
    if (pointwise()) {
      cache.cols.clear();
      cache.input = in;
      o.noalias() = w * ConstMatMap<T>(in.data.data(), kk, hw);
    } else {
      detail::im2col(in, k_, stride_, pad_, ho, wo, cache.cols);
      o.noalias() = w * ConstMatMap<T>(cache.cols.data(), kk, hw);
    }
    for (int c = 0; c < out_ch_; ++c) o.row(c).array() += bias_.data[c];
    require_finite<T>(out.span(), "conv2d output");
    return out;
  }

  /// Accumulates weight/bias gradients and returns the input gradient.
  Tensor<T> backward(const Tensor<T>& grad_out, const ConvCache<T>& cache) {
    const int ho = grad_out.height(), wo = grad_out.width();
    const int kk = in_ch_ * k_ * k_;
    const int hw = ho * wo;
    ConstMatMap<T> g(grad_out.data.data(), out_ch_, hw);
    ConstMatMap<T> w(weight_.data.data(), out_ch_, kk);
    MatMap<T> gw(grad_w_.data.data(), out_ch_, kk);
    for (int c = 0; c < out_ch_; ++c) {
      const T* row = grad_out.data.data() + static_cast<std::size_t>(c) * hw;
      T acc = T(0);
      for (int i = 0; i < hw; ++i) acc += row[i];
      grad_b_.data[c] += acc;
    }
    Tensor<T> gin(cache.in_shape);
    if (pointwise()) {
      gw.noalias() += g * ConstMatMap<T>(cache.input.data.data(), kk, hw).transpose();
      MatMap<T>(gin.data.data(), kk, hw).noalias() = w.transpose() * g;
    } else {
      gw.noalias() += g * ConstMatMap<T>(cache.cols.data(), kk, hw).transpose();
      std::vector<T> gcols(static_cast<std::size_t>(kk) * hw);
      MatMap<T>(gcols.data(), kk, hw).noalias() = w.transpose() * g;
      detail::col2im(gcols, k_, stride_, pad_, ho, wo, gin);
    }
    require_finite<T>(gin.span(), "conv2d input gradient");
    return gin;
  }

 private:
  bool pointwise() const { return k_ == 1 && stride_ == 1 && pad_ == 0; }

  int in_ch_ = 0, out_ch_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
  Tensor<T> weight_, bias_, grad_w_, grad_b_;
};

/// Functional convolution: cross-correlation of `input` with `kernel`
/// (O, I, KH, KW), KH == KW, plus optional per-output bias.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>* bias, int stride, int padding) {
  if (kernel.shape.size() != 4 || kernel.dim(2) != kernel.dim(3))
    throw std::invalid_argument("conv2d: kernel must be (O,I,K,K)");
  Conv2d<T> c(kernel.dim(1), kernel.dim(0), kernel.dim(2), stride, padding);
  c.weight() = kernel;
  if (bias) c.bias() = *bias;
  ConvCache<T> cache;
  return c.forward(input, cache);
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& grad_out, int stride,
                             int padding) {
  Conv2d<T> c(kernel.dim(1), kernel.dim(0), kernel.dim(2), stride, padding);
  c.weight() = kernel;
  ConvCache<T> cache;
  c.forward(input, cache);
  ConvGrads<T> g;
  g.input = c.backward(grad_out, cache);
  g.weight = c.grad_weight();
  g.bias = c.grad_bias();
  return g;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& in) {
  Tensor<T> out = in;
  for (auto& v : out.data) v = v > T(0) ? v : T(0);
  return out;
}

/// Gradient of ReLU given its output.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& out) {
  Tensor<T> g = grad_out;
  for (std::size_t i = 0; i < g.data.size(); ++i)
    if (!(out.data[i] > T(0))) g.data[i] = T(0);
  return g;
}

/// Nearest-neighbour 2x upsampling: every pixel becomes a 2x2 block.
template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& in, int factor = 2) {
  if (factor != 2) throw std::invalid_argument("upsample_nearest: only factor 2 is supported");
  const int c = in.channels(), h = in.height(), w = in.width();
  Tensor<T> out({c, 2 * h, 2 * w});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < 2 * h; ++y)
      for (int x = 0; x < 2 * w; ++x) out.at(ch, y, x) = in.at(ch, y / 2, x / 2);
  return out;
}

/// Adjoint of upsample_nearest: sums each 2x2 block.
template <typename T>
Tensor<T> upsample_nearest_backward(const Tensor<T>& grad_out) {
  const int c = grad_out.channels(), h = grad_out.height() / 2, w = grad_out.width() / 2;
  Tensor<T> g({c, h, w});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < 2 * h; ++y)
      for (int x = 0; x < 2 * w; ++x) g.at(ch, y / 2, x / 2) += grad_out.at(ch, y, x);
  return g;
}

template <typename T>
struct ResidualCache {
  ConvCache<T> conv1, conv2, proj;
  Tensor<T> hidden;  // ReLU(conv1(x))
  Tensor<T> out;
};

/// out = ReLU(conv3x3(ReLU(conv3x3_s(x))) + shortcut(x)); the shortcut is the
/// identity or a strided 1x1 projection.
template <typename T>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(int in_ch, int out_ch, int stride, bool projection)
      : conv1_(in_ch, out_ch, 3, stride, 1), conv2_(out_ch, out_ch, 3, 1, 1) {
    if (projection) {
      proj_.emplace(in_ch, out_ch, 1, stride, 0);
    } else if (in_ch != out_ch || stride != 1) {
      throw std::invalid_argument("ResidualBlock: identity shortcut needs equal channels and stride 1");
    }
  }

  Conv2d<T>& conv1() { return conv1_; }
  Conv2d<T>& conv2() { return conv2_; }
  bool has_projection() const { return proj_.has_value(); }
  Conv2d<T>& projection() { return *proj_; }

  void init(Rng& rng) {
    conv1_.init_uniform(rng);
    conv2_.init_uniform(rng, 3.0);  // halved variance keeps the residual sum in range
    if (proj_) proj_->init_uniform(rng, 3.0);
  }

  void zero_grad() {
    conv1_.zero_grad();
    conv2_.zero_grad();
    if (proj_) proj_->zero_grad();
  }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    conv1_.collect(prefix + ".conv1", out);
    conv2_.collect(prefix + ".conv2", out);
    if (proj_) proj_->collect(prefix + ".proj", out);
  }

  Tensor<T> forward(const Tensor<T>& x, ResidualCache<T>& cache) const {
    cache.hidden = relu(conv1_.forward(x, cache.conv1));
    Tensor<T> sum = conv2_.forward(cache.hidden, cache.conv2);
    if (proj_) {
      sum += proj_->forward(x, cache.proj);
    } else {
      sum += x;
    }
    cache.out = relu(sum);
    return cache.out;
  }

  Tensor<T> backward(const Tensor<T>& grad_out, const ResidualCache<T>& cache) {
    const Tensor<T> g = relu_backward(grad_out, cache.out);
    const Tensor<T> g_hidden = relu_backward(conv2_.backward(g, cache.conv2), cache.hidden);
    Tensor<T> gx = conv1_.backward(g_hidden, cache.conv1);
    if (proj_) {
      gx += proj_->backward(g, cache.proj);
    } else {
      gx += g;
    }
    return gx;
  }

 private:
  Conv2d<T> conv1_, conv2_;
  std::optional<Conv2d<T>> proj_;
};

template <typename T>
struct FpnCache {
  std::vector<ConvCache<T>> lateral, smooth;
};

/// Top-down pyramid. Inputs are ordered coarse-to-fine with each level
/// exactly twice the spatial size of the previous one:
///   P_top = Conv3x3(Lateral(C_top))
///   P_l   = Conv3x3(Lateral(C_l) + Upsample2x(P_{l+1}))
/// where Lateral is a 1x1 conv to d channels.
template <typename T>
class Fpn {
 public:
  Fpn() = default;
  /// `in_channels` is coarse-to-fine, matching the forward inputs.
  Fpn(const std::vector<int>& in_channels, int d) : d_(d) {
    if (in_channels.empty() || d <= 0) throw std::invalid_argument("Fpn: need >= 1 level and d > 0");
    for (int c : in_channels) {
      lateral_.emplace_back(c, d, 1, 1, 0);
      smooth_.emplace_back(d, d, 3, 1, 1);
    }
  }

  int width() const { return d_; }
  std::size_t levels() const { return lateral_.size(); }
  Conv2d<T>& lateral(std::size_t i) { return lateral_.at(i); }
  Conv2d<T>& smooth(std::size_t i) { return smooth_.at(i); }

  void init(Rng& rng) {
    for (auto& c : lateral_) c.init_uniform(rng, 3.0);
    for (auto& c : smooth_) c.init_uniform(rng, 3.0);
  }

  void zero_grad() {
    for (auto& c : lateral_) c.zero_grad();
    for (auto& c : smooth_) c.zero_grad();
  }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) {
    for (std::size_t i = 0; i < lateral_.size(); ++i) {
      lateral_[i].collect(prefix + ".lateral" + std::to_string(i), out);
      smooth_[i].collect(prefix + ".smooth" + std::to_string(i), out);
    }
  }

  std::vector<Tensor<T>> forward(const std::vector<Tensor<T>>& c_levels, FpnCache<T>& cache) const {
    if (c_levels.size() != lateral_.size()) throw std::invalid_argument("Fpn: level count mismatch");
    for (std::size_t i = 1; i < c_levels.size(); ++i) {
      if (c_levels[i].height() != 2 * c_levels[i - 1].height() || c_levels[i].width() != 2 * c_levels[i - 1].width())
        throw std::invalid_argument("Fpn: spatial sizes must double from one level to the next");
    }
    cache.lateral.assign(c_levels.size(), {});
    cache.smooth.assign(c_levels.size(), {});
    std::vector<Tensor<T>> p(c_levels.size());
    for (std::size_t i = 0; i < c_levels.size(); ++i) {
      Tensor<T> merged = lateral_[i].forward(c_levels[i], cache.lateral[i]);
      if (i > 0) merged += upsample_nearest(p[i - 1]);
      p[i] = smooth_[i].forward(merged, cache.smooth[i]);
    }
    return p;
  }

  /// `grad_p` aligns with the forward outputs; returns gradients for c_levels.
  std::vector<Tensor<T>> backward(const std::vector<Tensor<T>>& grad_p, const FpnCache<T>& cache) {
    const std::size_t n = lateral_.size();
    std::vector<Tensor<T>> grad_total = grad_p;
    std::vector<Tensor<T>> grad_c(n);
    for (std::size_t step = 0; step < n; ++step) {
      const std::size_t i = n - 1 - step;  // finest first: coarser levels receive upsampled gradient
      const Tensor<T> g_merged = smooth_[i].backward(grad_total[i], cache.smooth[i]);
      grad_c[i] = lateral_[i].backward(g_merged, cache.lateral[i]);
      if (i > 0) grad_total[i - 1] += upsample_nearest_backward(g_merged);
    }
    return grad_c;
  }

 private:
  int d_ = 0;
  std::vector<Conv2d<T>> lateral_, smooth_;
};

}  // namespace adr
