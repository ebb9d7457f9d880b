#include "chr/layers.hpp"

#include <Eigen/Core>
#include <cmath>
#include <numeric>

#include "chr/errors.hpp"

namespace chr::nn {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

std::size_t product(const std::vector<int>& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
}

void im2col(const Tensor& x, int k, int stride, int pad, int ho, int wo, float* col) {
  const int n_batch = x.batch();
  const int h = x.height();
  const int w = x.width();
  const std::size_t cols = static_cast<std::size_t>(n_batch) * ho * wo;
  for (int ci = 0; ci < x.channels(); ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* dst = col + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * cols;
        for (int n = 0; n < n_batch; ++n) {
          for (int oy = 0; oy < ho; ++oy) {
            float* d = dst + (static_cast<std::size_t>(n) * ho + oy) * wo;
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) {
              std::fill_n(d, wo, 0.0f);
              continue;
            }
            const float* src = x.data() + x.index(n, ci, iy, 0);
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride - pad + kx;
              d[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0f;
            }
          }
        }
      }
    }
  }
}

void col2im(const float* col, int k, int stride, int pad, int ho, int wo, Tensor& dx) {
  const int n_batch = dx.batch();
  const int h = dx.height();
  const int w = dx.width();
  const std::size_t cols = static_cast<std::size_t>(n_batch) * ho * wo;
  for (int ci = 0; ci < dx.channels(); ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* src = col + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * cols;
        for (int n = 0; n < n_batch; ++n) {
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) continue;
            const float* s = src + (static_cast<std::size_t>(n) * ho + oy) * wo;
            float* d = dx.data() + dx.index(n, ci, iy, 0);
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride - pad + kx;
              if (ix >= 0 && ix < w) d[ix] += s[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Param::Param(std::string n, std::vector<int> s, bool learnable, bool decay_)
    : name(std::move(n)), shape(std::move(s)), value(product(shape), 0.0f), decay(decay_) {
  if (learnable) grad.assign(value.size(), 0.0f);
}

void Param::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }

Conv2d::Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int stride, int pad)
    : weight(name + ".weight", {out_channels, in_channels, kernel, kernel}, true, true),
      in_(in_channels),
      out_(out_channels),
      k_(kernel),
      stride_(stride),
      pad_(pad) {}

void Conv2d::init(Rng& rng) {
  const double std_dev = std::sqrt(2.0 / (in_ * k_ * k_));
  for (float& v : weight.value) v = static_cast<float>(std_dev * rng.normal());
}

Tensor Conv2d::forward(const Tensor& x, ConvCache* cache) const {
  if (x.channels() != in_) {
    throw ConfigError(weight.name + ": expected " + std::to_string(in_) + " input channels, got " +
                      std::to_string(x.channels()));
  }
  const int ho = output_size(x.height());
  const int wo = output_size(x.width());
  const int kdim = in_ * k_ * k_;
  const Eigen::Index cols = static_cast<Eigen::Index>(x.batch()) * ho * wo;
  Tensor out(out_, x.batch(), ho, wo);
  ConstMapMat w(weight.value.data(), out_, kdim);
  MapMat y(out.data(), out_, cols);

  if (k_ == 1 && stride_ == 1 && pad_ == 0) {
    y.noalias() = w * ConstMapMat(x.data(), kdim, cols);
    if (cache) {
      cache->input = x;
      cache->col.clear();
    }
  } else {
    std::vector<float> local;
    std::vector<float>& col = cache ? cache->col : local;
    col.resize(static_cast<std::size_t>(kdim) * cols);
    im2col(x, k_, stride_, pad_, ho, wo, col.data());
    y.noalias() = w * ConstMapMat(col.data(), kdim, cols);
    if (cache) cache->input = Tensor();
  }
  if (cache) {
    cache->in_h = x.height();
    cache->in_w = x.width();
  }
  return out;
}

Tensor Conv2d::backward(const Tensor& dy, const ConvCache& cache, bool need_dx) {
  const int kdim = in_ * k_ * k_;
  const Eigen::Index cols = static_cast<Eigen::Index>(dy.batch()) * dy.height() * dy.width();
  ConstMapMat g(dy.data(), out_, cols);
  const bool pointwise = k_ == 1 && stride_ == 1 && pad_ == 0;
  const float* col = pointwise ? cache.input.data() : cache.col.data();
  ConstMapMat colm(col, kdim, cols);
  MapMat dw(weight.grad.data(), out_, kdim);
  dw.noalias() += g * colm.transpose();
  if (!need_dx) return {};

  ConstMapMat w(weight.value.data(), out_, kdim);
  Tensor dx(in_, dy.batch(), cache.in_h, cache.in_w);
  if (pointwise) {
    MapMat(dx.data(), kdim, cols).noalias() = w.transpose() * g;
  } else {
    std::vector<float> dcol(static_cast<std::size_t>(kdim) * cols);
    MapMat(dcol.data(), kdim, cols).noalias() = w.transpose() * g;
    col2im(dcol.data(), k_, stride_, pad_, dy.height(), dy.width(), dx);
  }
  return dx;
}

BatchNorm2d::BatchNorm2d(const std::string& name, int channels, float momentum, float eps)
    : gamma(name + ".gamma", {channels}, true),
      beta(name + ".beta", {channels}, true),
      running_mean(name + ".running_mean", {channels}, false),
      running_var(name + ".running_var", {channels}, false),
      momentum_(momentum),
      eps_(eps) {
  std::fill(gamma.value.begin(), gamma.value.end(), 1.0f);
  std::fill(running_var.value.begin(), running_var.value.end(), 1.0f);
}

Tensor BatchNorm2d::forward_train(const Tensor& x, BatchNormCache* cache) {
  const int channels = x.channels();
  Tensor y(channels, x.batch(), x.height(), x.width());
  if (cache) {
    cache->xhat = Tensor(channels, x.batch(), x.height(), x.width());
    cache->inv_std.assign(static_cast<std::size_t>(channels), 0.0f);
    cache->mode = Mode::kTrain;
  }
  const std::size_t m = static_cast<std::size_t>(x.batch()) * x.plane_size();
  for (int c = 0; c < channels; ++c) {
    auto xs = x.channel(c);
    double sum = 0.0;
    for (float v : xs) sum += v;
    const double mean = sum / static_cast<double>(m);
    double sq = 0.0;
    for (float v : xs) sq += (v - mean) * (v - mean);
    const double var = sq / static_cast<double>(m);
    const auto inv_std = static_cast<float>(1.0 / std::sqrt(var + eps_));
    const auto meanf = static_cast<float>(mean);
    const float g = gamma.value[c];
    const float b = beta.value[c];
    auto ys = y.channel(c);
    for (std::size_t i = 0; i < m; ++i) {
      const float xh = (xs[i] - meanf) * inv_std;
      ys[i] = g * xh + b;
      if (cache) cache->xhat.channel(c)[i] = xh;
    }
    if (cache) cache->inv_std[static_cast<std::size_t>(c)] = inv_std;
    const double unbiased = m > 1 ? var * static_cast<double>(m) / static_cast<double>(m - 1) : var;
    running_mean.value[c] = static_cast<float>((1.0 - momentum_) * running_mean.value[c] + momentum_ * mean);
    running_var.value[c] = static_cast<float>((1.0 - momentum_) * running_var.value[c] + momentum_ * unbiased);
  }
  return y;
}

Tensor BatchNorm2d::forward_eval(const Tensor& x, BatchNormCache* cache) const {
  const int channels = x.channels();
  Tensor y(channels, x.batch(), x.height(), x.width());
  if (cache) {
    cache->xhat = Tensor(channels, x.batch(), x.height(), x.width());
    cache->inv_std.assign(static_cast<std::size_t>(channels), 0.0f);
    cache->mode = Mode::kEval;
  }
  for (int c = 0; c < channels; ++c) {
    const auto inv_std = static_cast<float>(1.0 / std::sqrt(static_cast<double>(running_var.value[c]) + eps_));
    const float mean = running_mean.value[c];
    const float g = gamma.value[c];
    const float b = beta.value[c];
    auto xs = x.channel(c);
    auto ys = y.channel(c);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const float xh = (xs[i] - mean) * inv_std;
      ys[i] = g * xh + b;
      if (cache) cache->xhat.channel(c)[i] = xh;
    }
    if (cache) cache->inv_std[static_cast<std::size_t>(c)] = inv_std;
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy, const BatchNormCache& cache) {
  const int channels = dy.channels();
  Tensor dx(channels, dy.batch(), dy.height(), dy.width());
  const std::size_t m = static_cast<std::size_t>(dy.batch()) * dy.plane_size();
  for (int c = 0; c < channels; ++c) {
    auto g = dy.channel(c);
    auto xh = cache.xhat.channel(c);
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      sum_g += g[i];
      sum_gx += static_cast<double>(g[i]) * xh[i];
    }
    gamma.grad[c] += static_cast<float>(sum_gx);
    beta.grad[c] += static_cast<float>(sum_g);
    const float scale = gamma.value[c] * cache.inv_std[static_cast<std::size_t>(c)];
    auto d = dx.channel(c);
    if (cache.mode == Mode::kEval) {
      for (std::size_t i = 0; i < m; ++i) d[i] = scale * g[i];
    } else {
      const auto mean_g = static_cast<float>(sum_g / static_cast<double>(m));
      const auto mean_gx = static_cast<float>(sum_gx / static_cast<double>(m));
      for (std::size_t i = 0; i < m; ++i) d[i] = scale * (g[i] - mean_g - xh[i] * mean_gx);
    }
  }
  return dx;
}

void relu_inplace(Tensor& x) {
  for (float& v : x.values()) v = v > 0.0f ? v : 0.0f;
}

Tensor relu_backward(const Tensor& dy, const Tensor& y) {
  Tensor dx(dy.channels(), dy.batch(), dy.height(), dy.width());
  const float* g = dy.data();
  const float* o = y.data();
  float* d = dx.data();
  for (std::size_t i = 0; i < dx.size(); ++i) d[i] = o[i] > 0.0f ? g[i] : 0.0f;
  return dx;
}

ConvBnRelu::ConvBnRelu(const std::string& name, int in_channels, int out_channels, int kernel, int stride, int pad,
                       bool normalize)
    : conv(name + ".conv", in_channels, out_channels, kernel, stride, pad),
      bn(name + ".bn", out_channels),
      normalize_(normalize) {}

Tensor ConvBnRelu::forward(const Tensor& x, Mode mode, ConvBnReluCache* cache) {
  Tensor y = conv.forward(x, cache ? &cache->conv : nullptr);
  if (normalize_) {
    BatchNormCache* bc = cache ? &cache->bn : nullptr;
    y = mode == Mode::kTrain ? bn.forward_train(y, bc) : bn.forward_eval(y, bc);
  }
  relu_inplace(y);
  if (cache) cache->output = y;
  return y;
}

Tensor ConvBnRelu::infer(const Tensor& x) const {
  Tensor y = conv.forward(x, nullptr);
  if (normalize_) y = bn.forward_eval(y, nullptr);
  relu_inplace(y);
  return y;
}

Tensor ConvBnRelu::backward(const Tensor& dy, const ConvBnReluCache& cache, bool need_dx) {
  Tensor d = relu_backward(dy, cache.output);
  if (normalize_) d = bn.backward(d, cache.bn);
  return conv.backward(d, cache.conv, need_dx);
}

std::vector<Param*> ConvBnRelu::parameters() {
  if (!normalize_) return {&conv.weight};
  return {&conv.weight, &bn.gamma, &bn.beta};
}

std::vector<Param*> ConvBnRelu::buffers() {
  if (!normalize_) return {};
  return {&bn.running_mean, &bn.running_var};
}

Linear::Linear(const std::string& name, int in_features, int out_features)
    : weight(name + ".weight", {out_features, in_features}, true, true),
      bias(name + ".bias", {out_features}, true),
      in_(in_features),
      out_(out_features) {}

void Linear::init(Rng& rng) {
  for (float& v : weight.value) v = static_cast<float>(0.01 * rng.normal());
  std::fill(bias.value.begin(), bias.value.end(), 0.0f);
}

Matrix Linear::forward(const Matrix& x) const {
  if (x.rows != in_) {
    throw ConfigError(weight.name + ": expected " + std::to_string(in_) + " features, got " + std::to_string(x.rows));
  }
  Matrix y(out_, x.cols);
  MapMat ym(y.data.data(), out_, x.cols);
  ym.noalias() = ConstMapMat(weight.value.data(), out_, in_) * ConstMapMat(x.data.data(), in_, x.cols);
  for (int o = 0; o < out_; ++o) {
    for (int n = 0; n < x.cols; ++n) y(o, n) += bias.value[o];
  }
  return y;
}

Matrix Linear::backward(const Matrix& dy, const Matrix& x) {
  ConstMapMat g(dy.data.data(), out_, dy.cols);
  MapMat(weight.grad.data(), out_, in_).noalias() += g * ConstMapMat(x.data.data(), in_, x.cols).transpose();
  for (int o = 0; o < out_; ++o) {
    double s = 0.0;
    for (int n = 0; n < dy.cols; ++n) s += dy(o, n);
    bias.grad[o] += static_cast<float>(s);
  }
  Matrix dx(in_, dy.cols);
  MapMat(dx.data.data(), in_, dy.cols).noalias() = ConstMapMat(weight.value.data(), out_, in_).transpose() * g;
  return dx;
}

}  // namespace chr::nn
