#include "chr/tensor.hpp"

#include <algorithm>

#include "chr/errors.hpp"

namespace chr::nn {

Tensor::Tensor(int channels, int batch, int height, int width, float fill)
    : c_(channels),
      n_(batch),
      h_(height),
      w_(width),
      data_(static_cast<std::size_t>(channels) * batch * height * width, fill) {}

std::span<float> Tensor::plane(int c, int n) {
  return {data_.data() + index(n, c, 0, 0), static_cast<std::size_t>(plane_size())};
}
std::span<const float> Tensor::plane(int c, int n) const {
  return {data_.data() + index(n, c, 0, 0), static_cast<std::size_t>(plane_size())};
}
std::span<float> Tensor::channel(int c) {
  return {data_.data() + index(0, c, 0, 0), static_cast<std::size_t>(n_) * plane_size()};
}
std::span<const float> Tensor::channel(int c) const {
  return {data_.data() + index(0, c, 0, 0), static_cast<std::size_t>(n_) * plane_size()};
}

std::string Tensor::shape_string() const {
  return "[N=" + std::to_string(n_) + ", C=" + std::to_string(c_) + ", H=" + std::to_string(h_) +
         ", W=" + std::to_string(w_) + "]";
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::add(const Tensor& o) {
  if (!same_shape(o)) throw ConfigError("tensor add: shape mismatch " + shape_string() + " vs " + o.shape_string());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
}

Tensor Tensor::slice_batch(int first, int count) const {
  Tensor out(c_, count, h_, w_);
  const std::size_t ps = static_cast<std::size_t>(plane_size());
  for (int c = 0; c < c_; ++c) {
    std::copy_n(data_.data() + index(first, c, 0, 0), ps * count, out.data() + out.index(0, c, 0, 0));
  }
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.batch() != b.batch() || a.height() != b.height() || a.width() != b.width()) {
    throw ConfigError("concat: shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
  Tensor out(a.channels() + b.channels(), a.batch(), a.height(), a.width());
  std::copy(a.values().begin(), a.values().end(), out.values().begin());
  std::copy(b.values().begin(), b.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

void split_channels(const Tensor& g, int channels_a, Tensor& a, Tensor& b) {
  a = Tensor(channels_a, g.batch(), g.height(), g.width());
  b = Tensor(g.channels() - channels_a, g.batch(), g.height(), g.width());
  std::copy_n(g.values().begin(), a.size(), a.values().begin());
  std::copy_n(g.values().begin() + static_cast<std::ptrdiff_t>(a.size()), b.size(), b.values().begin());
}

Tensor upsample2x(const Tensor& x) {
  Tensor out(x.channels(), x.batch(), x.height() * 2, x.width() * 2);
  const int h = x.height();
  const int w = x.width();
  for (int c = 0; c < x.channels(); ++c) {
    for (int n = 0; n < x.batch(); ++n) {
      auto src = x.plane(c, n);
      auto dst = out.plane(c, n);
      for (int y = 0; y < 2 * h; ++y) {
        const float* row = src.data() + static_cast<std::size_t>(y / 2) * w;
        float* o = dst.data() + static_cast<std::size_t>(y) * 2 * w;
        for (int xx = 0; xx < 2 * w; ++xx) o[xx] = row[xx / 2];
      }
    }
  }
  return out;
}

Tensor upsample2x_backward(const Tensor& dy) {
  Tensor out(dy.channels(), dy.batch(), dy.height() / 2, dy.width() / 2);
  const int w = out.width();
  for (int c = 0; c < dy.channels(); ++c) {
    for (int n = 0; n < dy.batch(); ++n) {
      auto src = dy.plane(c, n);
      auto dst = out.plane(c, n);
      for (int y = 0; y < dy.height(); ++y) {
        const float* row = src.data() + static_cast<std::size_t>(y) * dy.width();
        float* o = dst.data() + static_cast<std::size_t>(y / 2) * w;
        for (int xx = 0; xx < dy.width(); ++xx) o[xx / 2] += row[xx];
      }
    }
  }
  return out;
}

Matrix global_avg_pool(const Tensor& x) {
  Matrix out(x.channels(), x.batch());
  const double inv = 1.0 / x.plane_size();
  for (int c = 0; c < x.channels(); ++c) {
    for (int n = 0; n < x.batch(); ++n) {
      double s = 0.0;
      for (float v : x.plane(c, n)) s += v;
      out(c, n) = static_cast<float>(s * inv);
    }
  }
  return out;
}

Tensor global_avg_pool_backward(const Matrix& dpool, int height, int width) {
  Tensor out(dpool.rows, dpool.cols, height, width);
  const float inv = 1.0f / static_cast<float>(height * width);
  for (int c = 0; c < dpool.rows; ++c) {
    for (int n = 0; n < dpool.cols; ++n) {
      const float g = dpool(c, n) * inv;
      for (float& v : out.plane(c, n)) v = g;
    }
  }
  return out;
}

}  // namespace chr::nn
