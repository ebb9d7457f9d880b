#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace chr::nn {

/// Batch of feature maps, stored channel-major: element (n, c, y, x) lives at
/// ((c * N + n) * H + y) * W + x. One channel's values across the whole batch
/// are contiguous, so a convolution's GEMM output is already in this layout
/// and per-channel normalization statistics read one contiguous span.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int channels, int batch, int height, int width, float fill = 0.0f);

  int channels() const { return c_; }
  int batch() const { return n_; }
  int height() const { return h_; }
  int width() const { return w_; }
  int plane_size() const { return h_ * w_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::vector<float>& values() { return data_; }
  const std::vector<float>& values() const { return data_; }

  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(c) * n_ + n) * h_ + y) * w_ + x;
  }
  float& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  float at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

  /// H*W values of sample n, channel c.
  std::span<float> plane(int c, int n);
  std::span<const float> plane(int c, int n) const;
  /// N*H*W values of channel c.
  std::span<float> channel(int c);
  std::span<const float> channel(int c) const;

  bool same_shape(const Tensor& o) const { return c_ == o.c_ && n_ == o.n_ && h_ == o.h_ && w_ == o.w_; }
  std::string shape_string() const;

  void fill(float v);
  /// Element-wise accumulate; shapes must agree.
  void add(const Tensor& o);

  /// Samples [first, first + count) as a new tensor.
  Tensor slice_batch(int first, int count) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  int c_ = 0, n_ = 0, h_ = 0, w_ = 0;
  std::vector<float> data_;
};

/// Row-major dense matrix.
template <typename T>
struct BasicMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  BasicMatrix() = default;
  BasicMatrix(int r, int c, T fill = T{}) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}
  T& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  T operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  friend bool operator==(const BasicMatrix&, const BasicMatrix&) = default;
};

using Matrix = BasicMatrix<float>;
using MatrixD = BasicMatrix<double>;

/// Concatenates along channels; batch and spatial dims must agree.
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Inverse of concat_channels for gradients: first `channels_a` channels to `a`.
void split_channels(const Tensor& g, int channels_a, Tensor& a, Tensor& b);

/// Nearest-neighbour x2 upsampling and its adjoint.
Tensor upsample2x(const Tensor& x);
Tensor upsample2x_backward(const Tensor& dy);

/// Global average pooling: result(c, n) = mean over the plane.
Matrix global_avg_pool(const Tensor& x);
/// Spreads dpool(c, n) / (H*W) over every position of the plane.
Tensor global_avg_pool_backward(const Matrix& dpool, int height, int width);

}  // namespace chr::nn
