#pragma once

#include <string>
#include <vector>

#include "chr/rng.hpp"
#include "chr/tensor.hpp"

namespace chr::nn {

enum class Mode { kTrain, kEval };

/// A named, shaped float32 array. Learnable parameters carry a gradient
/// buffer of the same length; running statistics leave it empty.
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<float> value;
  std::vector<float> grad;
  bool decay = false;  // weight decay applies

  Param() = default;
  Param(std::string n, std::vector<int> s, bool learnable, bool decay_ = false);
  std::size_t numel() const { return value.size(); }
  void zero_grad();
};

struct ConvCache {
  std::vector<float> col;  // im2col matrix, K x (N * Ho * Wo); empty for 1x1 stride-1
  Tensor input;            // kept for 1x1 stride-1 convolutions
  int in_h = 0;
  int in_w = 0;
};

/// 2-D convolution without bias (always followed by normalization here).
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int stride, int pad);

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return k_; }
  int stride() const { return stride_; }
  int output_size(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

  /// He-normal initialization.
  void init(Rng& rng);
  Tensor forward(const Tensor& x, ConvCache* cache) const;
  /// Accumulates the weight gradient; returns dx when `need_dx`.
  Tensor backward(const Tensor& dy, const ConvCache& cache, bool need_dx);

  Param weight;  // [out, in, k, k]

 private:
  int in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
};

struct BatchNormCache {
  Tensor xhat;
  std::vector<float> inv_std;
  Mode mode = Mode::kEval;
};

/// Per-channel batch normalization: batch statistics while training,
/// frozen running estimates in evaluation.
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(const std::string& name, int channels, float momentum = 0.1f, float eps = 1e-5f);

  int channels() const { return static_cast<int>(gamma.numel()); }

  /// Training mode also updates the running statistics.
  Tensor forward_train(const Tensor& x, BatchNormCache* cache);
  Tensor forward_eval(const Tensor& x, BatchNormCache* cache) const;
  Tensor backward(const Tensor& dy, const BatchNormCache& cache);

  Param gamma, beta;
  Param running_mean, running_var;

 private:
  float momentum_ = 0.1f;
  float eps_ = 1e-5f;
};

void relu_inplace(Tensor& x);
/// dy masked by (y > 0).
Tensor relu_backward(const Tensor& dy, const Tensor& y);

struct ConvBnReluCache {
  ConvCache conv;
  BatchNormCache bn;
  Tensor output;
};

/// conv -> batch norm -> ReLU, optionally without the normalization.
class ConvBnRelu {
 public:
  ConvBnRelu() = default;
  ConvBnRelu(const std::string& name, int in_channels, int out_channels, int kernel, int stride, int pad,
             bool normalize = true);

  void init(Rng& rng) { conv.init(rng); }
  Tensor forward(const Tensor& x, Mode mode, ConvBnReluCache* cache);
  /// Evaluation-mode forward that touches no state.
  Tensor infer(const Tensor& x) const;
  Tensor backward(const Tensor& dy, const ConvBnReluCache& cache, bool need_dx);

  bool normalized() const { return normalize_; }
  std::vector<Param*> parameters();
  std::vector<Param*> buffers();

  Conv2d conv;
  BatchNorm2d bn;

 private:
  bool normalize_ = true;
};

/// Fully connected map on column batches: y (out x N) = W x + b.
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in_features, int out_features);

  int in_features() const { return in_; }
  int out_features() const { return out_; }

  void init(Rng& rng);
  Matrix forward(const Matrix& x) const;
  /// Accumulates weight/bias gradients and returns dx.
  Matrix backward(const Matrix& dy, const Matrix& x);

  Param weight;  // [out, in]
  Param bias;    // [out]

 private:
  int in_ = 0, out_ = 0;
};

}  // namespace chr::nn
