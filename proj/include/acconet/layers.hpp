#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "acconet/tensor.hpp"

namespace acconet::nn {

/// A trainable array together with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool touched = false;  // set whenever backward accumulates into grad

  Parameter() = default;
  Parameter(std::string name, Shape shape)
      : name(std::move(name)), value(shape), grad(shape) {}

  void zero_grad() {
    grad.fill(0.0);
    touched = false;
  }
};

/// Non-trainable state saved with the model (normalization statistics).
struct Buffer {
  std::string name;
  Tensor value;
};

struct ParameterRefs {
  std::vector<Parameter*> params;
  std::vector<Buffer*> buffers;
};

using Rng = std::mt19937_64;

/// Weight initialization: zero-mean Gaussian. A non-positive std selects
/// He scaling (sqrt(2 / fan_in)).
struct InitSpec {
  double std = 0.0;
};

void init_gaussian(Parameter& p, int fan_in, const InitSpec& spec, Rng& rng);

// ---------------------------------------------------------------------------
// Convolution

struct ConvSpec {
  int in = 0;
  int out = 0;
  int kernel = 3;
  int dilation = 1;
  int padding = -1;  // -1: "same" padding, dilation * (kernel - 1) / 2
  bool bias = true;
};

/// Stride-1 2-D convolution with optional dilation, computed as im2col
/// followed by a matrix product, tiled over pixels to bound memory.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, ConvSpec spec);

  Tensor forward(const Tensor& x) const;
  /// Accumulates weight/bias gradients and returns d(loss)/dx.
  Tensor backward(const Tensor& x, const Tensor& dy);

  const ConvSpec& spec() const { return spec_; }
  Shape output_shape(const Shape& in) const;
  void collect(ParameterRefs& refs);
  void init(const InitSpec& spec, Rng& rng);

  Parameter weight;  // (out, in, k, k)
  Parameter bias;    // (1, out, 1, 1)

 private:
  ConvSpec spec_{};
  int pad_ = 0;
};

// ---------------------------------------------------------------------------
// Batch normalization

class BatchNorm2d {
 public:
  struct Trace {
    Tensor xhat;
    std::vector<Real> inv_std;
    bool batch_stats = false;
  };

  BatchNorm2d() = default;
  BatchNorm2d(const std::string& name, int channels);

  /// Training mode normalizes with batch statistics and updates the running
  /// estimates; evaluation mode uses the running estimates only.
  Tensor forward(const Tensor& x, bool training, Trace* trace);
  Tensor backward(const Trace& trace, const Tensor& dy);
  void collect(ParameterRefs& refs);

  Parameter gamma;
  Parameter beta;
  Buffer running_mean;
  Buffer running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

// ---------------------------------------------------------------------------
// Conv -> BN -> ReLU, the building block of every added module.

class ConvBnRelu {
 public:
  struct Trace {
    Tensor x;
    BatchNorm2d::Trace bn;
    Tensor y;
  };

  ConvBnRelu() = default;
  ConvBnRelu(const std::string& name, ConvSpec spec);

  Tensor forward(const Tensor& x, bool training, Trace* trace);
  Tensor backward(const Trace& trace, const Tensor& dy);
  void collect(ParameterRefs& refs);
  void init(const InitSpec& spec, Rng& rng);

  Conv2d conv;
  BatchNorm2d bn;
};

/// ConvTranspose with kernel 2 and stride 2: exact 2x spatial upsampling.
class Deconv2x2 {
 public:
  Deconv2x2() = default;
  Deconv2x2(const std::string& name, int in, int out);

  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& x, const Tensor& dy);
  void collect(ParameterRefs& refs);
  void init(const InitSpec& spec, Rng& rng);

  Parameter weight;  // (in, out, 2, 2)
  Parameter bias;    // (1, out, 1, 1)
};

/// Fully connected layer on (B, in, 1, 1) tensors.
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in, int out);

  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& x, const Tensor& dy);
  void collect(ParameterRefs& refs);
  void init(const InitSpec& spec, Rng& rng);

  Parameter weight;  // (1, 1, out, in)
  Parameter bias;    // (1, out, 1, 1)
};

// ---------------------------------------------------------------------------
// Stateless functions

Tensor relu(const Tensor& x);
/// Gradient of ReLU given its output y.
Tensor relu_backward(const Tensor& y, const Tensor& dy);

Tensor sigmoid(const Tensor& x);
Tensor sigmoid_backward(const Tensor& y, const Tensor& dy);

struct PoolIndex {
  std::vector<std::uint32_t> argmax;  // flat input index per output element
  Shape input;
};

/// 2x2 max pooling with stride 2. Input height/width must be even.
Tensor max_pool2(const Tensor& x, PoolIndex* index);
Tensor max_pool2_backward(const PoolIndex& index, const Tensor& dy);

/// Bilinear resampling with half-pixel centers (corner alignment off).
Tensor resize_bilinear(const Tensor& x, int out_h, int out_w);
Tensor resize_bilinear_backward(const Tensor& dy, const Shape& input);

/// Max over channels: (B, C, H, W) -> (B, 1, H, W).
Tensor channel_max(const Tensor& x, PoolIndex* index);
/// Max over space: (B, C, H, W) -> (B, C, 1, 1).
Tensor spatial_max(const Tensor& x, PoolIndex* index);
/// Scatters dy back through a channel_max or spatial_max.
Tensor max_reduce_backward(const PoolIndex& index, const Tensor& dy);

/// y[n,c,h,w] = x[n,c,h,w] * s[n,c]   with s of shape (B, C, 1, 1).
Tensor scale_channels(const Tensor& x, const Tensor& s);
/// y[n,c,h,w] = x[n,c,h,w] * m[n,h,w] with m of shape (B, 1, H, W).
Tensor scale_spatial(const Tensor& x, const Tensor& m);
/// Gradients of scale_channels with respect to x and s.
void scale_channels_backward(const Tensor& x, const Tensor& s,
                             const Tensor& dy, Tensor* dx, Tensor* ds);
void scale_spatial_backward(const Tensor& x, const Tensor& m, const Tensor& dy,
                            Tensor* dx, Tensor* dm);

Tensor concat_channels(const std::vector<const Tensor*>& parts);
/// Splits along channels into pieces of the given widths.
std::vector<Tensor> split_channels(const Tensor& x,
                                   const std::vector<int>& widths);

/// Adds b into a when b is non-empty; an empty a is replaced by b.
void accumulate(Tensor& a, const Tensor& b);

}  // namespace acconet::nn
