#pragma once

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include "acconet/layers.hpp"
#include "acconet/schedule.hpp"

namespace acconet::accom {

struct AccomConfig {
  int level = 1;  // 1..5
  int channels = 0;
  int prev_channels = 0;  // width of level t-1 (unused at t = 1)
  int next_channels = 0;  // width of level t+1 (unused at t = 5)
  std::array<int, 4> rates{1, 2, 3, 4};
  int reduction = 16;
  int spatial_kernel = 7;
  bool local_branch = true;
  bool adjacent_branches = true;

  bool has_prev() const { return level > 1; }
  bool has_next() const { return level < kLevels; }
  int hidden_width() const { return std::max(1, channels / reduction); }
};

AccomConfig make_config(const ShapeSchedule& schedule, int level);

/// Spatial global max pooling, FC + ReLU, FC + sigmoid: one weight per
/// channel in (0, 1), returned as (B, C, 1, 1).
class ChannelAttention {
 public:
  struct Trace {
    nn::PoolIndex pool;
    Tensor pooled, hidden, weights;
  };

  ChannelAttention() = default;
  ChannelAttention(const std::string& name, int channels, int hidden);

  Tensor forward(const Tensor& f, Trace* trace) const;
  Tensor backward(const Trace& trace, const Tensor& d_weights);
  void collect(nn::ParameterRefs& refs);
  void init(const nn::InitSpec& spec, nn::Rng& rng);

  int channels() const { return fc2.weight.value.h(); }

  nn::Linear fc1, fc2;
};

/// Channel-wise max pooling followed by a k x k convolution and a sigmoid:
/// a (B, 1, H, W) map in (0, 1). Works for any input width.
class SpatialAttention {
 public:
  struct Trace {
    nn::PoolIndex pool;
    Tensor pooled, map;
  };

  SpatialAttention() = default;
  SpatialAttention(const std::string& name, int kernel);

  Tensor forward(const Tensor& f, Trace* trace) const;
  Tensor backward(const Trace& trace, const Tensor& d_map);
  void collect(nn::ParameterRefs& refs);
  void init(const nn::InitSpec& spec, nn::Rng& rng);

  nn::Conv2d conv;
};

/// Four parallel dilated 3x3 Conv-BN-ReLU units (rates 1..4), concatenated
/// and fused back to c channels by a 3x3 Conv-BN-ReLU.
class DilatedPyramid {
 public:
  struct Trace {
    std::array<nn::ConvBnRelu::Trace, 4> branches;
    nn::ConvBnRelu::Trace fuse;
  };

  DilatedPyramid() = default;
  DilatedPyramid(const std::string& name, const AccomConfig& cfg);

  Tensor forward(const Tensor& f_cur, bool training, Trace* trace);
  Tensor backward(const Trace& trace, const Tensor& d_out);
  void collect(nn::ParameterRefs& refs);
  void init(const nn::InitSpec& spec, nn::Rng& rng);

  std::array<nn::ConvBnRelu, 4> branches;
  nn::ConvBnRelu fuse;

 private:
  int channels_ = 0;
};

enum class Branch { local, previous, subsequent };
std::string to_string(Branch b);

/// One Adjacent Context Coordination Module for level t.
class Accom {
 public:
  struct Trace {
    Tensor f_cur;
    Tensor base;  // f_c, or f_e when the local branch is disabled
    DilatedPyramid::Trace pyramid;
    ChannelAttention::Trace ca;
    Tensor ca_scaled;
    SpatialAttention::Trace sa_local, sa_prev, sa_next;
    nn::PoolIndex down;
    Shape prev_shape, next_shape;
    std::vector<Branch> executed;
  };

  struct Grads {
    Tensor d_prev, d_cur, d_next;
  };

  Accom() = default;
  Accom(const std::string& name, const AccomConfig& cfg);

  /// f_accom = f_loc + f_pc + f_sc + f_e, with the branches present at this
  /// level. prev must be null exactly when t = 1, next exactly when t = 5.
  Tensor forward(const Tensor* prev, const Tensor& cur, const Tensor* next,
                 bool training, Trace* trace);
  Grads backward(const Trace& trace, const Tensor& d_out);

  /// Branches that run at this level under the configured toggles.
  std::vector<Branch> active_branches() const;

  void collect(nn::ParameterRefs& refs);
  void init(const nn::InitSpec& spec, nn::Rng& rng);
  const AccomConfig& config() const { return cfg_; }

  DilatedPyramid pyramid;
  ChannelAttention ca;
  SpatialAttention sa_local, sa_prev, sa_next;

 private:
  AccomConfig cfg_{};
};

/// 2x max-pool of the previous level, spatially attended, gating `base`.
Tensor previous_to_current(const SpatialAttention& sa, const Tensor& f_prev,
                           const Tensor& base,
                           SpatialAttention::Trace* trace = nullptr,
                           nn::PoolIndex* down = nullptr);
/// 2x bilinear upsampling of the next level, spatially attended, gating base.
Tensor subsequent_to_current(const SpatialAttention& sa, const Tensor& f_next,
                             const Tensor& base,
                             SpatialAttention::Trace* trace = nullptr);
/// SA(CA(f_c) (.) f_c) (x) f_c
Tensor local_branch(const ChannelAttention& ca, const SpatialAttention& sa,
                    const Tensor& f_c);

}  // namespace acconet::accom
