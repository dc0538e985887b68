#pragma once

#include <array>
#include <optional>
#include <string>

#include "acconet/layers.hpp"
#include "acconet/schedule.hpp"

namespace acconet::decoder {

/// How the two bifurcations of a block are built.
///   full        dilated 3x3 convolutions at the per-level rates
///   direct      identity pass-through of the tapped cascade features
///   normal_conv ordinary (rate 1) 3x3 convolutions
///   plain       no bifurcations or aggregation: the block outputs the third
///               cascaded convolution (the plain decoder of the baseline)
enum class BabMode { full, direct, normal_conv, plain };

std::string to_string(BabMode m);
BabMode parse_bab_mode(const std::string& s);

struct BabConfig {
  int level = 5;
  int channels = 0;
  int upstream_channels = 0;  // 0 at level 5
  int rate1 = 3;
  int rate2 = 2;
  int size = 0;  // output spatial size
  BabMode mode = BabMode::full;

  bool has_upstream() const { return level < kLevels; }
};

/// Rates (5, 3) for levels 1..3 and (3, 2) for levels 4..5.
BabConfig make_bab_config(const ShapeSchedule& schedule, int level,
                          BabMode mode = BabMode::full);

/// One Bifurcation-Aggregation Block.
class Bab {
 public:
  struct Trace {
    Tensor upstream;
    nn::BatchNorm2d::Trace deconv_bn;
    Tensor up;  // deconvolved upstream after BN + ReLU
    std::array<nn::ConvBnRelu::Trace, 3> cascade;
    std::array<nn::ConvBnRelu::Trace, 2> bif;
    nn::ConvBnRelu::Trace fuse;
  };
  struct Grads {
    Tensor d_accom, d_upstream;
  };

  Bab() = default;
  Bab(const std::string& name, const BabConfig& cfg);

  /// upstream must be null exactly at level 5.
  Tensor forward(const Tensor& f_accom, const Tensor* upstream, bool training,
                 Trace* trace);
  Grads backward(const Trace& trace, const Tensor& d_out);

  void collect(nn::ParameterRefs& refs);
  void init(const nn::InitSpec& spec, nn::Rng& rng);
  const BabConfig& config() const { return cfg_; }

  nn::Deconv2x2 deconv;
  nn::BatchNorm2d deconv_bn;
  std::array<nn::ConvBnRelu, 3> cascade;
  std::array<nn::ConvBnRelu, 2> bif;
  nn::ConvBnRelu fuse;

 private:
  bool has_bif_convs() const {
    return cfg_.mode == BabMode::full || cfg_.mode == BabMode::normal_conv;
  }
  BabConfig cfg_{};
};

/// 3x3 convolution to one channel, bilinear upsampling to the input
/// resolution, sigmoid.
class SupervisionHead {
 public:
  struct Trace {
    Tensor x;
    Tensor logits;
    Tensor saliency;
  };

  SupervisionHead() = default;
  SupervisionHead(const std::string& name, int channels, int target_size);

  Tensor forward(const Tensor& f_bab, Trace* trace) const;
  Tensor backward(const Trace& trace, const Tensor& d_saliency);
  void collect(nn::ParameterRefs& refs);
  void init(const nn::InitSpec& spec, nn::Rng& rng);

  nn::Conv2d conv;

 private:
  int target_size_ = 0;
};

struct DecoderState {
  LevelTensors f_bab;
  LevelTensors saliency;  // S^1..S^5, each (B, 1, S, S)
  const Tensor& final_map() const { return saliency[0]; }
};

/// BAB-5 .. BAB-1 with deconvolution links and a head on every level.
class Decoder {
 public:
  struct Trace {
    std::array<Bab::Trace, kLevels> bab;
    std::array<SupervisionHead::Trace, kLevels> head;
    std::array<int, kLevels> order{};  // levels in execution order
  };

  Decoder() = default;
  Decoder(const ShapeSchedule& schedule, BabMode mode);

  DecoderState decode(const LevelTensors& accom, bool training, Trace* trace);
  /// d_saliency[t] may be empty for levels without a loss term.
  LevelTensors backward(const Trace& trace, const LevelTensors& d_saliency);

  void collect(nn::ParameterRefs& refs);
  void init(const nn::InitSpec& spec, nn::Rng& rng);

  std::array<Bab, kLevels> babs;
  std::array<SupervisionHead, kLevels> heads;

 private:
  ShapeSchedule schedule_{};
};

}  // namespace acconet::decoder
