#pragma once

#include <array>

#include "acconet/tensor.hpp"

namespace acconet {

inline constexpr int kLevels = 5;

/// Per-level channel widths and the input resolution. Level t (1-based) has
/// spatial size input_size / 2^(t-1).
struct ShapeSchedule {
  int input_size = 256;
  std::array<int, kLevels> channels{64, 128, 256, 512, 512};

  static ShapeSchedule standard() { return {}; }
  /// Scaled-down schedule for gradient checks and fast tests.
  static ShapeSchedule micro() { return {64, {8, 16, 32, 64, 64}}; }

  int channels_at(int level) const { return channels.at(level - 1); }
  int size_at(int level) const { return input_size >> (level - 1); }
  Shape feature_shape(int level, int batch) const {
    return {batch, channels_at(level), size_at(level), size_at(level)};
  }
  Shape input_shape(int batch) const {
    return {batch, 3, input_size, input_size};
  }
  /// Throws std::invalid_argument unless every level has a positive
  /// integral size.
  void validate() const;

  bool operator==(const ShapeSchedule&) const = default;
};

/// One tensor per level; index 0 holds level 1.
using LevelTensors = std::array<Tensor, kLevels>;

}  // namespace acconet
