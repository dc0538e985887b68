#pragma once

#include <array>
#include <span>
#include <string>

#include "acconet/schedule.hpp"
#include "acconet/tensor.hpp"

namespace acconet::loss {

/// Guards the logarithms and the empty-union case.
inline constexpr double kEps = 1e-7;

enum class LossMode { both, bce, iou };
std::string to_string(LossMode m);
LossMode parse_loss_mode(const std::string& s);

/// Mean over all pixels of -[G log(S + eps) + (1 - G) log(1 - S + eps)], with
/// each guarded argument capped at 1.
double bce_loss(const Tensor& s, const Tensor& g);
/// d(bce_loss)/dS.
Tensor bce_grad(const Tensor& s, const Tensor& g);

/// Per image 1 - (sum SG + eps) / (sum S + sum G - sum SG + eps), averaged
/// over the batch.
double iou_loss(const Tensor& s, const Tensor& g);
Tensor iou_grad(const Tensor& s, const Tensor& g);

struct LossBreakdown {
  std::array<double, kLevels> bce{};  // zero for inactive terms
  std::array<double, kLevels> iou{};
  double total = 0.0;
};

/// Unweighted sum of the active terms over the five supervised maps. When
/// grads is given it receives d(total)/dS^t for every level.
LossBreakdown total_loss(std::span<const Tensor> maps, const Tensor& g,
                         LossMode mode = LossMode::both,
                         LevelTensors* grads = nullptr);

}  // namespace acconet::loss
