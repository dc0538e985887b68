#include "acconet/loss.hpp"

#include <algorithm>
#include <cmath>

namespace acconet::loss {

namespace {

void check_pair(const Tensor& s, const Tensor& g, const char* what) {
  expect_same_shape(s, g, what);
  if (s.c() != 1) {
    throw ShapeError(std::string(what) + ": saliency maps must have one channel, got " +
                     std::to_string(s.c()));
  }
  if (s.empty()) throw ShapeError(std::string(what) + ": empty map");
}

struct Sums {
  double inter = 0, s = 0, g = 0;
};

Sums image_sums(const Tensor& s, const Tensor& g, int n) {
  Sums r;
  const Real* ps = s.plane(n, 0);
  const Real* pg = g.plane(n, 0);
  const std::size_t plane = s.shape().plane();
  for (std::size_t i = 0; i < plane; ++i) {
    r.inter += ps[i] * pg[i];
    r.s += ps[i];
    r.g += pg[i];
  }
  return r;
}

}  // namespace

std::string to_string(LossMode m) {
  switch (m) {
    case LossMode::both:
      return "both";
    case LossMode::bce:
      return "bce";
    case LossMode::iou:
      return "iou";
  }
  return "?";
}

LossMode parse_loss_mode(const std::string& s) {
  if (s == "both") return LossMode::both;
  if (s == "bce") return LossMode::bce;
  if (s == "iou") return LossMode::iou;
  throw std::invalid_argument("unknown loss mode '" + s + "' (expected both|bce|iou)");
}

double bce_loss(const Tensor& s, const Tensor& g) {
  check_pair(s, g, "bce_loss");
  double acc = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    // capping the guarded argument at 1 keeps every pixel term non-negative
    acc -= g[i] * std::log(std::min(1.0, s[i] + kEps)) +
           (1 - g[i]) * std::log(std::min(1.0, 1 - s[i] + kEps));
  }
  return acc / static_cast<double>(s.size());
}

Tensor bce_grad(const Tensor& s, const Tensor& g) {
  check_pair(s, g, "bce_grad");
  Tensor d(s.shape());
  const double inv = 1.0 / static_cast<double>(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double pos = s[i] + kEps < 1.0 ? -g[i] / (s[i] + kEps) : 0.0;
    const double neg = 1 - s[i] + kEps < 1.0 ? (1 - g[i]) / (1 - s[i] + kEps) : 0.0;
    d[i] = (pos + neg) * inv;
  }
  return d;
}

double iou_loss(const Tensor& s, const Tensor& g) {
  check_pair(s, g, "iou_loss");
  double acc = 0;
  for (int n = 0; n < s.n(); ++n) {
    const Sums r = image_sums(s, g, n);
    acc += 1.0 - (r.inter + kEps) / (r.s + r.g - r.inter + kEps);
  }
  return acc / s.n();
}

Tensor iou_grad(const Tensor& s, const Tensor& g) {
  check_pair(s, g, "iou_grad");
  Tensor d(s.shape());
  const std::size_t plane = s.shape().plane();
  for (int n = 0; n < s.n(); ++n) {
    const Sums r = image_sums(s, g, n);
    const double num = r.inter + kEps;
    const double den = r.s + r.g - r.inter + kEps;
    const Real* pg = g.plane(n, 0);
    Real* pd = d.plane(n, 0);
    for (std::size_t i = 0; i < plane; ++i) {
      // d/dS_i of -(num/den): num' = G_i, den' = 1 - G_i
      pd[i] = -(pg[i] * den - num * (1 - pg[i])) / (den * den) / s.n();
    }
  }
  return d;
}

LossBreakdown total_loss(std::span<const Tensor> maps, const Tensor& g,
                         LossMode mode, LevelTensors* grads) {
  if (maps.size() != static_cast<std::size_t>(kLevels)) {
    throw std::invalid_argument("total_loss expects " + std::to_string(kLevels) +
                                " supervised maps, got " + std::to_string(maps.size()));
  }
  LossBreakdown out;
  for (int t = 0; t < kLevels; ++t) {
    const Tensor& s = maps[t];
    Tensor d;
    if (mode != LossMode::iou) {
      out.bce[t] = bce_loss(s, g);
      if (grads) d = bce_grad(s, g);
    }
    if (mode != LossMode::bce) {
      out.iou[t] = iou_loss(s, g);
      if (grads) {
        Tensor di = iou_grad(s, g);
        if (d.empty()) {
          d = std::move(di);
        } else {
          d += di;
        }
      }
    }
    out.total += out.bce[t] + out.iou[t];
    if (grads) (*grads)[t] = std::move(d);
  }
  return out;
}

}  // namespace acconet::loss
