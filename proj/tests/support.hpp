#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "acconet/layers.hpp"
#include "acconet/tensor.hpp"

namespace testing_support {

using acconet::Shape;
using acconet::Tensor;
namespace fs = std::filesystem;

/// Seeded generator for test inputs.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }
  double normal(double std = 1.0) { return std::normal_distribution<double>(0.0, std)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return uniform() < p; }

  Tensor normal_tensor(Shape s, double std = 1.0) {
    Tensor t(s);
    for (auto& v : t.values()) v = normal(std);
    return t;
  }
  Tensor uniform_tensor(Shape s, double lo = 0.0, double hi = 1.0) {
    Tensor t(s);
    for (auto& v : t.values()) v = uniform(lo, hi);
    return t;
  }
  /// Binary mask with a random rectangle of foreground, possibly empty or
  /// full when allow_degenerate is set.
  Tensor mask(int h, int w, bool allow_degenerate = false) {
    Tensor t(1, 1, h, w);
    if (allow_degenerate) {
      const int kind = integer(0, 9);
      if (kind == 0) return t;
      if (kind == 1) {
        t.fill(1.0);
        return t;
      }
    }
    const int r0 = integer(0, h - 1), c0 = integer(0, w - 1);
    const int r1 = integer(r0, h - 1), c1 = integer(c0, w - 1);
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c) t.at(0, 0, r, c) = 1.0;
    // sprinkle a few isolated pixels so the masks are not all convex
    for (int k = integer(0, 4); k > 0; --k) t.at(0, 0, integer(0, h - 1), integer(0, w - 1)) = 1.0;
    return t;
  }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

/// Draws every parameter and normalization statistic at random so that no
/// term of a computation is trivially zero or one.
inline void randomize(acconet::nn::ParameterRefs refs, Gen& gen) {
  for (acconet::nn::Parameter* p : refs.params)
    for (auto& v : p->value.values()) v = gen.normal(0.5);
  for (acconet::nn::Buffer* b : refs.buffers)
    for (auto& v : b->value.values())
      v = b->name.ends_with("running_var") ? gen.uniform(0.5, 1.5) : gen.normal(0.3);
}

template <class M>
acconet::nn::ParameterRefs refs_of(M& m) {
  acconet::nn::ParameterRefs r;
  m.collect(r);
  return r;
}

/// Relative error with the denominator floored, so that gradients which are
/// analytically zero are judged by their absolute deviation instead.
inline double rel_err(double a, double n, double floor = 1e-4) {
  return std::fabs(a - n) / std::max({std::fabs(a), std::fabs(n), floor});
}

/// Central difference of f with respect to v.
inline double central_diff(const std::function<double()>& f, double& v, double h = 1e-6) {
  const double keep = v;
  v = keep + h;
  const double up = f();
  v = keep - h;
  const double down = f();
  v = keep;
  return (up - down) / (2 * h);
}

/// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = fs::temp_directory_path() /
            ("acconet_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

/// Writes `count` image/mask pairs of a bright disc on a noisy background
/// into <root>/<split>/{images,gt}.
void write_synthetic_split(const fs::path& root, const std::string& split, int count,
                           int size, std::uint64_t seed);

}  // namespace testing_support
