#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace acconet {

using Real = double;

/// Raised when a tensor does not have the shape an operation requires.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a module is called with the wrong set of optional inputs
/// for its level (e.g. a previous-level feature at the first level).
class DispatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Dense NCHW array of doubles with value semantics.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = 0.0);
  Tensor(int n, int c, int h, int w, Real fill = 0.0)
      : Tensor(Shape{n, c, h, w}, fill) {}

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }
  std::span<Real> values() & { return data_; }
  std::span<const Real> values() const& { return data_; }
  // a span into a temporary would dangle by the end of the full expression
  std::span<const Real> values() && = delete;

  std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) *
               shape_.w + w;
  }
  Real& at(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
  Real at(int n, int c, int h, int w) const {
    return data_[index(n, c, h, w)];
  }
  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  Real* plane(int n, int c) { return data_.data() + index(n, c, 0, 0); }
  const Real* plane(int n, int c) const {
    return data_.data() + index(n, c, 0, 0);
  }

  void fill(Real v);
  /// Reinterprets the buffer under a new shape with the same element count.
  void reshape(Shape shape);

  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(Real s);

 private:
  Shape shape_{};
  std::vector<Real> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(Tensor a, Real s);

/// Throws ShapeError naming the first mismatching dimension.
void expect_shape(const Tensor& t, const Shape& expected, std::string_view what);
void expect_same_shape(const Tensor& a, const Tensor& b, std::string_view what);

Real max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);
Real sum(const Tensor& t);

}  // namespace acconet
