#include "acconet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace acconet {

std::string Shape::str() const {
  std::ostringstream os;
  os << "(" << n << "," << c << "," << h << "," << w << ")";
  return os.str();
}

Tensor::Tensor(Shape shape, Real fill) : shape_(shape) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw ShapeError("negative dimension in shape " + shape.str());
  }
  data_.assign(shape.numel(), fill);
}

void Tensor::fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::reshape(Shape shape) {
  if (shape.numel() != data_.size()) {
    throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  shape_ = shape;
}

Tensor& Tensor::operator+=(const Tensor& other) {
  expect_same_shape(*this, other, "tensor addition");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(Real s) {
  for (auto& v : data_) v *= s;
  return *this;
}

Tensor operator+(Tensor a, const Tensor& b) {
  a += b;
  return a;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  expect_same_shape(a, b, "tensor subtraction");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Tensor operator*(Tensor a, Real s) {
  a *= s;
  return a;
}

void expect_shape(const Tensor& t, const Shape& expected,
                  std::string_view what) {
  const Shape& s = t.shape();
  if (s == expected) return;
  const char* dim = s.n != expected.n   ? "batch"
                    : s.c != expected.c ? "channels"
                    : s.h != expected.h ? "height"
                                        : "width";
  std::ostringstream os;
  os << what << ": " << dim << " mismatch, got " << s.str() << ", expected "
     << expected.str();
  throw ShapeError(os.str());
}

void expect_same_shape(const Tensor& a, const Tensor& b,
                       std::string_view what) {
  expect_shape(b, a.shape(), what);
}

Real max_abs_diff(const Tensor& a, const Tensor& b) {
  expect_same_shape(a, b, "max_abs_diff");
  Real m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.values().begin(), t.values().end(),
                     [](Real v) { return std::isfinite(v); });
}

Real sum(const Tensor& t) {
  Real s = 0;
  for (Real v : t.values()) s += v;
  return s;
}

}  // namespace acconet
