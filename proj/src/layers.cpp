#include "acconet/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace acconet::nn {

namespace {

using RowMat =
    Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

// Upper bound on im2col tile size, in elements.
constexpr std::size_t kColumnBudget = std::size_t{1} << 20;

struct ConvGeometry {
  int in_c, in_h, in_w;
  int out_h, out_w;
  int kernel, dilation, pad;
};

// Gathers the receptive fields of output pixels [p0, p0 + count) of image n
// into a (in_c * k * k) x count row-major matrix.
void im2col(const Real* image, const ConvGeometry& g, int p0, int count,
            Real* col) {
  const int k = g.kernel;
  for (int ci = 0; ci < g.in_c; ++ci) {
    const Real* plane = image + static_cast<std::size_t>(ci) * g.in_h * g.in_w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        Real* dst = col + static_cast<std::size_t>((ci * k + ki) * k + kj) * count;
        const int dy = ki * g.dilation - g.pad;
        const int dx = kj * g.dilation - g.pad;
        int q = 0;
        int p = p0;
        while (q < count) {
          const int oy = p / g.out_w;
          const int ox = p % g.out_w;
          const int run = std::min(g.out_w - ox, count - q);
          const int iy = oy + dy;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(dst + q, dst + q + run, 0.0);
          } else {
            const Real* src = plane + static_cast<std::size_t>(iy) * g.in_w;
            for (int t = 0; t < run; ++t) {
              const int ix = ox + t + dx;
              dst[q + t] = (ix >= 0 && ix < g.in_w) ? src[ix] : 0.0;
            }
          }
          q += run;
          p += run;
        }
      }
    }
  }
}

void col2im(const Real* col, const ConvGeometry& g, int p0, int count,
            Real* image) {
  const int k = g.kernel;
  for (int ci = 0; ci < g.in_c; ++ci) {
    Real* plane = image + static_cast<std::size_t>(ci) * g.in_h * g.in_w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const Real* src =
            col + static_cast<std::size_t>((ci * k + ki) * k + kj) * count;
        const int dy = ki * g.dilation - g.pad;
        const int dx = kj * g.dilation - g.pad;
        int q = 0;
        int p = p0;
        while (q < count) {
          const int oy = p / g.out_w;
          const int ox = p % g.out_w;
          const int run = std::min(g.out_w - ox, count - q);
          const int iy = oy + dy;
          if (iy >= 0 && iy < g.in_h) {
            Real* dst = plane + static_cast<std::size_t>(iy) * g.in_w;
            for (int t = 0; t < run; ++t) {
              const int ix = ox + t + dx;
              if (ix >= 0 && ix < g.in_w) dst[ix] += src[q + t];
            }
          }
          q += run;
          p += run;
        }
      }
    }
  }
}

}  // namespace

void init_gaussian(Parameter& p, int fan_in, const InitSpec& spec, Rng& rng) {
  const double std =
      spec.std > 0.0 ? spec.std : std::sqrt(2.0 / std::max(1, fan_in));
  std::normal_distribution<double> dist(0.0, std);
  for (Real& v : p.value.values()) v = dist(rng);
}

// ---------------------------------------------------------------------------

Conv2d::Conv2d(const std::string& name, ConvSpec spec) : spec_(spec) {
  if (spec.in <= 0 || spec.out <= 0 || spec.kernel <= 0 || spec.dilation <= 0) {
    throw ShapeError("conv " + name + ": invalid specification");
  }
  pad_ = spec.padding >= 0 ? spec.padding
                           : spec.dilation * (spec.kernel - 1) / 2;
  weight = Parameter(name + ".weight",
                     Shape{spec.out, spec.in, spec.kernel, spec.kernel});
  if (spec.bias) bias = Parameter(name + ".bias", Shape{1, spec.out, 1, 1});
}

Shape Conv2d::output_shape(const Shape& in) const {
  const int span = spec_.dilation * (spec_.kernel - 1);
  return Shape{in.n, spec_.out, in.h + 2 * pad_ - span,
               in.w + 2 * pad_ - span};
}

Tensor Conv2d::forward(const Tensor& x) const {
  if (x.c() != spec_.in) {
    throw ShapeError("conv " + weight.name + ": channels mismatch, got " +
                     std::to_string(x.c()) + ", expected " +
                     std::to_string(spec_.in));
  }
  const Shape os = output_shape(x.shape());
  Tensor y(os);
  const ConvGeometry g{x.c(), x.h(), x.w(), os.h, os.w, spec_.kernel,
                       spec_.dilation, pad_};
  const int rows = spec_.in * spec_.kernel * spec_.kernel;
  const int pixels = os.h * os.w;
  const int tile = static_cast<int>(std::clamp<std::size_t>(
      kColumnBudget / rows, 1, static_cast<std::size_t>(pixels)));
  std::vector<Real> col(static_cast<std::size_t>(rows) * tile);
  ConstMap wm(weight.value.data(), spec_.out, rows);
  for (int n = 0; n < x.n(); ++n) {
    for (int p0 = 0; p0 < pixels; p0 += tile) {
      const int count = std::min(tile, pixels - p0);
      im2col(x.plane(n, 0), g, p0, count, col.data());
      ConstMap cm(col.data(), rows, count);
      StridedMap ym(y.plane(n, 0) + p0, spec_.out, count,
                    Eigen::OuterStride<>(pixels));
      ym.noalias() = wm * cm;
    }
    if (spec_.bias) {
      for (int c = 0; c < spec_.out; ++c) {
        Real* py = y.plane(n, c);
        const Real b = bias.value[c];
        for (int p = 0; p < pixels; ++p) py[p] += b;
      }
    }
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& x, const Tensor& dy) {
  const Shape os = output_shape(x.shape());
  expect_shape(dy, os, "conv " + weight.name + " backward");
  Tensor dx(x.shape());
  const ConvGeometry g{x.c(), x.h(), x.w(), os.h, os.w, spec_.kernel,
                       spec_.dilation, pad_};
  const int rows = spec_.in * spec_.kernel * spec_.kernel;
  const int pixels = os.h * os.w;
  const int tile = static_cast<int>(std::clamp<std::size_t>(
      kColumnBudget / rows, 1, static_cast<std::size_t>(pixels)));
  std::vector<Real> col(static_cast<std::size_t>(rows) * tile);
  std::vector<Real> dcol(col.size());
  ConstMap wm(weight.value.data(), spec_.out, rows);
  MutMap dwm(weight.grad.data(), spec_.out, rows);
  for (int n = 0; n < x.n(); ++n) {
    for (int p0 = 0; p0 < pixels; p0 += tile) {
      const int count = std::min(tile, pixels - p0);
      im2col(x.plane(n, 0), g, p0, count, col.data());
      ConstMap cm(col.data(), rows, count);
      ConstStridedMap dym(dy.plane(n, 0) + p0, spec_.out, count,
                          Eigen::OuterStride<>(pixels));
      dwm.noalias() += dym * cm.transpose();
      MutMap dcm(dcol.data(), rows, count);
      dcm.noalias() = wm.transpose() * dym;
      col2im(dcol.data(), g, p0, count, dx.plane(n, 0));
    }
    if (spec_.bias) {
      for (int c = 0; c < spec_.out; ++c) {
        const Real* pd = dy.plane(n, c);
        Real s = 0;
        for (int p = 0; p < pixels; ++p) s += pd[p];
        bias.grad[c] += s;
      }
    }
  }
  weight.touched = true;
  if (spec_.bias) bias.touched = true;
  return dx;
}

void Conv2d::collect(ParameterRefs& refs) {
  refs.params.push_back(&weight);
  if (spec_.bias) refs.params.push_back(&bias);
}

void Conv2d::init(const InitSpec& spec, Rng& rng) {
  init_gaussian(weight, spec_.in * spec_.kernel * spec_.kernel, spec, rng);
  if (spec_.bias) bias.value.fill(0.0);
}

// ---------------------------------------------------------------------------

BatchNorm2d::BatchNorm2d(const std::string& name, int channels)
    : gamma(name + ".gamma", Shape{1, channels, 1, 1}),
      beta(name + ".beta", Shape{1, channels, 1, 1}),
      running_mean{name + ".running_mean", Tensor(1, channels, 1, 1, 0.0)},
      running_var{name + ".running_var", Tensor(1, channels, 1, 1, 1.0)} {
  gamma.value.fill(1.0);
}

Tensor BatchNorm2d::forward(const Tensor& x, bool training, Trace* trace) {
  const int channels = gamma.value.c();
  if (x.c() != channels) {
    throw ShapeError("batch norm " + gamma.name + ": channels mismatch, got " +
                     std::to_string(x.c()) + ", expected " +
                     std::to_string(channels));
  }
  const std::size_t plane = x.shape().plane();
  const double count = static_cast<double>(plane) * x.n();
  Tensor y(x.shape());
  std::vector<Real> inv_std(channels);
  Tensor xhat = trace ? Tensor(x.shape()) : Tensor();
  for (int c = 0; c < channels; ++c) {
    Real mean, var;
    if (training) {
      Real s = 0;
      for (int n = 0; n < x.n(); ++n) {
        const Real* px = x.plane(n, c);
        for (std::size_t p = 0; p < plane; ++p) s += px[p];
      }
      mean = s / count;
      Real sq = 0;
      for (int n = 0; n < x.n(); ++n) {
        const Real* px = x.plane(n, c);
        for (std::size_t p = 0; p < plane; ++p) {
          const Real d = px[p] - mean;
          sq += d * d;
        }
      }
      var = sq / count;
      const Real unbiased = count > 1 ? sq / (count - 1) : var;
      running_mean.value[c] =
          (1 - momentum) * running_mean.value[c] + momentum * mean;
      running_var.value[c] =
          (1 - momentum) * running_var.value[c] + momentum * unbiased;
    } else {
      mean = running_mean.value[c];
      var = running_var.value[c];
    }
    const Real is = 1.0 / std::sqrt(var + eps);
    inv_std[c] = is;
    const Real g = gamma.value[c];
    const Real b = beta.value[c];
    for (int n = 0; n < x.n(); ++n) {
      const Real* px = x.plane(n, c);
      Real* py = y.plane(n, c);
      Real* ph = trace ? xhat.plane(n, c) : nullptr;
      for (std::size_t p = 0; p < plane; ++p) {
        const Real h = (px[p] - mean) * is;
        if (ph) ph[p] = h;
        py[p] = g * h + b;
      }
    }
  }
  if (trace) {
    trace->xhat = std::move(xhat);
    trace->inv_std = std::move(inv_std);
    trace->batch_stats = training;
  }
  return y;
}

Tensor BatchNorm2d::backward(const Trace& trace, const Tensor& dy) {
  const Tensor& xhat = trace.xhat;
  expect_same_shape(xhat, dy, "batch norm " + gamma.name + " backward");
  const int channels = gamma.value.c();
  const std::size_t plane = dy.shape().plane();
  const double count = static_cast<double>(plane) * dy.n();
  Tensor dx(dy.shape());
  for (int c = 0; c < channels; ++c) {
    Real sum_dy = 0, sum_dy_xhat = 0;
    for (int n = 0; n < dy.n(); ++n) {
      const Real* pd = dy.plane(n, c);
      const Real* ph = xhat.plane(n, c);
      for (std::size_t p = 0; p < plane; ++p) {
        sum_dy += pd[p];
        sum_dy_xhat += pd[p] * ph[p];
      }
    }
    gamma.grad[c] += sum_dy_xhat;
    beta.grad[c] += sum_dy;
    const Real g = gamma.value[c];
    const Real is = trace.inv_std[c];
    for (int n = 0; n < dy.n(); ++n) {
      const Real* pd = dy.plane(n, c);
      const Real* ph = xhat.plane(n, c);
      Real* px = dx.plane(n, c);
      if (trace.batch_stats) {
        const Real k = g * is / count;
        for (std::size_t p = 0; p < plane; ++p) {
          px[p] = k * (count * pd[p] - sum_dy - ph[p] * sum_dy_xhat);
        }
      } else {
        for (std::size_t p = 0; p < plane; ++p) px[p] = g * is * pd[p];
      }
    }
  }
  gamma.touched = beta.touched = true;
  return dx;
}

void BatchNorm2d::collect(ParameterRefs& refs) {
  refs.params.push_back(&gamma);
  refs.params.push_back(&beta);
  refs.buffers.push_back(&running_mean);
  refs.buffers.push_back(&running_var);
}

// ---------------------------------------------------------------------------

ConvBnRelu::ConvBnRelu(const std::string& name, ConvSpec spec)
    : conv(name + ".conv", spec), bn(name + ".bn", spec.out) {}

Tensor ConvBnRelu::forward(const Tensor& x, bool training, Trace* trace) {
  Tensor z = conv.forward(x);
  Tensor y = relu(bn.forward(z, training, trace ? &trace->bn : nullptr));
  if (trace) {
    trace->x = x;
    trace->y = y;
  }
  return y;
}

Tensor ConvBnRelu::backward(const Trace& trace, const Tensor& dy) {
  Tensor dz = bn.backward(trace.bn, relu_backward(trace.y, dy));
  return conv.backward(trace.x, dz);
}

void ConvBnRelu::collect(ParameterRefs& refs) {
  conv.collect(refs);
  bn.collect(refs);
}

void ConvBnRelu::init(const InitSpec& spec, Rng& rng) { conv.init(spec, rng); }

// ---------------------------------------------------------------------------

Deconv2x2::Deconv2x2(const std::string& name, int in, int out)
    : weight(name + ".weight", Shape{in, out, 2, 2}),
      bias(name + ".bias", Shape{1, out, 1, 1}) {}

Tensor Deconv2x2::forward(const Tensor& x) const {
  const int in = weight.value.n();
  const int out = weight.value.c();
  if (x.c() != in) {
    throw ShapeError("deconv " + weight.name + ": channels mismatch, got " +
                     std::to_string(x.c()) + ", expected " +
                     std::to_string(in));
  }
  const int h = x.h(), w = x.w(), pixels = h * w;
  Tensor y(x.n(), out, 2 * h, 2 * w);
  ConstMap wm(weight.value.data(), in, out * 4);
  RowMat z(out * 4, pixels);
  for (int n = 0; n < x.n(); ++n) {
    ConstMap xm(x.plane(n, 0), in, pixels);
    z.noalias() = wm.transpose() * xm;
    for (int co = 0; co < out; ++co) {
      Real* py = y.plane(n, co);
      const Real b = bias.value[co];
      for (int a = 0; a < 2; ++a) {
        for (int bb = 0; bb < 2; ++bb) {
          const Real* pz = z.data() + static_cast<std::size_t>(co * 4 + a * 2 + bb) * pixels;
          for (int i = 0; i < h; ++i) {
            Real* row = py + static_cast<std::size_t>(2 * i + a) * 2 * w + bb;
            for (int j = 0; j < w; ++j) row[2 * j] = pz[i * w + j] + b;
          }
        }
      }
    }
  }
  return y;
}

Tensor Deconv2x2::backward(const Tensor& x, const Tensor& dy) {
  const int in = weight.value.n();
  const int out = weight.value.c();
  const int h = x.h(), w = x.w(), pixels = h * w;
  expect_shape(dy, Shape{x.n(), out, 2 * h, 2 * w},
               "deconv " + weight.name + " backward");
  Tensor dx(x.shape());
  ConstMap wm(weight.value.data(), in, out * 4);
  MutMap dwm(weight.grad.data(), in, out * 4);
  RowMat dz(out * 4, pixels);
  for (int n = 0; n < x.n(); ++n) {
    for (int co = 0; co < out; ++co) {
      const Real* pd = dy.plane(n, co);
      Real bsum = 0;
      for (int a = 0; a < 2; ++a) {
        for (int bb = 0; bb < 2; ++bb) {
          Real* pz = dz.data() + static_cast<std::size_t>(co * 4 + a * 2 + bb) * pixels;
          for (int i = 0; i < h; ++i) {
            const Real* row = pd + static_cast<std::size_t>(2 * i + a) * 2 * w + bb;
            for (int j = 0; j < w; ++j) {
              pz[i * w + j] = row[2 * j];
              bsum += row[2 * j];
            }
          }
        }
      }
      bias.grad[co] += bsum;
    }
    ConstMap xm(x.plane(n, 0), in, pixels);
    dwm.noalias() += xm * dz.transpose();
    MutMap dxm(dx.plane(n, 0), in, pixels);
    dxm.noalias() = wm * dz;
  }
  weight.touched = bias.touched = true;
  return dx;
}

void Deconv2x2::collect(ParameterRefs& refs) {
  refs.params.push_back(&weight);
  refs.params.push_back(&bias);
}

void Deconv2x2::init(const InitSpec& spec, Rng& rng) {
  // Each output pixel receives exactly one tap per input channel.
  init_gaussian(weight, weight.value.n(), spec, rng);
  bias.value.fill(0.0);
}

// ---------------------------------------------------------------------------

Linear::Linear(const std::string& name, int in, int out)
    : weight(name + ".weight", Shape{1, 1, out, in}),
      bias(name + ".bias", Shape{1, out, 1, 1}) {}

Tensor Linear::forward(const Tensor& x) const {
  const int out = weight.value.h(), in = weight.value.w();
  if (x.c() * x.h() * x.w() != in) {
    throw ShapeError("linear " + weight.name + ": features mismatch, got " +
                     std::to_string(x.c() * x.h() * x.w()) + ", expected " +
                     std::to_string(in));
  }
  Tensor y(x.n(), out, 1, 1);
  ConstMap xm(x.data(), x.n(), in);
  ConstMap wm(weight.value.data(), out, in);
  MutMap ym(y.data(), x.n(), out);
  ym.noalias() = xm * wm.transpose();
  for (int n = 0; n < x.n(); ++n)
    for (int o = 0; o < out; ++o) ym(n, o) += bias.value[o];
  return y;
}

Tensor Linear::backward(const Tensor& x, const Tensor& dy) {
  const int out = weight.value.h(), in = weight.value.w();
  Tensor dx(x.shape());
  ConstMap xm(x.data(), x.n(), in);
  ConstMap wm(weight.value.data(), out, in);
  ConstMap dym(dy.data(), x.n(), out);
  MutMap dwm(weight.grad.data(), out, in);
  dwm.noalias() += dym.transpose() * xm;
  MutMap dxm(dx.data(), x.n(), in);
  dxm.noalias() = dym * wm;
  for (int n = 0; n < x.n(); ++n)
    for (int o = 0; o < out; ++o) bias.grad[o] += dym(n, o);
  weight.touched = bias.touched = true;
  return dx;
}

void Linear::collect(ParameterRefs& refs) {
  refs.params.push_back(&weight);
  refs.params.push_back(&bias);
}

void Linear::init(const InitSpec& spec, Rng& rng) {
  init_gaussian(weight, weight.value.w(), spec, rng);
  bias.value.fill(0.0);
}

// ---------------------------------------------------------------------------

Tensor relu(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0 ? x[i] : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& y, const Tensor& dy) {
  expect_same_shape(y, dy, "relu backward");
  Tensor dx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = y[i] > 0 ? dy[i] : 0.0;
  return dx;
}

Tensor sigmoid(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Real v = x[i];
    // Split on sign so exp never overflows.
    if (v >= 0) {
      y[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const Real e = std::exp(v);
      y[i] = e / (1.0 + e);
    }
  }
  return y;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& dy) {
  expect_same_shape(y, dy, "sigmoid backward");
  Tensor dx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * y[i] * (1 - y[i]);
  return dx;
}

Tensor max_pool2(const Tensor& x, PoolIndex* index) {
  if (x.h() % 2 != 0 || x.w() % 2 != 0) {
    throw ShapeError("max_pool2: spatial size " + x.shape().str() +
                     " is not divisible by 2");
  }
  const int oh = x.h() / 2, ow = x.w() / 2;
  Tensor y(x.n(), x.c(), oh, ow);
  if (index) {
    index->argmax.resize(y.size());
    index->input = x.shape();
  }
  std::size_t o = 0;
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j, ++o) {
          std::size_t best = x.index(n, c, 2 * i, 2 * j);
          for (int a = 0; a < 2; ++a) {
            for (int b = 0; b < 2; ++b) {
              const std::size_t k = x.index(n, c, 2 * i + a, 2 * j + b);
              if (x[k] > x[best]) best = k;
            }
          }
          y[o] = x[best];
          if (index) index->argmax[o] = static_cast<std::uint32_t>(best);
        }
      }
    }
  }
  return y;
}

Tensor max_pool2_backward(const PoolIndex& index, const Tensor& dy) {
  return max_reduce_backward(index, dy);
}

namespace {

struct Taps {
  std::vector<int> lo, hi;
  std::vector<Real> wlo, whi;
};

Taps bilinear_taps(int in, int out) {
  Taps t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.wlo.resize(out);
  t.whi.resize(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int i0 = static_cast<int>(src);
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = i0 < in - 1 ? i0 + 1 : i0;
    const double l1 = src - i0;
    t.lo[o] = i0;
    t.hi[o] = i1;
    t.wlo[o] = 1.0 - l1;
    t.whi[o] = l1;
  }
  return t;
}

}  // namespace

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0 || x.h() <= 0 || x.w() <= 0) {
    throw ShapeError("resize_bilinear: empty spatial size");
  }
  const Taps ty = bilinear_taps(x.h(), out_h);
  const Taps tx = bilinear_taps(x.w(), out_w);
  Tensor y(x.n(), x.c(), out_h, out_w);
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const Real* px = x.plane(n, c);
      Real* py = y.plane(n, c);
      for (int i = 0; i < out_h; ++i) {
        const Real* r0 = px + static_cast<std::size_t>(ty.lo[i]) * x.w();
        const Real* r1 = px + static_cast<std::size_t>(ty.hi[i]) * x.w();
        for (int j = 0; j < out_w; ++j) {
          const Real top = tx.wlo[j] * r0[tx.lo[j]] + tx.whi[j] * r0[tx.hi[j]];
          const Real bot = tx.wlo[j] * r1[tx.lo[j]] + tx.whi[j] * r1[tx.hi[j]];
          py[i * out_w + j] = ty.wlo[i] * top + ty.whi[i] * bot;
        }
      }
    }
  }
  return y;
}

Tensor resize_bilinear_backward(const Tensor& dy, const Shape& input) {
  const Taps ty = bilinear_taps(input.h, dy.h());
  const Taps tx = bilinear_taps(input.w, dy.w());
  Tensor dx(input);
  for (int n = 0; n < dy.n(); ++n) {
    for (int c = 0; c < dy.c(); ++c) {
      const Real* pd = dy.plane(n, c);
      Real* px = dx.plane(n, c);
      for (int i = 0; i < dy.h(); ++i) {
        Real* r0 = px + static_cast<std::size_t>(ty.lo[i]) * input.w;
        Real* r1 = px + static_cast<std::size_t>(ty.hi[i]) * input.w;
        for (int j = 0; j < dy.w(); ++j) {
          const Real g = pd[i * dy.w() + j];
          const Real gt = ty.wlo[i] * g, gb = ty.whi[i] * g;
          r0[tx.lo[j]] += tx.wlo[j] * gt;
          r0[tx.hi[j]] += tx.whi[j] * gt;
          r1[tx.lo[j]] += tx.wlo[j] * gb;
          r1[tx.hi[j]] += tx.whi[j] * gb;
        }
      }
    }
  }
  return dx;
}

Tensor channel_max(const Tensor& x, PoolIndex* index) {
  Tensor y(x.n(), 1, x.h(), x.w(), -std::numeric_limits<Real>::infinity());
  if (index) {
    index->argmax.assign(y.size(), 0);
    index->input = x.shape();
  }
  const std::size_t plane = x.shape().plane();
  for (int n = 0; n < x.n(); ++n) {
    Real* py = y.plane(n, 0);
    for (int c = 0; c < x.c(); ++c) {
      const Real* px = x.plane(n, c);
      for (std::size_t p = 0; p < plane; ++p) {
        if (px[p] > py[p] || c == 0) {
          py[p] = px[p];
          if (index) {
            index->argmax[n * plane + p] =
                static_cast<std::uint32_t>(x.index(n, c, 0, 0) + p);
          }
        }
      }
    }
  }
  return y;
}

Tensor spatial_max(const Tensor& x, PoolIndex* index) {
  Tensor y(x.n(), x.c(), 1, 1);
  if (index) {
    index->argmax.resize(y.size());
    index->input = x.shape();
  }
  const std::size_t plane = x.shape().plane();
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const Real* px = x.plane(n, c);
      std::size_t best = 0;
      for (std::size_t p = 1; p < plane; ++p)
        if (px[p] > px[best]) best = p;
      const std::size_t o = static_cast<std::size_t>(n) * x.c() + c;
      y[o] = px[best];
      if (index) {
        index->argmax[o] =
            static_cast<std::uint32_t>(x.index(n, c, 0, 0) + best);
      }
    }
  }
  return y;
}

Tensor max_reduce_backward(const PoolIndex& index, const Tensor& dy) {
  if (index.argmax.size() != dy.size()) {
    throw ShapeError("max backward: gradient " + dy.shape().str() +
                     " does not match the recorded reduction");
  }
  Tensor dx(index.input);
  for (std::size_t i = 0; i < dy.size(); ++i) dx[index.argmax[i]] += dy[i];
  return dx;
}

Tensor scale_channels(const Tensor& x, const Tensor& s) {
  expect_shape(s, Shape{x.n(), x.c(), 1, 1}, "channel scaling");
  Tensor y(x.shape());
  const std::size_t plane = x.shape().plane();
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const Real k = s.at(n, c, 0, 0);
      const Real* px = x.plane(n, c);
      Real* py = y.plane(n, c);
      for (std::size_t p = 0; p < plane; ++p) py[p] = px[p] * k;
    }
  }
  return y;
}

Tensor scale_spatial(const Tensor& x, const Tensor& m) {
  expect_shape(m, Shape{x.n(), 1, x.h(), x.w()}, "spatial scaling");
  Tensor y(x.shape());
  const std::size_t plane = x.shape().plane();
  for (int n = 0; n < x.n(); ++n) {
    const Real* pm = m.plane(n, 0);
    for (int c = 0; c < x.c(); ++c) {
      const Real* px = x.plane(n, c);
      Real* py = y.plane(n, c);
      for (std::size_t p = 0; p < plane; ++p) py[p] = px[p] * pm[p];
    }
  }
  return y;
}

void scale_channels_backward(const Tensor& x, const Tensor& s,
                             const Tensor& dy, Tensor* dx, Tensor* ds) {
  if (dx) *dx = scale_channels(dy, s);
  if (ds) {
    *ds = Tensor(s.shape());
    const std::size_t plane = x.shape().plane();
    for (int n = 0; n < x.n(); ++n) {
      for (int c = 0; c < x.c(); ++c) {
        const Real* px = x.plane(n, c);
        const Real* pd = dy.plane(n, c);
        Real acc = 0;
        for (std::size_t p = 0; p < plane; ++p) acc += px[p] * pd[p];
        ds->at(n, c, 0, 0) = acc;
      }
    }
  }
}

void scale_spatial_backward(const Tensor& x, const Tensor& m, const Tensor& dy,
                            Tensor* dx, Tensor* dm) {
  if (dx) *dx = scale_spatial(dy, m);
  if (dm) {
    *dm = Tensor(m.shape());
    const std::size_t plane = x.shape().plane();
    for (int n = 0; n < x.n(); ++n) {
      Real* pm = dm->plane(n, 0);
      for (int c = 0; c < x.c(); ++c) {
        const Real* px = x.plane(n, c);
        const Real* pd = dy.plane(n, c);
        for (std::size_t p = 0; p < plane; ++p) pm[p] += px[p] * pd[p];
      }
    }
  }
}

Tensor concat_channels(const std::vector<const Tensor*>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front()->shape();
  int channels = 0;
  for (const Tensor* t : parts) {
    if (t->n() != first.n || t->h() != first.h || t->w() != first.w) {
      throw ShapeError("concat: " + t->shape().str() + " incompatible with " +
                       first.str());
    }
    channels += t->c();
  }
  Tensor y(first.n, channels, first.h, first.w);
  const std::size_t plane = first.plane();
  for (int n = 0; n < first.n; ++n) {
    Real* dst = y.plane(n, 0);
    for (const Tensor* t : parts) {
      const std::size_t len = plane * t->c();
      std::copy_n(t->plane(n, 0), len, dst);
      dst += len;
    }
  }
  return y;
}

std::vector<Tensor> split_channels(const Tensor& x,
                                   const std::vector<int>& widths) {
  int total = 0;
  for (int w : widths) total += w;
  if (total != x.c()) {
    throw ShapeError("split: widths sum to " + std::to_string(total) +
                     " but tensor has " + std::to_string(x.c()) + " channels");
  }
  std::vector<Tensor> out;
  const std::size_t plane = x.shape().plane();
  int offset = 0;
  for (int w : widths) {
    Tensor part(x.n(), w, x.h(), x.w());
    for (int n = 0; n < x.n(); ++n) {
      std::copy_n(x.plane(n, offset), plane * w, part.plane(n, 0));
    }
    out.push_back(std::move(part));
    offset += w;
  }
  return out;
}

void accumulate(Tensor& a, const Tensor& b) {
  if (b.empty()) return;
  if (a.empty()) {
    a = b;
  } else {
    a += b;
  }
}

}  // namespace acconet::nn
