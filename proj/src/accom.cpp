#include "acconet/accom.hpp"

namespace acconet::accom {

AccomConfig make_config(const ShapeSchedule& schedule, int level) {
  if (level < 1 || level > kLevels) {
    throw std::invalid_argument("ACCoM level must be in 1..5, got " +
                                std::to_string(level));
  }
  AccomConfig cfg;
  cfg.level = level;
  cfg.channels = schedule.channels_at(level);
  if (cfg.has_prev()) cfg.prev_channels = schedule.channels_at(level - 1);
  if (cfg.has_next()) cfg.next_channels = schedule.channels_at(level + 1);
  return cfg;
}

// ---------------------------------------------------------------------------

ChannelAttention::ChannelAttention(const std::string& name, int channels,
                                   int hidden)
    : fc1(name + ".fc1", channels, hidden), fc2(name + ".fc2", hidden, channels) {}

Tensor ChannelAttention::forward(const Tensor& f, Trace* trace) const {
  if (f.c() != channels()) {
    throw ShapeError("channel attention: channels mismatch, got " +
                     std::to_string(f.c()) + ", expected " +
                     std::to_string(channels()));
  }
  nn::PoolIndex idx;
  Tensor pooled = nn::spatial_max(f, &idx);
  Tensor hidden = nn::relu(fc1.forward(pooled));
  Tensor weights = nn::sigmoid(fc2.forward(hidden));
  if (trace) {
    trace->pool = std::move(idx);
    trace->pooled = std::move(pooled);
    trace->hidden = std::move(hidden);
    trace->weights = weights;
  }
  return weights;
}

Tensor ChannelAttention::backward(const Trace& trace, const Tensor& d_weights) {
  Tensor dz = nn::sigmoid_backward(trace.weights, d_weights);
  Tensor dh = fc2.backward(trace.hidden, dz);
  Tensor dp = fc1.backward(trace.pooled, nn::relu_backward(trace.hidden, dh));
  return nn::max_reduce_backward(trace.pool, dp);
}

void ChannelAttention::collect(nn::ParameterRefs& refs) {
  fc1.collect(refs);
  fc2.collect(refs);
}

void ChannelAttention::init(const nn::InitSpec& spec, nn::Rng& rng) {
  fc1.init(spec, rng);
  fc2.init(spec, rng);
}

// ---------------------------------------------------------------------------

SpatialAttention::SpatialAttention(const std::string& name, int kernel)
    : conv(name + ".conv", nn::ConvSpec{1, 1, kernel, 1, kernel / 2, true}) {}

Tensor SpatialAttention::forward(const Tensor& f, Trace* trace) const {
  nn::PoolIndex idx;
  Tensor pooled = nn::channel_max(f, trace ? &idx : nullptr);
  Tensor map = nn::sigmoid(conv.forward(pooled));
  if (trace) {
    trace->pool = std::move(idx);
    trace->pooled = std::move(pooled);
    trace->map = map;
  }
  return map;
}

Tensor SpatialAttention::backward(const Trace& trace, const Tensor& d_map) {
  Tensor dz = nn::sigmoid_backward(trace.map, d_map);
  return nn::max_reduce_backward(trace.pool, conv.backward(trace.pooled, dz));
}

void SpatialAttention::collect(nn::ParameterRefs& refs) { conv.collect(refs); }

void SpatialAttention::init(const nn::InitSpec& spec, nn::Rng& rng) {
  conv.init(spec, rng);
}

// ---------------------------------------------------------------------------

DilatedPyramid::DilatedPyramid(const std::string& name, const AccomConfig& cfg)
    : channels_(cfg.channels) {
  for (int i = 0; i < 4; ++i) {
    branches[i] = nn::ConvBnRelu(
        name + ".dconv" + std::to_string(i + 1),
        nn::ConvSpec{cfg.channels, cfg.channels, 3, cfg.rates[i], -1, true});
  }
  fuse = nn::ConvBnRelu(name + ".fuse",
                        nn::ConvSpec{4 * cfg.channels, cfg.channels, 3, 1, -1, true});
}

Tensor DilatedPyramid::forward(const Tensor& f_cur, bool training,
                               Trace* trace) {
  if (f_cur.c() != channels_) {
    throw ShapeError("dilated pyramid: channels mismatch, got " +
                     std::to_string(f_cur.c()) + ", expected " +
                     std::to_string(channels_));
  }
  std::array<Tensor, 4> parts;
  for (int i = 0; i < 4; ++i) {
    parts[i] = branches[i].forward(f_cur, training,
                                   trace ? &trace->branches[i] : nullptr);
  }
  Tensor cat = nn::concat_channels({&parts[0], &parts[1], &parts[2], &parts[3]});
  return fuse.forward(cat, training, trace ? &trace->fuse : nullptr);
}

Tensor DilatedPyramid::backward(const Trace& trace, const Tensor& d_out) {
  Tensor d_cat = fuse.backward(trace.fuse, d_out);
  auto d_parts = nn::split_channels(d_cat, {channels_, channels_, channels_, channels_});
  Tensor d_in;
  for (int i = 0; i < 4; ++i) {
    nn::accumulate(d_in, branches[i].backward(trace.branches[i], d_parts[i]));
  }
  return d_in;
}

void DilatedPyramid::collect(nn::ParameterRefs& refs) {
  for (auto& b : branches) b.collect(refs);
  fuse.collect(refs);
}

void DilatedPyramid::init(const nn::InitSpec& spec, nn::Rng& rng) {
  for (auto& b : branches) b.init(spec, rng);
  fuse.init(spec, rng);
}

// ---------------------------------------------------------------------------

std::string to_string(Branch b) {
  switch (b) {
    case Branch::local:
      return "local";
    case Branch::previous:
      return "previous-to-current";
    case Branch::subsequent:
      return "subsequent-to-current";
  }
  return "?";
}

Tensor previous_to_current(const SpatialAttention& sa, const Tensor& f_prev,
                           const Tensor& base, SpatialAttention::Trace* trace,
                           nn::PoolIndex* down) {
  Tensor pooled = nn::max_pool2(f_prev, down);
  if (pooled.h() != base.h() || pooled.w() != base.w() || pooled.n() != base.n()) {
    throw ShapeError("previous-to-current: downsampled previous feature " +
                     pooled.shape().str() + " does not align with current " +
                     base.shape().str());
  }
  return nn::scale_spatial(base, sa.forward(pooled, trace));
}

Tensor subsequent_to_current(const SpatialAttention& sa, const Tensor& f_next,
                             const Tensor& base,
                             SpatialAttention::Trace* trace) {
  if (f_next.n() != base.n() || 2 * f_next.h() != base.h() ||
      2 * f_next.w() != base.w()) {
    throw ShapeError("subsequent-to-current: upsampled next feature " +
                     Shape{f_next.n(), f_next.c(), 2 * f_next.h(), 2 * f_next.w()}.str() +
                     " does not align with current " + base.shape().str());
  }
  Tensor up = nn::resize_bilinear(f_next, base.h(), base.w());
  return nn::scale_spatial(base, sa.forward(up, trace));
}

Tensor local_branch(const ChannelAttention& ca, const SpatialAttention& sa,
                    const Tensor& f_c) {
  Tensor modulated = nn::scale_channels(f_c, ca.forward(f_c, nullptr));
  return nn::scale_spatial(f_c, sa.forward(modulated, nullptr));
}

// ---------------------------------------------------------------------------

Accom::Accom(const std::string& name, const AccomConfig& cfg) : cfg_(cfg) {
  if (cfg.rates != std::array<int, 4>{1, 2, 3, 4}) {
    throw std::invalid_argument("ACCoM dilation rates must be {1,2,3,4}");
  }
  if (cfg.local_branch) {
    pyramid = DilatedPyramid(name + ".pyramid", cfg);
    ca = ChannelAttention(name + ".ca", cfg.channels, cfg.hidden_width());
    sa_local = SpatialAttention(name + ".sa_local", cfg.spatial_kernel);
  }
  if (cfg.adjacent_branches) {
    if (cfg.has_prev()) sa_prev = SpatialAttention(name + ".sa_prev", cfg.spatial_kernel);
    if (cfg.has_next()) sa_next = SpatialAttention(name + ".sa_next", cfg.spatial_kernel);
  }
}

std::vector<Branch> Accom::active_branches() const {
  std::vector<Branch> out;
  if (cfg_.local_branch) out.push_back(Branch::local);
  if (cfg_.adjacent_branches) {
    if (cfg_.has_prev()) out.push_back(Branch::previous);
    if (cfg_.has_next()) out.push_back(Branch::subsequent);
  }
  return out;
}

Tensor Accom::forward(const Tensor* prev, const Tensor& cur, const Tensor* next,
                      bool training, Trace* trace) {
  const std::string where = "ACCoM-" + std::to_string(cfg_.level);
  if (cfg_.has_prev() != (prev != nullptr)) {
    throw DispatchError(where + (prev ? ": previous-level feature supplied but level "
                                        "1 has no previous branch"
                                      : ": previous-level feature required"));
  }
  if (cfg_.has_next() != (next != nullptr)) {
    throw DispatchError(where + (next ? ": subsequent-level feature supplied but "
                                        "level 5 has no subsequent branch"
                                      : ": subsequent-level feature required"));
  }
  if (cur.c() != cfg_.channels) {
    throw ShapeError(where + ": channels mismatch, got " + std::to_string(cur.c()) +
                     ", expected " + std::to_string(cfg_.channels));
  }
  if (prev && prev->c() != cfg_.prev_channels) {
    throw ShapeError(where + ": previous-level channels mismatch, got " +
                     std::to_string(prev->c()) + ", expected " +
                     std::to_string(cfg_.prev_channels));
  }
  if (next && next->c() != cfg_.next_channels) {
    throw ShapeError(where + ": subsequent-level channels mismatch, got " +
                     std::to_string(next->c()) + ", expected " +
                     std::to_string(cfg_.next_channels));
  }

  Tensor out = cur;  // f_e is the basic content
  Tensor base = cur;
  if (trace) {
    trace->f_cur = cur;
    trace->executed.clear();
  }
  if (cfg_.local_branch) {
    base = pyramid.forward(cur, training, trace ? &trace->pyramid : nullptr);
    Tensor w = ca.forward(base, trace ? &trace->ca : nullptr);
    Tensor modulated = nn::scale_channels(base, w);
    Tensor map = sa_local.forward(modulated, trace ? &trace->sa_local : nullptr);
    out += nn::scale_spatial(base, map);
    if (trace) {
      trace->ca_scaled = std::move(modulated);
      trace->executed.push_back(Branch::local);
    }
  }
  if (cfg_.adjacent_branches) {
    if (prev) {
      out += previous_to_current(sa_prev, *prev, base,
                                 trace ? &trace->sa_prev : nullptr,
                                 trace ? &trace->down : nullptr);
      if (trace) {
        trace->prev_shape = prev->shape();
        trace->executed.push_back(Branch::previous);
      }
    }
    if (next) {
      out += subsequent_to_current(sa_next, *next, base,
                                   trace ? &trace->sa_next : nullptr);
      if (trace) {
        trace->next_shape = next->shape();
        trace->executed.push_back(Branch::subsequent);
      }
    }
  }
  if (trace) trace->base = std::move(base);
  return out;
}

Accom::Grads Accom::backward(const Trace& trace, const Tensor& d_out) {
  Grads g;
  g.d_cur = d_out;
  Tensor d_base;
  const Tensor& base = trace.base;
  for (Branch b : trace.executed) {
    if (b == Branch::local) {
      const Tensor& map = trace.sa_local.map;
      Tensor d_fc, d_map;
      nn::scale_spatial_backward(base, map, d_out, &d_fc, &d_map);
      Tensor d_mod = sa_local.backward(trace.sa_local, d_map);
      Tensor d_fc2, d_w;
      nn::scale_channels_backward(base, trace.ca.weights, d_mod, &d_fc2, &d_w);
      d_fc += d_fc2;
      d_fc += ca.backward(trace.ca, d_w);
      nn::accumulate(d_base, d_fc);
    } else {
      const bool is_prev = b == Branch::previous;
      const SpatialAttention::Trace& st = is_prev ? trace.sa_prev : trace.sa_next;
      Tensor d_part, d_map;
      nn::scale_spatial_backward(base, st.map, d_out, &d_part, &d_map);
      nn::accumulate(d_base, d_part);
      Tensor d_src = (is_prev ? sa_prev : sa_next).backward(st, d_map);
      if (is_prev) {
        g.d_prev = nn::max_pool2_backward(trace.down, d_src);
      } else {
        g.d_next = nn::resize_bilinear_backward(d_src, trace.next_shape);
      }
    }
  }
  if (!d_base.empty()) {
    if (cfg_.local_branch) {
      g.d_cur += pyramid.backward(trace.pyramid, d_base);
    } else {
      g.d_cur += d_base;
    }
  }
  return g;
}

void Accom::collect(nn::ParameterRefs& refs) {
  if (cfg_.local_branch) {
    pyramid.collect(refs);
    ca.collect(refs);
    sa_local.collect(refs);
  }
  if (cfg_.adjacent_branches) {
    if (cfg_.has_prev()) sa_prev.collect(refs);
    if (cfg_.has_next()) sa_next.collect(refs);
  }
}

void Accom::init(const nn::InitSpec& spec, nn::Rng& rng) {
  if (cfg_.local_branch) {
    pyramid.init(spec, rng);
    ca.init(spec, rng);
    sa_local.init(spec, rng);
  }
  if (cfg_.adjacent_branches) {
    if (cfg_.has_prev()) sa_prev.init(spec, rng);
    if (cfg_.has_next()) sa_next.init(spec, rng);
  }
}

}  // namespace acconet::accom
