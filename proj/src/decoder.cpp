#include "acconet/decoder.hpp"

namespace acconet::decoder {

std::string to_string(BabMode m) {
  switch (m) {
    case BabMode::full:
      return "full";
    case BabMode::direct:
      return "direct";
    case BabMode::normal_conv:
      return "normal-conv";
    case BabMode::plain:
      return "plain";
  }
  return "?";
}

BabMode parse_bab_mode(const std::string& s) {
  if (s == "full") return BabMode::full;
  if (s == "direct") return BabMode::direct;
  if (s == "normal-conv") return BabMode::normal_conv;
  if (s == "plain") return BabMode::plain;
  throw std::invalid_argument("unknown bab_mode '" + s +
                              "' (expected full|direct|normal-conv|plain)");
}

BabConfig make_bab_config(const ShapeSchedule& schedule, int level,
                          BabMode mode) {
  if (level < 1 || level > kLevels) {
    throw std::invalid_argument("BAB level must be in 1..5, got " +
                                std::to_string(level));
  }
  BabConfig cfg;
  cfg.level = level;
  cfg.channels = schedule.channels_at(level);
  cfg.upstream_channels = level < kLevels ? schedule.channels_at(level + 1) : 0;
  cfg.rate1 = level <= 3 ? 5 : 3;
  cfg.rate2 = level <= 3 ? 3 : 2;
  if (mode == BabMode::normal_conv) cfg.rate1 = cfg.rate2 = 1;
  cfg.size = schedule.size_at(level);
  cfg.mode = mode;
  return cfg;
}

// ---------------------------------------------------------------------------

Bab::Bab(const std::string& name, const BabConfig& cfg) : cfg_(cfg) {
  const int c = cfg.channels;
  if (cfg.has_upstream()) {
    deconv = nn::Deconv2x2(name + ".deconv", cfg.upstream_channels, c);
    deconv_bn = nn::BatchNorm2d(name + ".deconv_bn", c);
  }
  const int first_in = cfg.has_upstream() ? 2 * c : c;
  cascade[0] = nn::ConvBnRelu(name + ".cascade1", {first_in, c, 3, 1, -1, true});
  cascade[1] = nn::ConvBnRelu(name + ".cascade2", {c, c, 3, 1, -1, true});
  cascade[2] = nn::ConvBnRelu(name + ".cascade3", {c, c, 3, 1, -1, true});
  if (has_bif_convs()) {
    bif[0] = nn::ConvBnRelu(name + ".bif1", {c, c, 3, cfg.rate1, -1, true});
    bif[1] = nn::ConvBnRelu(name + ".bif2", {c, c, 3, cfg.rate2, -1, true});
  }
  if (cfg.mode != BabMode::plain) {
    fuse = nn::ConvBnRelu(name + ".fuse", {3 * c, c, 3, 1, -1, true});
  }
}

Tensor Bab::forward(const Tensor& f_accom, const Tensor* upstream,
                    bool training, Trace* trace) {
  const std::string where = "BAB-" + std::to_string(cfg_.level);
  if (cfg_.has_upstream() != (upstream != nullptr)) {
    throw DispatchError(where + (upstream ? ": level 5 takes no upstream feature"
                                          : ": upstream feature from the coarser "
                                            "block is required"));
  }
  expect_shape(f_accom, Shape{f_accom.n(), cfg_.channels, cfg_.size, cfg_.size},
               where + " input");
  Tensor x = f_accom;
  if (upstream) {
    expect_shape(*upstream,
                 Shape{f_accom.n(), cfg_.upstream_channels, cfg_.size / 2,
                       cfg_.size / 2},
                 where + " upstream");
    Tensor up = nn::relu(deconv_bn.forward(deconv.forward(*upstream), training,
                                           trace ? &trace->deconv_bn : nullptr));
    x = nn::concat_channels({&f_accom, &up});
    if (trace) {
      trace->upstream = *upstream;
      trace->up = std::move(up);
    }
  }
  std::array<Tensor, 3> bc;
  for (int l = 0; l < 3; ++l) {
    bc[l] = cascade[l].forward(l == 0 ? x : bc[l - 1], training,
                               trace ? &trace->cascade[l] : nullptr);
  }
  if (cfg_.mode == BabMode::plain) return bc[2];

  std::array<Tensor, 2> bf;
  for (int l = 0; l < 2; ++l) {
    bf[l] = has_bif_convs()
                ? bif[l].forward(bc[l], training, trace ? &trace->bif[l] : nullptr)
                : bc[l];
  }
  Tensor cat = nn::concat_channels({&bf[0], &bf[1], &bc[2]});
  return fuse.forward(cat, training, trace ? &trace->fuse : nullptr);
}

Bab::Grads Bab::backward(const Trace& trace, const Tensor& d_out) {
  const int c = cfg_.channels;
  std::array<Tensor, 3> d_bc;
  if (cfg_.mode == BabMode::plain) {
    d_bc[2] = d_out;
  } else {
    auto parts = nn::split_channels(fuse.backward(trace.fuse, d_out), {c, c, c});
    for (int l = 0; l < 2; ++l) {
      d_bc[l] = has_bif_convs() ? bif[l].backward(trace.bif[l], parts[l])
                                : std::move(parts[l]);
    }
    d_bc[2] = std::move(parts[2]);
  }
  Tensor d_x;
  for (int l = 2; l >= 0; --l) {
    Tensor d_in = cascade[l].backward(trace.cascade[l], d_bc[l]);
    if (l > 0) {
      nn::accumulate(d_bc[l - 1], d_in);
    } else {
      d_x = std::move(d_in);
    }
  }
  Grads g;
  if (!cfg_.has_upstream()) {
    g.d_accom = std::move(d_x);
    return g;
  }
  auto halves = nn::split_channels(d_x, {c, c});
  g.d_accom = std::move(halves[0]);
  Tensor d_up = deconv_bn.backward(trace.deconv_bn, nn::relu_backward(trace.up, halves[1]));
  g.d_upstream = deconv.backward(trace.upstream, d_up);
  return g;
}

void Bab::collect(nn::ParameterRefs& refs) {
  if (cfg_.has_upstream()) {
    deconv.collect(refs);
    deconv_bn.collect(refs);
  }
  for (auto& c : cascade) c.collect(refs);
  if (has_bif_convs())
    for (auto& b : bif) b.collect(refs);
  if (cfg_.mode != BabMode::plain) fuse.collect(refs);
}

void Bab::init(const nn::InitSpec& spec, nn::Rng& rng) {
  if (cfg_.has_upstream()) deconv.init(spec, rng);
  for (auto& c : cascade) c.init(spec, rng);
  if (has_bif_convs())
    for (auto& b : bif) b.init(spec, rng);
  if (cfg_.mode != BabMode::plain) fuse.init(spec, rng);
}

// ---------------------------------------------------------------------------

SupervisionHead::SupervisionHead(const std::string& name, int channels,
                                 int target_size)
    : conv(name + ".conv", {channels, 1, 3, 1, -1, true}),
      target_size_(target_size) {}

Tensor SupervisionHead::forward(const Tensor& f_bab, Trace* trace) const {
  Tensor logits = conv.forward(f_bab);
  Tensor s = nn::sigmoid(nn::resize_bilinear(logits, target_size_, target_size_));
  if (trace) {
    trace->x = f_bab;
    trace->logits = std::move(logits);
    trace->saliency = s;
  }
  return s;
}

Tensor SupervisionHead::backward(const Trace& trace, const Tensor& d_saliency) {
  Tensor d_up = nn::sigmoid_backward(trace.saliency, d_saliency);
  return conv.backward(trace.x,
                       nn::resize_bilinear_backward(d_up, trace.logits.shape()));
}

void SupervisionHead::collect(nn::ParameterRefs& refs) { conv.collect(refs); }

void SupervisionHead::init(const nn::InitSpec& spec, nn::Rng& rng) {
  conv.init(spec, rng);
}

// ---------------------------------------------------------------------------

Decoder::Decoder(const ShapeSchedule& schedule, BabMode mode)
    : schedule_(schedule) {
  for (int t = 1; t <= kLevels; ++t) {
    const std::string name = "decoder.bab" + std::to_string(t);
    babs[t - 1] = Bab(name, make_bab_config(schedule, t, mode));
    heads[t - 1] = SupervisionHead("decoder.head" + std::to_string(t),
                                   schedule.channels_at(t), schedule.input_size);
  }
}

DecoderState Decoder::decode(const LevelTensors& accom, bool training,
                             Trace* trace) {
  DecoderState st;
  int step = 0;
  for (int t = kLevels; t >= 1; --t) {
    const Tensor* upstream = t < kLevels ? &st.f_bab[t] : nullptr;
    st.f_bab[t - 1] = babs[t - 1].forward(accom[t - 1], upstream, training,
                                          trace ? &trace->bab[t - 1] : nullptr);
    st.saliency[t - 1] = heads[t - 1].forward(
        st.f_bab[t - 1], trace ? &trace->head[t - 1] : nullptr);
    if (trace) trace->order[step] = t;
    ++step;
  }
  return st;
}

LevelTensors Decoder::backward(const Trace& trace,
                               const LevelTensors& d_saliency) {
  LevelTensors d_bab;
  for (int t = 1; t <= kLevels; ++t) {
    if (!d_saliency[t - 1].empty()) {
      d_bab[t - 1] = heads[t - 1].backward(trace.head[t - 1], d_saliency[t - 1]);
    }
  }
  LevelTensors d_accom;
  for (int t = 1; t <= kLevels; ++t) {
    if (d_bab[t - 1].empty()) continue;
    Bab::Grads g = babs[t - 1].backward(trace.bab[t - 1], d_bab[t - 1]);
    d_accom[t - 1] = std::move(g.d_accom);
    if (t < kLevels) nn::accumulate(d_bab[t], g.d_upstream);
  }
  return d_accom;
}

void Decoder::collect(nn::ParameterRefs& refs) {
  for (int t = kLevels; t >= 1; --t) {
    babs[t - 1].collect(refs);
    heads[t - 1].collect(refs);
  }
}

void Decoder::init(const nn::InitSpec& spec, nn::Rng& rng) {
  for (int t = kLevels; t >= 1; --t) {
    babs[t - 1].init(spec, rng);
    heads[t - 1].init(spec, rng);
  }
}

}  // namespace acconet::decoder
