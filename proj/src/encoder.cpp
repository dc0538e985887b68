#include "acconet/encoder.hpp"

#include <sstream>

#include "acconet/archive.hpp"

namespace acconet {

void ShapeSchedule::validate() const {
  if (input_size <= 0 || input_size % (1 << (kLevels - 1)) != 0) {
    throw std::invalid_argument("input size " + std::to_string(input_size) +
                                " is not a positive multiple of 16");
  }
  for (int c : channels) {
    if (c <= 0) throw std::invalid_argument("channel widths must be positive");
  }
}

}  // namespace acconet

namespace acconet::encoder {

namespace {

struct VggTrace : BackboneTrace {
  // Per block: the input of each conv, then the block output.
  std::vector<std::vector<Tensor>> conv_inputs;
  std::vector<Tensor> block_outputs;
  std::vector<nn::PoolIndex> pools;  // pools[t] feeds block t + 1
};

}  // namespace

Vgg16Backbone::Vgg16Backbone(ShapeSchedule schedule)
    : schedule_(schedule) {
  schedule_.validate();
  int in = 3;
  for (int b = 0; b < kLevels; ++b) {
    Block block;
    const int out = schedule_.channels[b];
    for (int k = 0; k < kConvsPerBlock[b]; ++k) {
      const std::string name = "encoder.block" + std::to_string(b + 1) +
                               ".conv" + std::to_string(k + 1);
      block.convs.emplace_back(name, nn::ConvSpec{in, out, 3, 1, 1, true});
      in = out;
    }
    blocks_.push_back(std::move(block));
  }
}

LevelTensors Vgg16Backbone::extract(const Tensor& images, bool training,
                                    std::unique_ptr<BackboneTrace>* trace) {
  (void)training;  // no normalization layers in the backbone
  auto vt = trace ? std::make_unique<VggTrace>() : nullptr;
  LevelTensors out;
  Tensor x = images;
  for (int b = 0; b < kLevels; ++b) {
    if (b > 0) {
      nn::PoolIndex idx;
      x = nn::max_pool2(x, vt ? &idx : nullptr);
      if (vt) vt->pools.push_back(std::move(idx));
    }
    std::vector<Tensor> inputs;
    for (auto& conv : blocks_[b].convs) {
      if (vt) inputs.push_back(x);
      x = nn::relu(conv.forward(x));
    }
    if (vt) {
      vt->conv_inputs.push_back(std::move(inputs));
      vt->block_outputs.push_back(x);
    }
    out[b] = x;
  }
  if (trace) *trace = std::move(vt);
  return out;
}

Tensor Vgg16Backbone::backward(const BackboneTrace& trace,
                               const LevelTensors& grads) {
  const auto& vt = dynamic_cast<const VggTrace&>(trace);
  Tensor dx;  // gradient flowing into the output of block b from above
  for (int b = kLevels - 1; b >= 0; --b) {
    nn::accumulate(dx, grads[b]);
    if (dx.empty()) continue;
    auto& convs = blocks_[b].convs;
    for (int k = static_cast<int>(convs.size()) - 1; k >= 0; --k) {
      const Tensor& y = k + 1 < static_cast<int>(convs.size())
                            ? vt.conv_inputs[b][k + 1]
                            : vt.block_outputs[b];
      dx = convs[k].backward(vt.conv_inputs[b][k], nn::relu_backward(y, dx));
    }
    if (b > 0) {
      dx = nn::max_pool2_backward(vt.pools[b - 1], dx);
    }
  }
  return dx;
}

void Vgg16Backbone::collect(nn::ParameterRefs& refs) {
  for (auto& block : blocks_)
    for (auto& conv : block.convs) conv.collect(refs);
}

void Vgg16Backbone::init(const nn::InitSpec& spec, nn::Rng& rng) {
  for (auto& block : blocks_)
    for (auto& conv : block.convs) conv.init(spec, rng);
}

std::vector<std::string> Vgg16Backbone::layer_names() const {
  std::vector<std::string> names;
  for (int b = 0; b < kLevels; ++b)
    for (int k = 0; k < kConvsPerBlock[b]; ++k)
      names.push_back("encoder.block" + std::to_string(b + 1) + ".conv" +
                      std::to_string(k + 1));
  return names;
}

void validate_features(const LevelTensors& features,
                       const ShapeSchedule& schedule, int batch) {
  for (int t = 1; t <= kLevels; ++t) {
    expect_shape(features[t - 1], schedule.feature_shape(t, batch),
                 "encoder level " + std::to_string(t));
  }
}

LevelTensors extract_features(Backbone& backbone, const Tensor& images,
                              bool training,
                              std::unique_ptr<BackboneTrace>* trace) {
  const ShapeSchedule& s = backbone.schedule();
  if (images.n() <= 0) throw ShapeError("image batch: batch dimension is empty");
  expect_shape(images, s.input_shape(images.n()), "image batch");
  LevelTensors f = backbone.extract(images, training, trace);
  validate_features(f, s, images.n());
  return f;
}

std::unique_ptr<Vgg16Backbone> init_backbone(const ShapeSchedule& schedule,
                                             const BackboneSource& source) {
  auto backbone = std::make_unique<Vgg16Backbone>(schedule);
  nn::Rng rng(source.seed);
  backbone->init(source.init, rng);
  if (source.kind == BackboneSource::Kind::random) return backbone;

  const io::TensorArchive ar = io::load_archive(source.path);
  nn::ParameterRefs refs;
  backbone->collect(refs);
  std::vector<std::string> unmatched;
  for (nn::Parameter* p : refs.params) {
    auto it = ar.tensors.find(p->name);
    const std::string layer = p->name.substr(0, p->name.rfind('.'));
    if (it == ar.tensors.end() || !(it->second.shape() == p->value.shape())) {
      if (unmatched.empty() || unmatched.back() != layer) unmatched.push_back(layer);
      continue;
    }
    p->value = it->second;
  }
  if (!unmatched.empty()) {
    std::ostringstream os;
    os << "pretrained weights " << source.path.string()
       << " do not match the backbone topology; unmatched layers:";
    for (const auto& l : unmatched) os << " " << l;
    throw WeightMismatchError(os.str(), unmatched);
  }
  return backbone;
}

void save_backbone(const std::filesystem::path& path, Vgg16Backbone& backbone) {
  io::TensorArchive ar;
  ar.meta["kind"] = backbone.kind();
  nn::ParameterRefs refs;
  backbone.collect(refs);
  for (nn::Parameter* p : refs.params) ar.tensors[p->name] = p->value;
  io::save_archive(path, ar);
}

}  // namespace acconet::encoder
