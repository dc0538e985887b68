#include "acconet/model.hpp"

#include <algorithm>
#include <cctype>

namespace acconet {

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::full:
      return "full";
    case Ablation::baseline:
      return "Baseline";
    case Ablation::accom_only:
      return "+ACCoM";
    case Ablation::bab_only:
      return "+BAB";
    case Ablation::no_local:
      return "w/o LB";
    case Ablation::no_adjacent:
      return "w/o AB";
    case Ablation::direct:
      return "w/ DC";
    case Ablation::normal_conv:
      return "w/ NC";
  }
  return "?";
}

Ablation parse_ablation(const std::string& s) {
  std::string k;
  for (char ch : s) {
    if (!std::isspace(static_cast<unsigned char>(ch)) && ch != '_' && ch != '-' &&
        ch != '/') {
      k += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
  }
  if (k == "full" || k == "ours" || k == "acconet") return Ablation::full;
  if (k == "baseline") return Ablation::baseline;
  if (k == "+accom" || k == "accomonly" || k == "baseline+accom") return Ablation::accom_only;
  if (k == "+bab" || k == "babonly" || k == "baseline+bab") return Ablation::bab_only;
  if (k == "wolb" || k == "nolocal") return Ablation::no_local;
  if (k == "woab" || k == "noadjacent") return Ablation::no_adjacent;
  if (k == "wdc" || k == "direct") return Ablation::direct;
  if (k == "wnc" || k == "normalconv") return Ablation::normal_conv;
  throw std::invalid_argument("unknown ablation '" + s + "'");
}

const std::vector<Ablation>& all_ablations() {
  static const std::vector<Ablation> all{
      Ablation::full,     Ablation::baseline,    Ablation::accom_only,
      Ablation::bab_only, Ablation::no_local,    Ablation::no_adjacent,
      Ablation::direct,   Ablation::normal_conv};
  return all;
}

ModelConfig ModelConfig::for_ablation(Ablation a, ShapeSchedule schedule) {
  ModelConfig cfg;
  cfg.schedule = schedule;
  using decoder::BabMode;
  switch (a) {
    case Ablation::full:
      break;
    case Ablation::baseline:
      cfg.accom = false;
      cfg.bab_mode = BabMode::plain;
      break;
    case Ablation::accom_only:
      cfg.bab_mode = BabMode::plain;
      break;
    case Ablation::bab_only:
      cfg.accom = false;
      break;
    case Ablation::no_local:
      cfg.local_branch = false;
      break;
    case Ablation::no_adjacent:
      cfg.adjacent_branches = false;
      break;
    case Ablation::direct:
      cfg.bab_mode = BabMode::direct;
      break;
    case Ablation::normal_conv:
      cfg.bab_mode = BabMode::normal_conv;
      break;
  }
  return cfg;
}

AcconetModel::AcconetModel(ModelConfig cfg,
                           std::unique_ptr<encoder::Backbone> backbone)
    : cfg_(std::move(cfg)),
      backbone_(std::move(backbone)),
      decoder_(cfg_.schedule, cfg_.bab_mode) {
  if (!backbone_) throw std::invalid_argument("model requires a backbone");
  if (!(backbone_->schedule() == cfg_.schedule)) {
    throw std::invalid_argument(
        "backbone schedule does not match the model's declared schedule");
  }
  if (!cfg_.local_branch && !cfg_.adjacent_branches) {
    throw std::invalid_argument(
        "ACCoM needs at least one branch; disable the module instead");
  }
  if (cfg_.accom) {
    for (int t = 1; t <= kLevels; ++t) {
      accom::AccomConfig ac = accom::make_config(cfg_.schedule, t);
      ac.local_branch = cfg_.local_branch;
      ac.adjacent_branches = cfg_.adjacent_branches;
      ac.reduction = cfg_.ca_reduction;
      ac.spatial_kernel = cfg_.sa_kernel;
      accoms_.emplace_back("accom" + std::to_string(t), ac);
    }
  }
}

void AcconetModel::init_added_layers(std::uint64_t seed) {
  nn::Rng rng(seed);
  for (auto& a : accoms_) a.init(cfg_.init, rng);
  decoder_.init(cfg_.init, rng);
}

AcconetModel::Output AcconetModel::forward(const Tensor& images, bool training,
                                           Trace* trace) {
  Output out;
  out.features = encoder::extract_features(*backbone_, images, training,
                                           trace ? &trace->encoder : nullptr);
  const LevelTensors& f = out.features;
  for (int t = 1; t <= kLevels; ++t) {
    if (!cfg_.accom) {
      out.accom[t - 1] = f[t - 1];
      continue;
    }
    const Tensor* prev = t > 1 ? &f[t - 2] : nullptr;
    const Tensor* next = t < kLevels ? &f[t] : nullptr;
    out.accom[t - 1] = accoms_[t - 1].forward(prev, f[t - 1], next, training,
                                              trace ? &trace->accom[t - 1] : nullptr);
  }
  out.decoder = decoder_.decode(out.accom, training,
                                trace ? &trace->decoder : nullptr);
  return out;
}

void AcconetModel::backward(const Trace& trace, const LevelTensors& d_saliency,
                            Tensor* d_images) {
  LevelTensors d_accom = decoder_.backward(trace.decoder, d_saliency);
  LevelTensors d_features;
  if (!cfg_.accom) {
    d_features = std::move(d_accom);
  } else {
    for (int t = 1; t <= kLevels; ++t) {
      if (d_accom[t - 1].empty()) continue;
      accom::Accom::Grads g = accoms_[t - 1].backward(trace.accom[t - 1], d_accom[t - 1]);
      nn::accumulate(d_features[t - 1], g.d_cur);
      if (t > 1) nn::accumulate(d_features[t - 2], g.d_prev);
      if (t < kLevels) nn::accumulate(d_features[t], g.d_next);
    }
  }
  Tensor di = backbone_->backward(*trace.encoder, d_features);
  if (d_images) *d_images = std::move(di);
}

nn::ParameterRefs AcconetModel::parameters() {
  nn::ParameterRefs refs;
  backbone_->collect(refs);
  for (auto& a : accoms_) a.collect(refs);
  decoder_.collect(refs);
  return refs;
}

void AcconetModel::zero_grad() {
  for (nn::Parameter* p : parameters().params) p->zero_grad();
}

}  // namespace acconet
